use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("probability {0} lies outside [0, 1]")]
    ProbabilityOutOfRange(f64),

    #[error("bad mixture weights: {0}")]
    BadWeights(String),

    #[error("expected a {expected} vector, found a {found} vector")]
    KindMismatch {
        expected: &'static str,
        found: &'static str,
    },

    #[error("no state of the space attains path distinguishability {0}")]
    EmptySlice(f64),

    #[error("measurements do not determine independent plane coordinates: {0}")]
    NotAPlaneFragment(String),

    #[error("quadruple is not an A1xA1 orbit (symmetry residual {symmetry:e}, equivalence residual {equivalence:e})")]
    OrbitInvalid { symmetry: f64, equivalence: f64 },

    #[error("convex hull of the realized states admits no exact orbit")]
    InfeasibleOrbit,

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("tomography did not converge within {restarts} restarts")]
    NoConvergence { restarts: usize },

    #[error("singular gauge map: {0}")]
    SingularMap(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for errors raised by a numerical solver rather than by bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::SolverFailure(_) | Error::NoConvergence { .. } | Error::InfeasibleOrbit
        )
    }
}
