//! A1xA1 orbits of states relative to a pair of binary measurements.
//!
//! A quadruple `s1..s4` is an orbit when the expectations follow the sign
//! pattern `(+,+), (+,-), (-,-), (-,+)` with equal magnitudes and the equal
//! mixtures `s1/2 + s3/2` and `s2/2 + s4/2` coincide.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpt::{plane_indices, BinaryMeasurement, GptVector, StateSpaceModel, MEMBERSHIP_TOL};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitQuadruple {
    pub states: [GptVector; 4],
    pub m: BinaryMeasurement,
    pub m_prime: BinaryMeasurement,
}

impl OrbitQuadruple {
    pub fn new(
        states: [GptVector; 4],
        m: BinaryMeasurement,
        m_prime: BinaryMeasurement,
    ) -> Result<Self> {
        let q = OrbitQuadruple { states, m, m_prime };
        q.check_dims()?;
        Ok(q)
    }

    pub fn dim(&self) -> usize {
        self.m.dim()
    }

    fn check_dims(&self) -> Result<()> {
        let dim = self.m.dim();
        let found = std::iter::once(self.m_prime.dim())
            .chain(self.states.iter().map(GptVector::dim))
            .find(|&d| d != dim);
        match found {
            Some(found) => Err(Error::DimensionMismatch {
                expected: dim,
                found,
            }),
            None => Ok(()),
        }
    }

    /// `(<M>, <M'>)` for each state, in order.
    pub fn expectations(&self) -> Result<[(f64, f64); 4]> {
        self.check_dims()?;
        let mut out = [(0.0, 0.0); 4];
        for (o, s) in out.iter_mut().zip(&self.states) {
            *o = (self.m.expectation(s)?, self.m_prime.expectation(s)?);
        }
        Ok(out)
    }

    /// The quadruple with its states reordered: position `k` holds input
    /// state `assignment[k]`.
    pub fn permuted(&self, assignment: [usize; 4]) -> Self {
        OrbitQuadruple {
            states: assignment.map(|i| self.states[i].clone()),
            m: self.m.clone(),
            m_prime: self.m_prime.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitReport {
    /// Largest violation of the six expectation equalities.
    pub symmetry_residual: f64,
    /// Max-norm of `s1/2 + s3/2 - s2/2 - s4/2`.
    pub equivalence_residual: f64,
    pub pass: bool,
    pub tol: f64,
    /// Input index placed at each orbit position by the best relabeling.
    pub assignment: [usize; 4],
}

fn symmetry_residual(e: &[(f64, f64); 4]) -> f64 {
    let (a, b): (Vec<f64>, Vec<f64>) = e.iter().copied().unzip();
    [
        (a[0] - a[1]).abs(),
        (a[1] + a[2]).abs(),
        (a[2] - a[3]).abs(),
        (b[0] + b[1]).abs(),
        (b[1] - b[2]).abs(),
        (b[2] + b[3]).abs(),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

fn equivalence_residual(states: [&GptVector; 4]) -> f64 {
    let [s1, s2, s3, s4] = states.map(GptVector::coords);
    (0..s1.len())
        .map(|k| (0.5 * (s1[k] + s3[k]) - 0.5 * (s2[k] + s4[k])).abs())
        .fold(0.0, f64::max)
}

/// All 24 orderings, identity first.
fn permutations() -> Vec<[usize; 4]> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let mut seen = [false; 4];
                    p.iter().for_each(|&i| seen[i] = true);
                    if seen.iter().all(|&x| x) {
                        out.push(p);
                    }
                }
            }
        }
    }
    out
}

/// Evaluates both orbit conditions under every relabeling of the four states
/// and reports the best one (ties go to the earliest ordering).
pub fn check_orbit(q: &OrbitQuadruple, tol: f64) -> Result<OrbitReport> {
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "tolerance must be > 0, got {tol}"
        )));
    }
    let e = q.expectations()?;
    let mut best: Option<(f64, f64, [usize; 4])> = None;
    for p in permutations() {
        let sym = symmetry_residual(&p.map(|i| e[i]));
        let eqv = equivalence_residual(p.map(|i| &q.states[i]));
        let score = sym.max(eqv);
        if best.is_none_or(|(s, v, _)| score < s.max(v)) {
            best = Some((sym, eqv, p));
        }
    }
    let (symmetry_residual, equivalence_residual, assignment) = best.expect("24 orderings");
    Ok(OrbitReport {
        symmetry_residual,
        equivalence_residual,
        pass: symmetry_residual <= tol && equivalence_residual <= tol,
        tol,
        assignment,
    })
}

/// Plane coefficients of an observable, after checking it only touches the
/// unit, `x` and `z` coordinates.
fn plane_functional(m: &BinaryMeasurement) -> Result<(f64, [f64; 2])> {
    let c = m.observable();
    let (xi, zi) = plane_indices(c.len());
    if let Some((k, v)) = c
        .iter()
        .enumerate()
        .find(|&(k, v)| k != 0 && k != xi && k != zi && v.abs() > 1e-12)
    {
        return Err(Error::NotAPlaneFragment(format!(
            "measurement '{}' has weight {v} on out-of-plane coordinate {k}",
            m.label()
        )));
    }
    Ok((c[0], [c[xi], c[zi]]))
}

/// Builds `s2, s3, s4` by flipping the signs of `<M>` and `<M'>` of `s1`
/// within the plane, keeping every other coordinate fixed. Returns `None` when
/// any of the three falls outside `space`.
pub fn complete_orbit(
    s1: &GptVector,
    m: &BinaryMeasurement,
    m_prime: &BinaryMeasurement,
    space: &StateSpaceModel,
) -> Result<Option<[GptVector; 3]>> {
    for d in [m.dim(), m_prime.dim(), space.dim()] {
        if d != s1.dim() {
            return Err(Error::DimensionMismatch {
                expected: s1.dim(),
                found: d,
            });
        }
    }
    let (m0, n1) = plane_functional(m)?;
    let (m0p, n2) = plane_functional(m_prime)?;
    let det = n1[0] * n2[1] - n1[1] * n2[0];
    if det.abs() < 1e-12 {
        return Err(Error::NotAPlaneFragment(
            "the two measurements are not linearly independent on the plane".into(),
        ));
    }
    let a = m.expectation(s1)?;
    let b = m_prime.expectation(s1)?;
    let (xi, zi) = plane_indices(s1.dim());
    let reflect = |sa: f64, sb: f64| {
        let (ra, rb) = (sa * a - m0, sb * b - m0p);
        let x = (ra * n2[1] - rb * n1[1]) / det;
        let z = (rb * n1[0] - ra * n2[0]) / det;
        let mut coords = s1.coords().to_vec();
        coords[xi] = x;
        coords[zi] = z;
        GptVector::state_from_tail(&coords[1..])
    };
    let completed = [reflect(1.0, -1.0), reflect(-1.0, -1.0), reflect(-1.0, 1.0)];
    if completed.iter().all(|s| space.contains(s, MEMBERSHIP_TOL)) {
        Ok(Some(completed))
    } else {
        Ok(None)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SymmetryScan {
    pub symmetric: bool,
    /// Sampled states whose orbit leaves the space, in sampling order.
    pub counterexamples: Vec<GptVector>,
    pub samples: usize,
}

/// Checks orbit realizability for boundary and interior samples of `space`:
/// `grid` boundary directions, each scaled by `k / grid` for `k = 1..=grid`,
/// plus the maximally mixed state.
pub fn symmetry_scan(
    space: &StateSpaceModel,
    m: &BinaryMeasurement,
    m_prime: &BinaryMeasurement,
    grid: usize,
) -> Result<SymmetryScan> {
    symmetry_scan_with(space, m, m_prime, grid, Exec::default())
}

pub fn symmetry_scan_with(
    space: &StateSpaceModel,
    m: &BinaryMeasurement,
    m_prime: &BinaryMeasurement,
    grid: usize,
    exec: Exec,
) -> Result<SymmetryScan> {
    if grid == 0 {
        return Err(Error::InvalidParameter("scan grid must be >= 1".into()));
    }
    let boundary = space.boundary_points(grid);
    let mut samples = vec![GptVector::maximally_mixed(space.dim())];
    for k in (1..=grid).rev() {
        let scale = k as f64 / grid as f64;
        samples.extend(
            boundary
                .iter()
                .map(|p| space.plane_state(scale * p[0], scale * p[1])),
        );
    }
    let outcomes = exec.map(&samples, |s| complete_orbit(s, m, m_prime, space));
    let mut counterexamples = Vec::new();
    for (s, outcome) in samples.iter().zip(outcomes) {
        if outcome?.is_none() {
            counterexamples.push(s.clone());
        }
    }
    Ok(SymmetryScan {
        symmetric: counterexamples.is_empty(),
        counterexamples,
        samples: samples.len(),
    })
}
