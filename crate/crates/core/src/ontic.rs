//! Noncontextual ontological models for an orbit quadruple, decided by LP.
//!
//! The ontic space is a finite list of value assignments `(m, m')` to the two
//! measurements; the response function of outcome `+1` of `M` at `lambda` is
//! `(1 + m(lambda)) / 2`. With only preparation equivalences in play, outcome
//! indeterministic responses can be absorbed into the preparation
//! distributions, so the four deterministic assignments suffice; the enlarged
//! spaces exist to check that claim.
//!
//! Unknowns are `mu_i(lambda) >= 0` for the four states. Constraints:
//! normalization, reproduction of `<M>` and `<M'>` for every state, and
//! preparation noncontextuality `mu_1 + mu_3 = mu_2 + mu_4`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::interferometer::{orbit_preparations, NoiseModel};
use crate::lp::{LinearProgram, LpOutcome, LpScalar, Rational, Relation, Tolerances};
use crate::orbit::{check_orbit, OrbitQuadruple};

/// Default floating-point solver tolerance.
pub const SOLVER_TOL: f64 = 1e-9;

/// Finite ontic space given by the value each ontic state assigns to `M` and
/// `M'` (values in `[-1, 1]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnticSpace {
    pub assignments: Vec<(f64, f64)>,
}

impl OnticSpace {
    /// `(+,+), (+,-), (-,+), (-,-)`.
    pub fn deterministic() -> Self {
        OnticSpace {
            assignments: vec![(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)],
        }
    }

    /// Deterministic points plus the four edge midpoints, where one
    /// measurement responds with a fair coin.
    pub fn with_coin_flips() -> Self {
        let mut s = Self::deterministic();
        s.assignments
            .extend([(0.0, 1.0), (0.0, -1.0), (1.0, 0.0), (-1.0, 0.0)]);
        s
    }

    /// 4 x 4 grid of values `{-1, -1/3, 1/3, 1}` for each measurement.
    pub fn grid16() -> Self {
        let vals = [-1.0, -1.0 / 3.0, 1.0 / 3.0, 1.0];
        OnticSpace {
            assignments: vals
                .iter()
                .flat_map(|&m| vals.iter().map(move |&mp| (m, mp)))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn labels(&self) -> Vec<String> {
        self.assignments
            .iter()
            .map(|&(m, mp)| format!("({},{})", fmt_value(m), fmt_value(mp)))
            .collect()
    }
}

fn fmt_value(v: f64) -> String {
    match v {
        1.0 => "+".into(),
        -1.0 => "-".into(),
        v => format!("{v:.3}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnticModel {
    pub ontic_states: Vec<String>,
    /// `mu[i][lambda]` for input state `i`.
    pub mu: Vec<Vec<f64>>,
    /// Rows `M+, M-, M'+, M'-`; `xi[j][lambda]`.
    pub xi: Vec<Vec<f64>>,
    /// Orbit position `k` holds input state `assignment[k]`.
    pub assignment: [usize; 4],
}

impl OnticModel {
    pub fn response_functions(space: &OnticSpace) -> Vec<Vec<f64>> {
        let col = |f: &dyn Fn(&(f64, f64)) -> f64| space.assignments.iter().map(f).collect();
        vec![
            col(&|a| 0.5 * (1.0 + a.0)),
            col(&|a| 0.5 * (1.0 - a.0)),
            col(&|a| 0.5 * (1.0 + a.1)),
            col(&|a| 0.5 * (1.0 - a.1)),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfeasibilityCertificate {
    /// One multiplier per LP row, in [`constraint_labels`] order.
    ///
    /// [`constraint_labels`]: InfeasibilityCertificate::constraint_labels
    pub multipliers: Vec<f64>,
    /// Exact multipliers as `p/q` strings when found by the rational solve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_multipliers: Option<Vec<String>>,
    /// `b^T z`, negative.
    pub bound: f64,
    pub constraint_labels: Vec<String>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum FeasibilityStatus {
    Feasible {
        model: OnticModel,
    },
    Infeasible {
        certificate: InfeasibilityCertificate,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibilityResult {
    #[serde(flatten)]
    pub status: FeasibilityStatus,
    pub tolerance: f64,
    /// Common predictabilities of the quadruple.
    pub predictability_m: f64,
    pub predictability_m_prime: f64,
    /// `1 - (|<M>| + |<M'>|)`.
    pub margin: f64,
    /// Whether the verdict comes from the exact rational re-solve.
    pub exact: bool,
}

impl FeasibilityResult {
    pub fn is_feasible(&self) -> bool {
        matches!(self.status, FeasibilityStatus::Feasible { .. })
    }

    pub fn model(&self) -> Option<&OnticModel> {
        match &self.status {
            FeasibilityStatus::Feasible { model } => Some(model),
            FeasibilityStatus::Infeasible { .. } => None,
        }
    }

    pub fn certificate(&self) -> Option<&InfeasibilityCertificate> {
        match &self.status {
            FeasibilityStatus::Infeasible { certificate } => Some(certificate),
            FeasibilityStatus::Feasible { .. } => None,
        }
    }
}

/// Orbit-ordered expectations projected onto the exact sign pattern:
/// `<M> = (A, A, -A, -A)`, `<M'> = (B, -B, -B, B)`.
fn symmetrized_expectations(q: &OrbitQuadruple, tol: f64) -> Result<([usize; 4], f64, f64)> {
    let report = check_orbit(q, tol)?;
    if !report.pass {
        return Err(Error::OrbitInvalid {
            symmetry: report.symmetry_residual,
            equivalence: report.equivalence_residual,
        });
    }
    let e = q.permuted(report.assignment).expectations()?;
    let a = (e[0].0 + e[1].0 - e[2].0 - e[3].0) / 4.0;
    let b = (e[0].1 - e[1].1 - e[2].1 + e[3].1) / 4.0;
    Ok((report.assignment, a, b))
}

fn build_lp(space: &OnticSpace, a: f64, b: f64) -> (LinearProgram<f64>, Vec<String>) {
    let l = space.len();
    let mut lp = LinearProgram::new(4 * l);
    let mut labels = Vec::new();
    let targets_m = [a, a, -a, -a];
    let targets_mp = [b, -b, -b, b];
    for i in 0..4 {
        let row = |f: &dyn Fn(&(f64, f64)) -> f64| {
            let mut r = vec![0.0; 4 * l];
            for (k, asg) in space.assignments.iter().enumerate() {
                r[i * l + k] = f(asg);
            }
            r
        };
        lp.add_constraint(row(&|_| 1.0), Relation::Eq, 1.0);
        labels.push(format!("normalization of mu_{}", i + 1));
        lp.add_constraint(row(&|asg| asg.0), Relation::Eq, targets_m[i]);
        labels.push(format!("<M> of state {}", i + 1));
        lp.add_constraint(row(&|asg| asg.1), Relation::Eq, targets_mp[i]);
        labels.push(format!("<M'> of state {}", i + 1));
    }
    let space_labels = space.labels();
    for k in 0..l {
        let mut r = vec![0.0; 4 * l];
        r[k] = 1.0;
        r[2 * l + k] = 1.0;
        r[l + k] = -1.0;
        r[3 * l + k] = -1.0;
        lp.add_constraint(r, Relation::Eq, 0.0);
        labels.push(format!(
            "noncontextuality mu_1 + mu_3 = mu_2 + mu_4 at {}",
            space_labels[k]
        ));
    }
    (lp, labels)
}

enum Verdict {
    Feasible(Vec<f64>),
    Infeasible {
        multipliers: Vec<f64>,
        exact: Option<Vec<String>>,
        bound: f64,
    },
}

fn solve_float(lp: &LinearProgram<f64>, tol: f64) -> Option<Verdict> {
    match lp.solve(&Tolerances::float(tol)) {
        LpOutcome::Optimal { x, .. } => Some(Verdict::Feasible(x)),
        LpOutcome::Infeasible(cert) => {
            lp.verify_certificate(&cert, &tol)
                .then_some(Verdict::Infeasible {
                    multipliers: cert.multipliers,
                    exact: None,
                    bound: cert.bound,
                })
        }
        LpOutcome::Unbounded => None,
    }
}

fn solve_exact(lp: &LinearProgram<f64>) -> Result<Verdict> {
    let exact = lp.map(|v| <Rational as LpScalar>::from_f64(*v));
    match exact.solve(&Tolerances::exact()) {
        LpOutcome::Optimal { x, .. } => {
            Ok(Verdict::Feasible(x.iter().map(LpScalar::to_f64).collect()))
        }
        LpOutcome::Infeasible(cert) => {
            if !exact.verify_certificate(&cert, &<Rational as LpScalar>::zero()) {
                return Err(Error::SolverFailure(
                    "exact Farkas certificate failed verification".into(),
                ));
            }
            Ok(Verdict::Infeasible {
                multipliers: cert.multipliers.iter().map(LpScalar::to_f64).collect(),
                exact: Some(cert.multipliers.iter().map(ToString::to_string).collect()),
                bound: cert.bound.to_f64(),
            })
        }
        LpOutcome::Unbounded => Err(Error::SolverFailure(
            "feasibility LP reported unbounded".into(),
        )),
    }
}

/// Decides whether `q` admits a preparation-noncontextual ontological model
/// over the deterministic ontic space.
pub fn nc_model_feasibility(q: &OrbitQuadruple, tol: f64) -> Result<FeasibilityResult> {
    nc_model_feasibility_on(q, &OnticSpace::deterministic(), tol)
}

/// As [`nc_model_feasibility`] with an explicit ontic space.
///
/// The float verdict is replaced by an exact rational re-solve whenever the
/// predictability margin is within `10 tol` of zero, or the float answer does
/// not survive independent verification.
pub fn nc_model_feasibility_on(
    q: &OrbitQuadruple,
    space: &OnticSpace,
    tol: f64,
) -> Result<FeasibilityResult> {
    if space.is_empty() {
        return Err(Error::InvalidParameter("ontic space is empty".into()));
    }
    let (assignment, a, b) = symmetrized_expectations(q, tol)?;
    let (lp, labels) = build_lp(space, a, b);
    let margin = 1.0 - (a.abs() + b.abs());

    let to_model = |x: &[f64]| -> OnticModel {
        let l = space.len();
        let mut mu = vec![Vec::new(); 4];
        for (k, &input) in assignment.iter().enumerate() {
            mu[input] = x[k * l..(k + 1) * l].iter().map(|v| v.max(0.0)).collect();
        }
        OnticModel {
            ontic_states: space.labels(),
            mu,
            xi: OnticModel::response_functions(space),
            assignment,
        }
    };

    let mut exact = margin.abs() < 10.0 * tol;
    let mut verdict = if exact { None } else { solve_float(&lp, tol) };
    if let Some(Verdict::Feasible(x)) = &verdict {
        if !verify_model(&to_model(x), q, 10.0 * tol) {
            verdict = None;
        }
    }
    let verdict = match verdict {
        Some(v) => v,
        None => {
            exact = true;
            solve_exact(&lp)?
        }
    };

    let status = match verdict {
        Verdict::Feasible(x) => {
            let model = to_model(&x);
            if !verify_model(&model, q, 10.0 * tol) {
                return Err(Error::SolverFailure(
                    "ontic model failed independent verification".into(),
                ));
            }
            FeasibilityStatus::Feasible { model }
        }
        Verdict::Infeasible {
            multipliers,
            exact: exact_multipliers,
            bound,
        } => FeasibilityStatus::Infeasible {
            certificate: InfeasibilityCertificate {
                multipliers,
                exact_multipliers,
                bound,
                constraint_labels: labels,
                description: format!(
                    "noncontextual bound |<M>| + |<M'>| <= 1 violated: {} + {} = {}",
                    a.abs(),
                    b.abs(),
                    a.abs() + b.abs()
                ),
            },
        },
    };
    Ok(FeasibilityResult {
        status,
        tolerance: tol,
        predictability_m: a.abs(),
        predictability_m_prime: b.abs(),
        margin,
        exact,
    })
}

/// Re-derives the LP for `q` and checks `certificate` against it: exactly
/// when rational multipliers are present, otherwise within `tol`.
pub fn verify_certificate(
    certificate: &InfeasibilityCertificate,
    q: &OrbitQuadruple,
    space: &OnticSpace,
    tol: f64,
) -> Result<bool> {
    let (_, a, b) = symmetrized_expectations(q, tol)?;
    let (lp, _) = build_lp(space, a, b);
    if let Some(exact) = &certificate.exact_multipliers {
        let parsed: std::result::Result<Vec<Rational>, _> =
            exact.iter().map(|s| s.parse::<Rational>()).collect();
        let Ok(z) = parsed else { return Ok(false) };
        let lp = lp.map(|v| <Rational as LpScalar>::from_f64(*v));
        let cert = crate::lp::FarkasCertificate {
            multipliers: z,
            bound: <Rational as LpScalar>::zero(),
        };
        return Ok(lp.verify_certificate(&cert, &<Rational as LpScalar>::zero()));
    }
    let cert = crate::lp::FarkasCertificate {
        multipliers: certificate.multipliers.clone(),
        bound: certificate.bound,
    };
    Ok(lp.verify_certificate(&cert, &tol))
}

/// Checks every model invariant directly against the quadruple's
/// operational probabilities.
pub fn verify_model(model: &OnticModel, q: &OrbitQuadruple, tol: f64) -> bool {
    let l = model.ontic_states.len();
    let shapes_ok = model.mu.len() == 4
        && model.xi.len() == 4
        && model.mu.iter().chain(&model.xi).all(|r| r.len() == l);
    if !shapes_ok {
        return false;
    }
    let mu_ok = model
        .mu
        .iter()
        .all(|row| row.iter().all(|&v| v >= -tol) && (row.iter().sum::<f64>() - 1.0).abs() <= tol);
    let xi_ok = model
        .xi
        .iter()
        .flatten()
        .all(|&v| (-tol..=1.0 + tol).contains(&v))
        && (0..l).all(|k| {
            (model.xi[0][k] + model.xi[1][k] - 1.0).abs() <= tol
                && (model.xi[2][k] + model.xi[3][k] - 1.0).abs() <= tol
        });
    if !(mu_ok && xi_ok) {
        return false;
    }
    let effects = [q.m.plus(), q.m.minus(), q.m_prime.plus(), q.m_prime.minus()];
    for (state, mu) in q.states.iter().zip(&model.mu) {
        for (effect, xi) in effects.iter().zip(&model.xi) {
            let Ok(p) = state.probability(effect) else {
                return false;
            };
            let predicted: f64 = xi.iter().zip(mu).map(|(x, m)| x * m).sum();
            if (predicted - p).abs() > tol {
                return false;
            }
        }
    }
    let [i1, i2, i3, i4] = model.assignment;
    if model.assignment.iter().any(|&i| i >= 4) {
        return false;
    }
    (0..l).all(|k| {
        (model.mu[i1][k] + model.mu[i3][k] - model.mu[i2][k] - model.mu[i4][k]).abs() <= tol
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum BoundarySweep {
    /// Vary `r` at fixed depolarizing strength.
    Reflectivity { values: Vec<f64>, depolarizing: f64 },
    /// Vary depolarizing strength at fixed `r`.
    Depolarizing { values: Vec<f64>, reflectivity: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub lower: f64,
    pub upper: f64,
    /// Verdict at `lower`.
    pub from_feasible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryReport {
    /// `(parameter, feasible)`.
    pub points: Vec<(f64, bool)>,
    pub transitions: Vec<Transition>,
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn uniform_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|k| {
                if k == n - 1 {
                    hi
                } else {
                    lo + (hi - lo) * k as f64 / (n - 1) as f64
                }
            })
            .collect(),
    }
}

/// Orbit quadruple of the ideal experiment at reflectivity `r` with
/// depolarized states.
pub fn noisy_orbit(r: f64, depolarizing: f64) -> Result<OrbitQuadruple> {
    let noise = NoiseModel::depolarizing(depolarizing)?;
    let q = orbit_preparations(r)?;
    let states = q.states.clone().map(|s| noise.apply_to_state(&s));
    let [a, b, c, d] = states;
    OrbitQuadruple::new([a?, b?, c?, d?], q.m, q.m_prime)
}

pub fn feasibility_boundary(sweep: &BoundarySweep, tol: f64) -> Result<BoundaryReport> {
    feasibility_boundary_with(sweep, tol, Exec::default())
}

/// Runs [`nc_model_feasibility`] along the sweep and reports where the
/// verdict flips.
pub fn feasibility_boundary_with(
    sweep: &BoundarySweep,
    tol: f64,
    exec: Exec,
) -> Result<BoundaryReport> {
    let (values, build): (
        &[f64],
        Box<dyn Fn(f64) -> Result<OrbitQuadruple> + Sync + Send>,
    ) = match sweep {
        BoundarySweep::Reflectivity {
            values,
            depolarizing,
        } => {
            let p = *depolarizing;
            (values, Box::new(move |r| noisy_orbit(r, p)))
        }
        BoundarySweep::Depolarizing {
            values,
            reflectivity,
        } => {
            let r = *reflectivity;
            (values, Box::new(move |p| noisy_orbit(r, p)))
        }
    };
    if values.len() < 2 {
        return Err(Error::InvalidParameter(
            "boundary sweep needs >= 2 grid points".into(),
        ));
    }
    let verdicts = exec.map(values, |&v| {
        build(v)
            .and_then(|q| nc_model_feasibility(&q, tol))
            .map(|r| r.is_feasible())
    });
    let points = values
        .iter()
        .zip(verdicts)
        .map(|(&v, f)| f.map(|f| (v, f)))
        .collect::<Result<Vec<_>>>()?;
    let transitions = points
        .windows(2)
        .filter(|w| w[0].1 != w[1].1)
        .map(|w| Transition {
            lower: w[0].0,
            upper: w[1].0,
            from_feasible: w[0].1,
        })
        .collect();
    Ok(BoundaryReport {
        points,
        transitions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpt::GptVector;

    #[test]
    fn sharp_which_way_orbit_is_feasible() {
        let q = orbit_preparations(1.0).unwrap();
        let res = nc_model_feasibility(&q, SOLVER_TOL).unwrap();
        assert!(res.is_feasible());
        assert!(res.exact, "margin 0 is inside the boundary band");
        assert!(verify_model(res.model().unwrap(), &q, 1e-9));
    }

    #[test]
    fn scaled_model_fails_verification() {
        let q = noisy_orbit(0.75, 0.3).unwrap();
        let res = nc_model_feasibility(&q, SOLVER_TOL).unwrap();
        let mut model = res.model().unwrap().clone();
        assert!(verify_model(&model, &q, 1e-9));
        model.mu[0].iter_mut().for_each(|v| *v *= 0.9);
        assert!(!verify_model(&model, &q, 1e-9));
    }

    #[test]
    fn invalid_orbit_is_rejected() {
        let mut q = orbit_preparations(0.75).unwrap();
        q.states[3] = GptVector::maximally_mixed(4);
        assert!(matches!(
            nc_model_feasibility(&q, SOLVER_TOL),
            Err(Error::OrbitInvalid { .. })
        ));
    }

    #[test]
    fn grid_helper() {
        assert_eq!(uniform_grid(0.0, 1.0, 5), vec![0.0, 0.25, 0.5, 0.75, 1.0]);
        assert!(feasibility_boundary(
            &BoundarySweep::Depolarizing {
                values: vec![0.1],
                reflectivity: 0.75
            },
            SOLVER_TOL
        )
        .is_err());
    }
}
