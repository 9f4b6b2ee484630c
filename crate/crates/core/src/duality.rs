//! Fringe visibility, path distinguishability and their tradeoffs.
//!
//! Visibility is the predictability of the which-phase measurement and path
//! distinguishability that of the which-way measurement. Quantum states obey
//! `V^2 + P^2 <= 1`; a noncontextual model of an A1xA1-symmetric theory obeys
//! `V + P <= 1`.

use std::io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpt::{plane_indices, BinaryMeasurement, GptVector, StateSpaceModel};

/// Slack below zero before a bound counts as violated.
pub const BOUND_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualityPoint {
    pub visibility: f64,
    pub distinguishability: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl DualityPoint {
    pub fn new(visibility: f64, distinguishability: f64) -> Result<Self> {
        for (name, v) in [
            ("visibility", visibility),
            ("distinguishability", distinguishability),
        ] {
            if !(0.0..=1.0 + BOUND_TOL).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} {v} outside [0, 1]"
                )));
            }
        }
        Ok(DualityPoint {
            visibility,
            distinguishability,
            source: None,
        })
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = Some(source.into());
        self
    }

    /// `V` and `P` of a state under the given which-phase and which-way
    /// measurements.
    pub fn of_state(
        s: &GptVector,
        which_phase: &BinaryMeasurement,
        which_way: &BinaryMeasurement,
    ) -> Result<Self> {
        DualityPoint::new(which_phase.predictability(s)?, which_way.predictability(s)?)
    }

    pub fn witness(&self) -> f64 {
        self.visibility + self.distinguishability
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub satisfied: bool,
    pub margin: f64,
}

impl BoundCheck {
    fn from_margin(margin: f64) -> Self {
        BoundCheck {
            satisfied: margin >= -BOUND_TOL,
            margin,
        }
    }
}

/// Sharp measurement along the `x` (`x_axis`) or `z` plane axis.
fn axis_measurement(label: &str, dim: usize, x_axis: bool) -> BinaryMeasurement {
    let (xi, zi) = plane_indices(dim);
    let mut dir = vec![0.0; dim - 1];
    dir[if x_axis { xi } else { zi } - 1] = 1.0;
    BinaryMeasurement::along(label, &dir).expect("unit direction")
}

fn which_phase_for(dim: usize) -> BinaryMeasurement {
    axis_measurement("which-phase", dim, true)
}

fn which_way_for(dim: usize) -> BinaryMeasurement {
    axis_measurement("which-way", dim, false)
}

/// `(P_max - P_min) / (P_max + P_min)` over the two which-phase outcomes.
pub fn fringe_visibility_raw(s: &GptVector) -> Result<f64> {
    let m = which_phase_for(s.dim());
    let (p, q) = (s.probability(m.plus())?, s.probability(m.minus())?);
    let (hi, lo) = (p.max(q), p.min(q));
    Ok((hi - lo) / (hi + lo))
}

/// `V = |<X>|`. The raw intensity form agrees because the two detection
/// probabilities sum to one.
pub fn fringe_visibility(s: &GptVector) -> Result<f64> {
    let v = which_phase_for(s.dim()).predictability(s)?;
    debug_assert!(
        (v - fringe_visibility_raw(s)?).abs() <= 1e-12,
        "raw and simplified visibility disagree"
    );
    Ok(v)
}

/// `P = |P(L) - P(R)| = |<Z>|`.
pub fn path_distinguishability(s: &GptVector) -> Result<f64> {
    which_way_for(s.dim()).predictability(s)
}

pub fn duality_point(s: &GptVector) -> Result<DualityPoint> {
    DualityPoint::new(fringe_visibility(s)?, path_distinguishability(s)?)
}

/// `V + P <= 1`; margin `1 - (V + P)`.
pub fn nc_bound_satisfied(pt: &DualityPoint) -> BoundCheck {
    BoundCheck::from_margin(1.0 - (pt.visibility + pt.distinguishability))
}

/// `V^2 + P^2 <= 1`; margin `1 - (V^2 + P^2)`.
pub fn quantum_bound_satisfied(pt: &DualityPoint) -> BoundCheck {
    BoundCheck::from_margin(
        1.0 - (pt.visibility * pt.visibility + pt.distinguishability * pt.distinguishability),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeoffCurve {
    pub label: String,
    pub points: Vec<DualityPoint>,
}

impl TradeoffCurve {
    /// Rows `P,V,space`, appended without a header.
    pub fn write_rows<W: io::Write>(&self, w: &mut csv::Writer<W>) -> Result<()> {
        for pt in &self.points {
            w.write_record([
                pt.distinguishability.to_string(),
                pt.visibility.to_string(),
                self.label.clone(),
            ])?;
        }
        Ok(())
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        write_curves_csv(std::slice::from_ref(self), writer)
    }
}

/// Header `P,V,space` followed by every curve's rows.
pub fn write_curves_csv<W: io::Write>(curves: &[TradeoffCurve], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["P", "V", "space"])?;
    for c in curves {
        c.write_rows(&mut w)?;
    }
    w.flush()?;
    Ok(())
}

/// The noncontextual line `V = 1 - P` on the same grid.
pub fn noncontextual_line(grid: usize) -> Result<TradeoffCurve> {
    if grid < 2 {
        return Err(Error::InvalidParameter("grid must be >= 2".into()));
    }
    let points = p_grid(grid)
        .into_iter()
        .map(|p| DualityPoint::new(1.0 - p, p))
        .collect::<Result<_>>()?;
    Ok(TradeoffCurve {
        label: "noncontextual".into(),
        points,
    })
}

fn p_grid(grid: usize) -> Vec<f64> {
    (0..grid).map(|k| k as f64 / (grid - 1) as f64).collect()
}

/// Largest visibility attainable at each path distinguishability on a uniform
/// grid over `[0, 1]`.
pub fn tradeoff_sweep(space: &StateSpaceModel, grid: usize) -> Result<TradeoffCurve> {
    tradeoff_sweep_with(space, grid, Exec::default())
}

pub fn tradeoff_sweep_with(
    space: &StateSpaceModel,
    grid: usize,
    exec: Exec,
) -> Result<TradeoffCurve> {
    if grid < 2 {
        return Err(Error::InvalidParameter("grid must be >= 2".into()));
    }
    let ps = p_grid(grid);
    let points = exec.map(&ps, |&p| {
        // |<Z>| = P is attained at z = P or z = -P.
        [p, -p]
            .into_iter()
            .filter_map(|z| space.x_range_at(z))
            .map(|(lo, hi)| lo.abs().max(hi.abs()))
            .reduce(f64::max)
            .ok_or(Error::EmptySlice(p))
            .and_then(|v| DualityPoint::new(v.min(1.0), p))
    });
    Ok(TradeoffCurve {
        label: space.label(),
        points: points.into_iter().collect::<Result<_>>()?,
    })
}

/// Objective for the reflectivity search: `(1 - p)(V(r) + P(r))` for the
/// ideal orbit state at reflectivity `r` after depolarizing strength `p`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WitnessSum {
    pub depolarizing: f64,
}

impl WitnessSum {
    pub fn value(&self, r: f64) -> f64 {
        let r = r.clamp(0.0, 1.0);
        (1.0 - self.depolarizing) * (2.0 * (r * (1.0 - r)).sqrt() + (1.0 - 2.0 * r).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Maximizer {
    pub reflectivity: f64,
    pub value: f64,
}

const DENSE_GRID: usize = 20_001;

/// All global maximizers of `objective` over `r in [0, 1]`: a dense grid
/// finds candidate peaks, golden-section search refines each, and every peak
/// within `1e-9` of the best is returned in increasing `r`.
pub fn optimal_reflectivity(objective: &WitnessSum) -> Vec<Maximizer> {
    let h = 1.0 / (DENSE_GRID - 1) as f64;
    let vals: Vec<f64> = (0..DENSE_GRID)
        .map(|k| objective.value(k as f64 * h))
        .collect();
    let mut peaks = Vec::new();
    for k in 0..DENSE_GRID {
        let left = if k == 0 {
            f64::NEG_INFINITY
        } else {
            vals[k - 1]
        };
        let right = if k + 1 == DENSE_GRID {
            f64::NEG_INFINITY
        } else {
            vals[k + 1]
        };
        if vals[k] >= left && vals[k] > right {
            let lo = (k as f64 - 1.0).max(0.0) * h;
            let hi = ((k + 1) as f64 * h).min(1.0);
            let r = golden_section(|r| objective.value(r), lo, hi);
            peaks.push(Maximizer {
                reflectivity: r,
                value: objective.value(r),
            });
        }
    }
    let best = peaks
        .iter()
        .map(|m| m.value)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<Maximizer> = Vec::new();
    for m in peaks.into_iter().filter(|m| m.value >= best - 1e-9) {
        if out
            .last()
            .is_none_or(|last| (m.reflectivity - last.reflectivity).abs() > 10.0 * h)
        {
            out.push(m);
        }
    }
    out
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv_phi * (hi - lo);
    let mut d = lo + inv_phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if hi - lo < 1e-15 {
            break;
        }
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv_phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv_phi * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    [lo, mid, hi]
        .into_iter()
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .unwrap_or(mid)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_examples() {
        let c = nc_bound_satisfied(&DualityPoint::new(1.0, 0.0).unwrap());
        assert!(c.satisfied && c.margin == 0.0);
        let c = nc_bound_satisfied(&DualityPoint::new(0.5, 0.4).unwrap());
        assert!(c.satisfied && (c.margin - 0.1).abs() < 1e-15);
        assert!(!quantum_bound_satisfied(&DualityPoint::new(1.0, 1.0).unwrap()).satisfied);
        let c = quantum_bound_satisfied(&DualityPoint::new(0.0, 0.0).unwrap());
        assert!(c.satisfied && c.margin == 1.0);
        assert!(DualityPoint::new(1.2, 0.0).is_err());
    }

    #[test]
    fn square_and_diamond_curves() {
        let sq = tradeoff_sweep(&StateSpaceModel::square(3), 11).unwrap();
        assert!(sq.points.iter().all(|p| p.visibility == 1.0));
        let di = tradeoff_sweep(&StateSpaceModel::diamond(3), 11).unwrap();
        for p in &di.points {
            assert!((p.visibility - (1.0 - p.distinguishability)).abs() < 1e-12);
        }
        assert!(tradeoff_sweep(&StateSpaceModel::square(3), 1).is_err());
    }

    #[test]
    fn empty_slice() {
        // A body that never reaches |z| = 1.
        let squat =
            StateSpaceModel::polytope(3, vec![[1.0, 0.5], [-1.0, 0.5], [-1.0, -0.5], [1.0, -0.5]])
                .unwrap();
        assert!(matches!(
            tradeoff_sweep(&squat, 5),
            Err(Error::EmptySlice(p)) if p == 0.75
        ));
    }

    #[test]
    fn visibility_forms_agree_on_mixed_states() {
        let s = GptVector::state(vec![1.0, -0.3, 0.1, 0.2]).unwrap();
        assert!((fringe_visibility(&s).unwrap() - 0.3).abs() < 1e-15);
        assert!((fringe_visibility_raw(&s).unwrap() - 0.3).abs() < 1e-15);
        assert!((path_distinguishability(&s).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn curves_csv() {
        let curve = noncontextual_line(3).unwrap();
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "P,V,space\n0,1,noncontextual\n0.5,0.5,noncontextual\n1,0,noncontextual\n"
        );
    }
}
