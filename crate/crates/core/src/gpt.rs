//! Vector representation of operational states and effects.
//!
//! States are real vectors whose coordinate 0 is the unit component and equals
//! 1; effects are coefficient vectors such that the outcome probability is the
//! plain dot product. The dual-rail qubit uses `(1, x, z)` for the plane
//! fragment and `(1, x, y, z)` for the full Bloch ball, where `x = <X>`,
//! `y = <Y>` and `z = <Z>`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of the unit coordinate in every vector.
pub const UNIT_INDEX: usize = 0;

/// Slack allowed on either side of `[0, 1]` before a dot product is rejected
/// as a probability.
pub const PROB_TOL: f64 = 1e-9;

/// Default tolerance for convex-body membership.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VectorKind {
    State,
    Effect,
}

impl VectorKind {
    pub fn name(self) -> &'static str {
        match self {
            VectorKind::State => "state",
            VectorKind::Effect => "effect",
        }
    }
}

/// A state or effect of a finite-dimensional operational theory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawVector", into = "RawVector")]
pub struct GptVector {
    kind: VectorKind,
    coords: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawVector {
    kind: VectorKind,
    coords: Vec<f64>,
}

impl TryFrom<RawVector> for GptVector {
    type Error = Error;

    fn try_from(raw: RawVector) -> Result<Self> {
        match raw.kind {
            VectorKind::State => GptVector::state(raw.coords),
            VectorKind::Effect => GptVector::effect(raw.coords),
        }
    }
}

impl From<GptVector> for RawVector {
    fn from(v: GptVector) -> Self {
        RawVector {
            kind: v.kind,
            coords: v.coords,
        }
    }
}

impl GptVector {
    /// Builds a state; the unit coordinate must be exactly 1.
    pub fn state(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Format("state vector has no coordinates".into()));
        }
        if coords[UNIT_INDEX] != 1.0 {
            return Err(Error::Format(format!(
                "state unit coordinate must be 1, found {}",
                coords[UNIT_INDEX]
            )));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Format("state has non-finite coordinates".into()));
        }
        Ok(GptVector {
            kind: VectorKind::State,
            coords,
        })
    }

    /// Builds a state from its non-unit coordinates.
    pub fn state_from_tail(tail: &[f64]) -> Self {
        let mut coords = Vec::with_capacity(tail.len() + 1);
        coords.push(1.0);
        coords.extend_from_slice(tail);
        GptVector {
            kind: VectorKind::State,
            coords,
        }
    }

    pub fn effect(coords: Vec<f64>) -> Result<Self> {
        if coords.is_empty() {
            return Err(Error::Format("effect vector has no coordinates".into()));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::Format("effect has non-finite coordinates".into()));
        }
        Ok(GptVector {
            kind: VectorKind::Effect,
            coords,
        })
    }

    /// The maximally mixed state: every non-unit coordinate zero.
    pub fn maximally_mixed(dim: usize) -> Self {
        let mut coords = vec![0.0; dim];
        coords[UNIT_INDEX] = 1.0;
        GptVector {
            kind: VectorKind::State,
            coords,
        }
    }

    /// The effect that fires with certainty on every state.
    pub fn unit_effect(dim: usize) -> Self {
        let mut coords = vec![0.0; dim];
        coords[UNIT_INDEX] = 1.0;
        GptVector {
            kind: VectorKind::Effect,
            coords,
        }
    }

    pub fn kind(&self) -> VectorKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    pub fn is_state(&self) -> bool {
        self.kind == VectorKind::State
    }

    fn expect_kind(&self, kind: VectorKind) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(Error::KindMismatch {
                expected: kind.name(),
                found: self.kind.name(),
            })
        }
    }

    pub(crate) fn dot(&self, other: &GptVector) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| a * b)
            .sum()
    }

    /// Outcome probability of effect `e` on this state.
    pub fn probability(&self, e: &GptVector) -> Result<f64> {
        probability(self, e)
    }

    /// Maximum absolute coordinate difference.
    pub fn max_abs_diff(&self, other: &GptVector) -> f64 {
        self.coords
            .iter()
            .zip(&other.coords)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Coordinates of this vector within the plane fragment: `(x, z)`.
    pub fn plane_point(&self) -> (f64, f64) {
        let (xi, zi) = plane_indices(self.dim());
        (self.coords[xi], self.coords[zi])
    }
}

/// Indices of the `x` and `z` coordinates for a vector of dimension `dim`.
///
/// Dimension 3 is `(1, x, z)`; dimension 4 is `(1, x, y, z)`. Any extra
/// coordinates sit between `x` and `z`.
pub fn plane_indices(dim: usize) -> (usize, usize) {
    debug_assert!(dim >= 3, "plane fragment needs at least three coordinates");
    (1, dim - 1)
}

fn check_dims(a: &GptVector, b: &GptVector) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    Ok(())
}

/// `P(y|M,P) = s . e`. Values outside `[0, 1]` (beyond [`PROB_TOL`]) are
/// reported, never clamped.
pub fn probability(s: &GptVector, e: &GptVector) -> Result<f64> {
    s.expect_kind(VectorKind::State)?;
    e.expect_kind(VectorKind::Effect)?;
    check_dims(s, e)?;
    let p = s.dot(e);
    if !(-PROB_TOL..=1.0 + PROB_TOL).contains(&p) || !p.is_finite() {
        return Err(Error::ProbabilityOutOfRange(p));
    }
    Ok(p)
}

/// Convex combination of states.
pub fn mix(states: &[GptVector], weights: &[f64]) -> Result<GptVector> {
    if states.is_empty() || states.len() != weights.len() {
        return Err(Error::BadWeights(format!(
            "{} states but {} weights",
            states.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::BadWeights("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::BadWeights(format!("weights sum to {total}, not 1")));
    }
    let dim = states[0].dim();
    let mut coords = vec![0.0; dim];
    for (s, w) in states.iter().zip(weights) {
        s.expect_kind(VectorKind::State)?;
        check_dims(&states[0], s)?;
        for (c, v) in coords.iter_mut().zip(&s.coords) {
            *c += w * v;
        }
    }
    coords[UNIT_INDEX] = 1.0;
    Ok(GptVector {
        kind: VectorKind::State,
        coords,
    })
}

/// A two-outcome measurement with outcomes `+1` and `-1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMeasurement", into = "RawMeasurement")]
pub struct BinaryMeasurement {
    label: String,
    plus: GptVector,
    minus: GptVector,
}

#[derive(Serialize, Deserialize)]
struct RawMeasurement {
    label: String,
    plus: Vec<f64>,
    minus: Vec<f64>,
}

impl TryFrom<RawMeasurement> for BinaryMeasurement {
    type Error = Error;

    fn try_from(raw: RawMeasurement) -> Result<Self> {
        BinaryMeasurement::new(
            raw.label,
            GptVector::effect(raw.plus)?,
            GptVector::effect(raw.minus)?,
        )
    }
}

impl From<BinaryMeasurement> for RawMeasurement {
    fn from(m: BinaryMeasurement) -> Self {
        RawMeasurement {
            label: m.label,
            plus: m.plus.coords,
            minus: m.minus.coords,
        }
    }
}

impl BinaryMeasurement {
    /// Outcome effects must sum to the unit effect within `1e-12`.
    pub fn new(label: impl Into<String>, plus: GptVector, minus: GptVector) -> Result<Self> {
        plus.expect_kind(VectorKind::Effect)?;
        minus.expect_kind(VectorKind::Effect)?;
        check_dims(&plus, &minus)?;
        let unit = GptVector::unit_effect(plus.dim());
        let gap = plus
            .coords
            .iter()
            .zip(&minus.coords)
            .zip(&unit.coords)
            .map(|((p, m), u)| (p + m - u).abs())
            .fold(0.0, f64::max);
        if gap > 1e-12 {
            return Err(Error::Format(format!(
                "outcome effects do not sum to the unit effect (gap {gap:e})"
            )));
        }
        Ok(BinaryMeasurement {
            label: label.into(),
            plus,
            minus,
        })
    }

    /// Builds a measurement from its `+1` effect; the `-1` effect is the
    /// complement with respect to the unit effect.
    pub fn from_plus(label: impl Into<String>, plus: GptVector) -> Result<Self> {
        plus.expect_kind(VectorKind::Effect)?;
        let mut minus = plus.coords.iter().map(|c| -c).collect::<Vec<_>>();
        minus[UNIT_INDEX] += 1.0;
        BinaryMeasurement::new(label, plus, GptVector::effect(minus)?)
    }

    /// Sharp measurement along `direction` (the non-unit coordinates, norm at
    /// most 1): `plus = (1/2, n/2)`, `minus = (1/2, -n/2)`.
    pub fn along(label: impl Into<String>, direction: &[f64]) -> Result<Self> {
        let norm = direction.iter().map(|c| c * c).sum::<f64>().sqrt();
        if norm > 1.0 + 1e-12 {
            return Err(Error::InvalidParameter(format!(
                "measurement direction has norm {norm} > 1"
            )));
        }
        let half = |sign: f64| {
            let mut coords = Vec::with_capacity(direction.len() + 1);
            coords.push(0.5);
            coords.extend(direction.iter().map(|c| sign * 0.5 * c + 0.0));
            GptVector {
                kind: VectorKind::Effect,
                coords,
            }
        };
        Ok(BinaryMeasurement {
            label: label.into(),
            plus: half(1.0),
            minus: half(-1.0),
        })
    }

    /// Sharp measurement along the unit direction at angle `theta` from the
    /// `z` axis towards the `x` axis, in a space of dimension `dim`.
    pub fn in_plane(label: impl Into<String>, dim: usize, theta: f64) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter(format!(
                "plane measurement needs dimension >= 3, got {dim}"
            )));
        }
        let (xi, zi) = plane_indices(dim);
        let mut direction = vec![0.0; dim - 1];
        direction[xi - 1] = theta.sin();
        direction[zi - 1] = theta.cos();
        BinaryMeasurement::along(label, &direction)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn plus(&self) -> &GptVector {
        &self.plus
    }

    pub fn minus(&self) -> &GptVector {
        &self.minus
    }

    pub fn dim(&self) -> usize {
        self.plus.dim()
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    /// Same measurement with outcomes relabelled.
    pub fn swapped(&self) -> Self {
        BinaryMeasurement {
            label: self.label.clone(),
            plus: self.minus.clone(),
            minus: self.plus.clone(),
        }
    }

    /// The linear functional `plus - minus`, so that `<M>_s = s . observable`.
    pub fn observable(&self) -> Vec<f64> {
        self.plus
            .coords
            .iter()
            .zip(&self.minus.coords)
            .map(|(p, m)| p - m)
            .collect()
    }

    pub fn expectation(&self, s: &GptVector) -> Result<f64> {
        expectation(s, self)
    }

    pub fn predictability(&self, s: &GptVector) -> Result<f64> {
        predictability(s, self)
    }
}

/// `<M>_s = P(+1) - P(-1)`.
pub fn expectation(s: &GptVector, m: &BinaryMeasurement) -> Result<f64> {
    Ok(probability(s, &m.plus)? - probability(s, &m.minus)?)
}

/// `|<M>_s|`.
pub fn predictability(s: &GptVector, m: &BinaryMeasurement) -> Result<f64> {
    expectation(s, m).map(f64::abs)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Disc,
    Square,
    Diamond,
    RegularPolygon(usize),
    Polytope(Vec<[f64; 2]>),
}

/// Half-plane `normal . (x, z) <= offset` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq)]
struct HalfPlane {
    normal: [f64; 2],
    offset: f64,
}

/// A convex body of valid states in the `<X>`-`<Z>` plane.
///
/// For polygonal bodies the out-of-plane coordinates of a state must vanish;
/// the disc treats all non-unit coordinates as a Euclidean ball, so in
/// dimension 4 it is the Bloch ball and its `x`-`z` cross-section is the unit
/// disc.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    shape: Shape,
    dim: usize,
    // Hull vertices (counter-clockwise, `[x, z]`) and facets for polygons.
    vertices: Vec<[f64; 2]>,
    facets: Vec<HalfPlane>,
}

impl StateSpaceModel {
    pub fn disc(dim: usize) -> Self {
        assert!(dim >= 3, "state space needs dimension >= 3");
        StateSpaceModel {
            shape: Shape::Disc,
            dim,
            vertices: Vec::new(),
            facets: Vec::new(),
        }
    }

    pub fn square(dim: usize) -> Self {
        let verts = vec![[1.0, 1.0], [-1.0, 1.0], [-1.0, -1.0], [1.0, -1.0]];
        Self::from_polygon(Shape::Square, dim, &verts).expect("square is a valid body")
    }

    pub fn diamond(dim: usize) -> Self {
        let verts = vec![[1.0, 0.0], [0.0, 1.0], [-1.0, 0.0], [0.0, -1.0]];
        Self::from_polygon(Shape::Diamond, dim, &verts).expect("diamond is a valid body")
    }

    /// Regular `n`-gon inscribed in the unit circle with a vertex at `z = 1`.
    pub fn regular_polygon(dim: usize, n: usize) -> Result<Self> {
        if n < 3 {
            return Err(Error::InvalidParameter(format!(
                "regular polygon needs n >= 3, got {n}"
            )));
        }
        let verts: Vec<[f64; 2]> = (0..n)
            .map(|k| {
                let t = std::f64::consts::TAU * k as f64 / n as f64;
                [t.sin(), t.cos()]
            })
            .collect();
        Self::from_polygon(Shape::RegularPolygon(n), dim, &verts)
    }

    /// Convex hull of explicit `[x, z]` vertices.
    pub fn polytope(dim: usize, vertices: Vec<[f64; 2]>) -> Result<Self> {
        let shape = Shape::Polytope(vertices.clone());
        Self::from_polygon(shape, dim, &vertices)
    }

    fn from_polygon(shape: Shape, dim: usize, points: &[[f64; 2]]) -> Result<Self> {
        if dim < 3 {
            return Err(Error::InvalidParameter(format!(
                "state space needs dimension >= 3, got {dim}"
            )));
        }
        if points.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter("non-finite polygon vertex".into()));
        }
        let hull = convex_hull(points);
        if hull.len() < 3 {
            return Err(Error::InvalidParameter(
                "polygon vertices are degenerate (hull has no interior)".into(),
            ));
        }
        let facets: Vec<HalfPlane> = hull
            .iter()
            .zip(hull.iter().cycle().skip(1))
            .map(|(p, q)| {
                let (dx, dz) = (q[0] - p[0], q[1] - p[1]);
                let len = dx.hypot(dz);
                let normal = [dz / len, -dx / len];
                HalfPlane {
                    normal,
                    offset: normal[0] * p[0] + normal[1] * p[1],
                }
            })
            .collect();
        if facets.iter().any(|f| f.offset < -1e-12) {
            return Err(Error::InvalidParameter(
                "body must contain the maximally mixed point".into(),
            ));
        }
        Ok(StateSpaceModel {
            shape,
            dim,
            vertices: hull,
            facets,
        })
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> String {
        match &self.shape {
            Shape::Disc => "disc".into(),
            Shape::Square => "square".into(),
            Shape::Diamond => "diamond".into(),
            Shape::RegularPolygon(n) => format!("polygon{n}"),
            Shape::Polytope(_) => "polytope".into(),
        }
    }

    /// Hull vertices in counter-clockwise order (empty for the disc).
    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    /// Membership of a state's non-unit coordinates in the body, within `tol`.
    pub fn contains(&self, s: &GptVector, tol: f64) -> bool {
        if !s.is_state() || s.dim() != self.dim {
            return false;
        }
        let (xi, zi) = plane_indices(self.dim);
        let (x, z) = (s.coords[xi], s.coords[zi]);
        let out_of_plane = &s.coords[xi + 1..zi];
        match self.shape {
            Shape::Disc => {
                let r2 = x * x + z * z + out_of_plane.iter().map(|c| c * c).sum::<f64>();
                r2.sqrt() <= 1.0 + tol
            }
            _ => {
                out_of_plane.iter().all(|c| c.abs() <= tol) && self.contains_plane_point(x, z, tol)
            }
        }
    }

    pub fn contains_plane_point(&self, x: f64, z: f64, tol: f64) -> bool {
        match self.shape {
            Shape::Disc => x.hypot(z) <= 1.0 + tol,
            _ => self
                .facets
                .iter()
                .all(|f| f.normal[0] * x + f.normal[1] * z <= f.offset + tol),
        }
    }

    /// Range of `x` over the body's intersection with the line `z = c`
    /// (restricted to the plane), or `None` if the line misses the body.
    pub fn x_range_at(&self, z: f64) -> Option<(f64, f64)> {
        match self.shape {
            Shape::Disc => {
                let h = 1.0 - z * z;
                if h < -1e-12 {
                    None
                } else {
                    let w = h.max(0.0).sqrt();
                    Some((-w, w))
                }
            }
            _ => {
                let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
                for f in &self.facets {
                    let rhs = f.offset - f.normal[1] * z;
                    if f.normal[0].abs() < 1e-14 {
                        if rhs < -1e-12 {
                            return None;
                        }
                    } else if f.normal[0] > 0.0 {
                        hi = hi.min(rhs / f.normal[0]);
                    } else {
                        lo = lo.max(rhs / f.normal[0]);
                    }
                }
                if lo > hi + 1e-12 {
                    None
                } else {
                    Some((lo.min(hi), hi.max(lo)))
                }
            }
        }
    }

    /// `n` points spread along the boundary of the body, as `[x, z]`.
    pub fn boundary_points(&self, n: usize) -> Vec<[f64; 2]> {
        match self.shape {
            Shape::Disc => (0..n)
                .map(|k| {
                    let t = std::f64::consts::TAU * k as f64 / n as f64;
                    [t.sin(), t.cos()]
                })
                .collect(),
            _ => {
                let edges: Vec<([f64; 2], [f64; 2], f64)> = self
                    .vertices
                    .iter()
                    .zip(self.vertices.iter().cycle().skip(1))
                    .map(|(p, q)| (*p, *q, (q[0] - p[0]).hypot(q[1] - p[1])))
                    .collect();
                let perimeter: f64 = edges.iter().map(|e| e.2).sum();
                (0..n)
                    .map(|k| {
                        let mut t = perimeter * k as f64 / n as f64;
                        for (p, q, len) in &edges {
                            if t <= *len {
                                let u = t / len;
                                return [p[0] + u * (q[0] - p[0]), p[1] + u * (q[1] - p[1])];
                            }
                            t -= len;
                        }
                        self.vertices[0]
                    })
                    .collect()
            }
        }
    }

    /// A state of this space's dimension with the given plane coordinates and
    /// all other non-unit coordinates zero.
    pub fn plane_state(&self, x: f64, z: f64) -> GptVector {
        let (xi, zi) = plane_indices(self.dim);
        let mut s = GptVector::maximally_mixed(self.dim);
        s.coords[xi] = x;
        s.coords[zi] = z;
        s
    }
}

/// Andrew's monotone chain; returns the hull counter-clockwise without
/// collinear points.
fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: [f64; 2], a: [f64; 2], b: [f64; 2]| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-14
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}
