//! Mach-Zehnder hardware settings mapped onto dual-rail qubit vectors.
//!
//! A photon enters at the left port, meets a beamsplitter of reflectivity `r`
//! and a phase shifter `phi` on the left arm, and optionally a mode swap. The
//! resulting state is `sqrt(r)|R> + e^{i phi} sqrt(1-r)|L>`, written as the
//! Bloch vector `(1, x, y, z)` with `Z = |L><L| - |R><R|`.
//!
//! Finite statistics come from [`sample_counts`], which draws one binomial per
//! (preparation, measurement) cell from a ChaCha8 stream seeded with
//! `seed ^ cell_index` via `SeedableRng::seed_from_u64`. Both the generator
//! and the seed expansion are platform independent, so count tables are
//! reproducible bit for bit.

use std::f64::consts::{PI, TAU};
use std::io;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpt::{BinaryMeasurement, GptVector, VectorKind, UNIT_INDEX};
use crate::orbit::OrbitQuadruple;

/// Dimension of the dual-rail qubit vectors `(1, x, y, z)`.
pub const QUBIT_DIM: usize = 4;

pub const WHICH_WAY: &str = "which-way";
pub const WHICH_PHASE: &str = "which-phase";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrepSettings {
    reflectivity: f64,
    phase: f64,
    swap_after: bool,
}

impl PrepSettings {
    /// Validates `r` in `[0, 1]` and normalizes `phi` into `[0, 2 pi)`.
    pub fn new(reflectivity: f64, phase: f64, swap_after: bool) -> Result<Self> {
        if !(0.0..=1.0).contains(&reflectivity) {
            return Err(Error::InvalidParameter(format!(
                "reflectivity must lie in [0, 1], got {reflectivity}"
            )));
        }
        if !phase.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "phase must be finite, got {phase}"
            )));
        }
        let mut phase = phase.rem_euclid(TAU);
        if phase >= TAU {
            phase = 0.0;
        }
        Ok(PrepSettings {
            reflectivity,
            phase,
            swap_after,
        })
    }

    pub fn reflectivity(&self) -> f64 {
        self.reflectivity
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    pub fn swap_after(&self) -> bool {
        self.swap_after
    }
}

/// Bloch vector of the prepared state.
///
/// `z = 1 - 2r`, `x = 2 sqrt(r(1-r)) cos phi`, `y = 2 sqrt(r(1-r)) sin phi`.
/// The mode swap acts as Pauli X on the dual rail, flipping `y` and `z`.
pub fn prepare(settings: &PrepSettings) -> GptVector {
    let r = settings.reflectivity;
    let amp = 2.0 * (r * (1.0 - r)).sqrt();
    let (sin, cos) = phase_sin_cos(settings.phase);
    let (mut y, mut z) = (amp * sin, 1.0 - 2.0 * r);
    if settings.swap_after {
        y = -y;
        z = -z;
    }
    // + 0.0 turns negative zeros into positive ones.
    GptVector::state_from_tail(&[amp * cos + 0.0, y + 0.0, z + 0.0])
}

/// `sin`/`cos` that are exact on multiples of `pi/2`, so orbit preparations at
/// `phi in {0, pi}` stay exactly in the `x`-`z` plane.
fn phase_sin_cos(phi: f64) -> (f64, f64) {
    let quarter = phi / (PI / 2.0);
    if quarter == quarter.round() {
        match (quarter as i64).rem_euclid(4) {
            0 => (0.0, 1.0),
            1 => (1.0, 0.0),
            2 => (0.0, -1.0),
            _ => (-1.0, 0.0),
        }
    } else {
        phi.sin_cos()
    }
}

/// Path detection: outcome `+1` when the detector on the left mode fires.
pub fn which_way() -> BinaryMeasurement {
    BinaryMeasurement::along(WHICH_WAY, &[0.0, 0.0, 1.0]).expect("unit direction")
}

/// Recombination on a 50-50 beamsplitter (Hadamard): outcome `+1` when the
/// left output port fires, i.e. relative phase 0.
pub fn which_phase() -> BinaryMeasurement {
    BinaryMeasurement::along(WHICH_PHASE, &[1.0, 0.0, 0.0]).expect("unit direction")
}

/// Settings realizing the four orbit states: `(r, 0)`, `(r, pi)`,
/// `(r, pi) + swap`, `(r, 0) + swap`.
pub fn orbit_settings(r: f64) -> Result<[PrepSettings; 4]> {
    Ok([
        PrepSettings::new(r, 0.0, false)?,
        PrepSettings::new(r, PI, false)?,
        PrepSettings::new(r, PI, true)?,
        PrepSettings::new(r, 0.0, true)?,
    ])
}

/// The quadruple `psi_1..psi_4` with the which-way and which-phase
/// measurements as `M` and `M'`.
pub fn orbit_preparations(r: f64) -> Result<OrbitQuadruple> {
    let states = orbit_settings(r)?.map(|s| prepare(&s));
    OrbitQuadruple::new(states, which_way(), which_phase())
}

/// Depolarizing noise on states plus a bias of effects towards the fair coin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct NoiseModel {
    depolarizing: f64,
    bias: f64,
}

impl NoiseModel {
    pub fn new(depolarizing: f64, bias: f64) -> Result<Self> {
        for (name, v) in [("depolarizing", depolarizing), ("bias", bias)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!(
                    "{name} parameter must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(NoiseModel { depolarizing, bias })
    }

    pub fn depolarizing(p: f64) -> Result<Self> {
        NoiseModel::new(p, 0.0)
    }

    pub fn noiseless() -> Self {
        NoiseModel::default()
    }

    pub fn depolarizing_strength(&self) -> f64 {
        self.depolarizing
    }

    pub fn bias_strength(&self) -> f64 {
        self.bias
    }

    /// Shrinks the non-unit coordinates by `1 - p`.
    pub fn apply_to_state(&self, s: &GptVector) -> Result<GptVector> {
        if !s.is_state() {
            return Err(Error::KindMismatch {
                expected: "state",
                found: s.kind().name(),
            });
        }
        let shrink = 1.0 - self.depolarizing;
        Ok(GptVector::state_from_tail(
            &s.coords()[1..]
                .iter()
                .map(|c| shrink * c)
                .collect::<Vec<_>>(),
        ))
    }

    /// `e -> (1 - eps) e + eps u / 2`.
    pub fn apply_to_effect(&self, e: &GptVector) -> Result<GptVector> {
        if e.is_state() {
            return Err(Error::KindMismatch {
                expected: "effect",
                found: e.kind().name(),
            });
        }
        let keep = 1.0 - self.bias;
        let mut coords: Vec<f64> = e.coords().iter().map(|c| keep * c).collect();
        coords[UNIT_INDEX] += 0.5 * self.bias;
        GptVector::effect(coords)
    }

    pub fn apply_to_measurement(&self, m: &BinaryMeasurement) -> Result<BinaryMeasurement> {
        BinaryMeasurement::from_plus(m.label(), self.apply_to_effect(m.plus())?)
    }

    pub fn apply_to_orbit(&self, q: &OrbitQuadruple) -> Result<OrbitQuadruple> {
        let mut states = q.states.clone();
        for s in states.iter_mut() {
            *s = self.apply_to_state(s)?;
        }
        OrbitQuadruple::new(
            states,
            self.apply_to_measurement(&q.m)?,
            self.apply_to_measurement(&q.m_prime)?,
        )
    }
}

/// Applies `noise` to a state or an effect according to its kind.
pub fn apply_noise(target: &GptVector, noise: &NoiseModel) -> Result<GptVector> {
    match target.kind() {
        VectorKind::State => noise.apply_to_state(target),
        VectorKind::Effect => noise.apply_to_effect(target),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutcomeCounts {
    pub plus: u64,
    pub minus: u64,
}

impl OutcomeCounts {
    pub fn shots(&self) -> u64 {
        self.plus + self.minus
    }

    /// Empirical frequency of the `+1` outcome.
    pub fn frequency(&self) -> f64 {
        self.plus as f64 / self.shots() as f64
    }
}

/// Outcome counts for every (preparation, measurement) pair, row-major in
/// preparations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawCounts", into = "RawCounts")]
pub struct CountsTable {
    prep_ids: Vec<String>,
    measurement_labels: Vec<String>,
    cells: Vec<OutcomeCounts>,
}

#[derive(Serialize, Deserialize)]
struct RawCounts {
    prep_ids: Vec<String>,
    measurement_labels: Vec<String>,
    counts: Vec<Vec<OutcomeCounts>>,
}

impl TryFrom<RawCounts> for CountsTable {
    type Error = Error;

    fn try_from(raw: RawCounts) -> Result<Self> {
        if raw.counts.len() != raw.prep_ids.len()
            || raw
                .counts
                .iter()
                .any(|row| row.len() != raw.measurement_labels.len())
        {
            return Err(Error::Format(
                "counts matrix shape does not match labels".into(),
            ));
        }
        CountsTable::new(
            raw.prep_ids,
            raw.measurement_labels,
            raw.counts.into_iter().flatten().collect(),
        )
    }
}

impl From<CountsTable> for RawCounts {
    fn from(t: CountsTable) -> Self {
        let m = t.measurement_labels.len().max(1);
        RawCounts {
            counts: t.cells.chunks(m).map(<[_]>::to_vec).collect(),
            prep_ids: t.prep_ids,
            measurement_labels: t.measurement_labels,
        }
    }
}

impl CountsTable {
    pub fn new(
        prep_ids: Vec<String>,
        measurement_labels: Vec<String>,
        cells: Vec<OutcomeCounts>,
    ) -> Result<Self> {
        if prep_ids.is_empty() || measurement_labels.is_empty() {
            return Err(Error::Format("counts table needs at least one cell".into()));
        }
        if cells.len() != prep_ids.len() * measurement_labels.len() {
            return Err(Error::Format(format!(
                "expected {} cells, found {}",
                prep_ids.len() * measurement_labels.len(),
                cells.len()
            )));
        }
        for labels in [&prep_ids, &measurement_labels] {
            let mut sorted = labels.clone();
            sorted.sort();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::Format(
                    "duplicate preparation or measurement label".into(),
                ));
            }
        }
        if cells.iter().any(|c| c.shots() == 0) {
            return Err(Error::Format("every cell needs at least one shot".into()));
        }
        Ok(CountsTable {
            prep_ids,
            measurement_labels,
            cells,
        })
    }

    pub fn prep_ids(&self) -> &[String] {
        &self.prep_ids
    }

    pub fn measurement_labels(&self) -> &[String] {
        &self.measurement_labels
    }

    pub fn cell(&self, prep: usize, measurement: usize) -> OutcomeCounts {
        self.cells[prep * self.measurement_labels.len() + measurement]
    }

    pub fn cells(&self) -> &[OutcomeCounts] {
        &self.cells
    }

    /// Writes `prep_id,measurement,outcome,count,shots`, two rows per cell
    /// (outcome `+1` then `-1`).
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["prep_id", "measurement", "outcome", "count", "shots"])?;
        for (i, prep) in self.prep_ids.iter().enumerate() {
            for (j, label) in self.measurement_labels.iter().enumerate() {
                let c = self.cell(i, j);
                let shots = c.shots().to_string();
                for (outcome, count) in [("+1", c.plus), ("-1", c.minus)] {
                    w.write_record([prep, label, outcome, &count.to_string(), &shots])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Format(e.to_string()))
    }

    /// Parses the CSV layout of [`CountsTable::write_csv`]. Row order is free;
    /// first appearance fixes the order of preparations and measurements.
    pub fn read_csv<R: io::Read>(reader: R) -> Result<Self> {
        #[derive(Deserialize)]
        struct Row {
            prep_id: String,
            measurement: String,
            outcome: String,
            count: u64,
            shots: u64,
        }
        let mut prep_ids: Vec<String> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut raw: Vec<(usize, usize, bool, u64, u64)> = Vec::new();
        let mut rdr = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.iter().collect::<Vec<_>>()
            != ["prep_id", "measurement", "outcome", "count", "shots"]
        {
            return Err(Error::Format(format!("unexpected CSV header {headers:?}")));
        }
        for row in rdr.deserialize() {
            let row: Row = row?;
            let plus = match row.outcome.as_str() {
                "+1" | "1" | "+" => true,
                "-1" | "-" => false,
                other => return Err(Error::Format(format!("unknown outcome '{other}'"))),
            };
            let index =
                |list: &mut Vec<String>, key: String| match list.iter().position(|k| *k == key) {
                    Some(i) => i,
                    None => {
                        list.push(key);
                        list.len() - 1
                    }
                };
            let i = index(&mut prep_ids, row.prep_id);
            let j = index(&mut labels, row.measurement);
            raw.push((i, j, plus, row.count, row.shots));
        }
        let m = labels.len();
        let mut cells: Vec<(Option<u64>, Option<u64>, Option<u64>)> =
            vec![(None, None, None); prep_ids.len() * m];
        for (i, j, plus, count, shots) in raw {
            let cell = &mut cells[i * m + j];
            let slot = if plus { &mut cell.0 } else { &mut cell.1 };
            if slot.replace(count).is_some() {
                return Err(Error::Format(format!(
                    "duplicate row for ({}, {})",
                    prep_ids[i], labels[j]
                )));
            }
            if cell.2.is_some_and(|s| s != shots) {
                return Err(Error::Format(format!(
                    "inconsistent shots for ({}, {})",
                    prep_ids[i], labels[j]
                )));
            }
            cell.2 = Some(shots);
        }
        let mut out = Vec::with_capacity(cells.len());
        for (k, cell) in cells.into_iter().enumerate() {
            let (i, j) = (k / m.max(1), k % m.max(1));
            match cell {
                (Some(plus), Some(minus), Some(shots)) if plus + minus == shots => {
                    out.push(OutcomeCounts { plus, minus })
                }
                (Some(_), Some(_), Some(_)) => {
                    return Err(Error::Format(format!(
                        "counts for ({}, {}) do not sum to the declared shots",
                        prep_ids[i], labels[j]
                    )))
                }
                _ => {
                    return Err(Error::Format(format!(
                        "missing outcome rows for ({}, {})",
                        prep_ids[i], labels[j]
                    )))
                }
            }
        }
        CountsTable::new(prep_ids, labels, out)
    }
}

/// Draws `shots` outcomes for every (preparation, measurement) cell.
pub fn sample_counts(
    preps: &[(String, GptVector)],
    measurements: &[BinaryMeasurement],
    shots: u64,
    seed: u64,
) -> Result<CountsTable> {
    sample_counts_with(preps, measurements, shots, seed, Exec::default())
}

pub fn sample_counts_with(
    preps: &[(String, GptVector)],
    measurements: &[BinaryMeasurement],
    shots: u64,
    seed: u64,
    exec: Exec,
) -> Result<CountsTable> {
    if shots == 0 {
        return Err(Error::InvalidParameter("shots must be >= 1".into()));
    }
    let m = measurements.len();
    let cells = exec.map_range(preps.len() * m, |k| -> Result<OutcomeCounts> {
        let (state, meas) = (&preps[k / m].1, &measurements[k % m]);
        let p = state.probability(meas.plus())?.clamp(0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ k as u64);
        let binomial = Binomial::new(shots, p)
            .map_err(|e| Error::InvalidParameter(format!("binomial({shots}, {p}): {e}")))?;
        let plus = binomial.sample(&mut rng);
        Ok(OutcomeCounts {
            plus,
            minus: shots - plus,
        })
    });
    CountsTable::new(
        preps.iter().map(|(id, _)| id.clone()).collect(),
        measurements
            .iter()
            .map(|mm| mm.label().to_string())
            .collect(),
        cells.into_iter().collect::<Result<Vec<_>>>()?,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trivial_preparations() {
        let plus = prepare(&PrepSettings::new(0.5, 0.0, false).unwrap());
        assert_eq!(plus.coords(), &[1.0, 1.0, 0.0, 0.0]);
        for phi in [0.0, 1.0, 4.0] {
            let left = prepare(&PrepSettings::new(0.0, phi, false).unwrap());
            assert_eq!(left.coords(), &[1.0, 0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn settings_validation() {
        assert!(PrepSettings::new(-0.1, 0.0, false).is_err());
        assert!(PrepSettings::new(1.1, 0.0, false).is_err());
        assert!(PrepSettings::new(0.5, f64::NAN, false).is_err());
        let s = PrepSettings::new(0.5, -PI / 2.0, false).unwrap();
        assert!((s.phase() - 1.5 * PI).abs() < 1e-15);
        assert!(PrepSettings::new(0.5, TAU, false).unwrap().phase() < 1e-15);
    }

    #[test]
    fn measurement_examples() {
        let left = GptVector::state(vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let mixed = GptVector::maximally_mixed(QUBIT_DIM);
        assert_eq!(left.probability(which_way().plus()).unwrap(), 1.0);
        assert_eq!(mixed.probability(which_way().plus()).unwrap(), 0.5);
        let plus = prepare(&PrepSettings::new(0.5, 0.0, false).unwrap());
        assert_eq!(plus.probability(which_phase().plus()).unwrap(), 1.0);
        assert_eq!(left.probability(which_phase().plus()).unwrap(), 0.5);
    }

    #[test]
    fn degenerate_orbit_at_half() {
        let q = orbit_preparations(0.5).unwrap();
        let xs: Vec<(f64, f64)> = q.states.iter().map(GptVector::plane_point).collect();
        assert_eq!(xs, vec![(1.0, 0.0), (-1.0, 0.0), (-1.0, 0.0), (1.0, 0.0)]);
    }

    #[test]
    fn noise_examples() {
        let s = prepare(&PrepSettings::new(0.3, 1.0, true).unwrap());
        assert_eq!(apply_noise(&s, &NoiseModel::noiseless()).unwrap(), s);
        assert_eq!(
            apply_noise(&s, &NoiseModel::depolarizing(1.0).unwrap()).unwrap(),
            GptVector::maximally_mixed(QUBIT_DIM)
        );
        let biased = NoiseModel::new(0.0, 0.2).unwrap();
        let e = apply_noise(which_way().plus(), &biased).unwrap();
        assert!((e.coords()[0] - 0.5).abs() < 1e-15 && (e.coords()[3] - 0.4).abs() < 1e-15);
        assert!(biased.apply_to_state(which_way().plus()).is_err());
        assert!(biased.apply_to_effect(&s).is_err());
        assert!(NoiseModel::new(1.5, 0.0).is_err());
    }

    #[test]
    fn deterministic_extremes() {
        let preps = vec![(
            "left".to_string(),
            prepare(&PrepSettings::new(0.0, 0.0, false).unwrap()),
        )];
        let t = sample_counts(&preps, &[which_way()], 1000, 9).unwrap();
        assert_eq!(
            t.cell(0, 0),
            OutcomeCounts {
                plus: 1000,
                minus: 0
            }
        );
        assert!(sample_counts(&preps, &[which_way()], 0, 9).is_err());
    }

    #[test]
    fn csv_layout() {
        let t = CountsTable::new(
            vec!["a".into(), "b".into()],
            vec!["m".into()],
            vec![
                OutcomeCounts { plus: 3, minus: 1 },
                OutcomeCounts { plus: 0, minus: 4 },
            ],
        )
        .unwrap();
        let text = t.to_csv_string().unwrap();
        assert_eq!(
            text,
            "prep_id,measurement,outcome,count,shots\na,m,+1,3,4\na,m,-1,1,4\nb,m,+1,0,4\nb,m,-1,4,4\n"
        );
        assert_eq!(CountsTable::read_csv(text.as_bytes()).unwrap(), t);

        let bad_sum = "prep_id,measurement,outcome,count,shots\na,m,+1,3,5\na,m,-1,1,5\n";
        assert!(CountsTable::read_csv(bad_sum.as_bytes()).is_err());
        let missing = "prep_id,measurement,outcome,count,shots\na,m,+1,3,4\n";
        assert!(CountsTable::read_csv(missing.as_bytes()).is_err());
        let header = "prep,measurement,outcome,count,shots\na,m,+1,3,4\n";
        assert!(CountsTable::read_csv(header.as_bytes()).is_err());

        let json = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<CountsTable>(&json).unwrap(), t);
    }
}
