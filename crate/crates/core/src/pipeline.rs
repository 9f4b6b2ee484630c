//! End-to-end synthetic test: simulate counts, fit a GPT, build a secondary
//! orbit from the fitted states and evaluate the witness.
//!
//! The fiducial experiment adds preparations and measurements beyond the
//! orbit so that the fitted rank is pinned down by data: with only the four
//! orbit states and two measurements the rank-3 model already fits any data
//! and rank selection has nothing to work with.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, PI};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpt::{BinaryMeasurement, GptVector};
use crate::interferometer::{
    orbit_preparations, orbit_settings, prepare, sample_counts_with, which_phase, which_way,
    CountsTable, NoiseModel, PrepSettings, WHICH_PHASE, WHICH_WAY,
};
use crate::secondary::{
    find_secondary_quadruple_with, witness_report, SecondaryQuadruple, WitnessReport, ORBIT_TOL,
};
use crate::tomography::{fit_gpt_with, gauge_align, TomographyFit};

pub const ORBIT_IDS: [&str; 4] = ["orbit-1", "orbit-2", "orbit-3", "orbit-4"];

/// Preparations and measurements probed by the synthetic experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub preparations: Vec<(String, PrepSettings)>,
    pub measurements: Vec<BinaryMeasurement>,
}

impl Experiment {
    /// The orbit at reflectivity `r`, the six axis states, two tilted states,
    /// and seven measurements (the three axes and four diagonals).
    pub fn standard(r: f64) -> Result<Self> {
        let mut preparations: Vec<(String, PrepSettings)> = ORBIT_IDS
            .iter()
            .map(|id| id.to_string())
            .zip(orbit_settings(r)?)
            .collect();
        for (id, refl, phase) in [
            ("left", 0.0, 0.0),
            ("right", 1.0, 0.0),
            ("plus", 0.5, 0.0),
            ("minus", 0.5, PI),
            ("plus-i", 0.5, FRAC_PI_2),
            ("minus-i", 0.5, 3.0 * FRAC_PI_2),
            ("tilt-a", 0.25, FRAC_PI_4),
            ("tilt-b", 0.6, 4.0 * PI / 3.0),
        ] {
            preparations.push((id.to_string(), PrepSettings::new(refl, phase, false)?));
        }
        let h = FRAC_1_SQRT_2;
        let mut measurements = vec![which_way(), which_phase()];
        for (label, dir) in [
            ("y", [0.0, 1.0, 0.0]),
            ("diag-xz", [h, 0.0, h]),
            ("anti-xz", [h, 0.0, -h]),
            ("diag-yz", [0.0, h, h]),
            ("diag-xy", [h, h, 0.0]),
        ] {
            measurements.push(BinaryMeasurement::along(label, &dir)?);
        }
        Ok(Experiment {
            preparations,
            measurements,
        })
    }

    pub fn prep_ids(&self) -> Vec<String> {
        self.preparations.iter().map(|(id, _)| id.clone()).collect()
    }

    /// States as actually prepared under `noise`.
    pub fn noisy_states(&self, noise: &NoiseModel) -> Result<Vec<(String, GptVector)>> {
        self.preparations
            .iter()
            .map(|(id, s)| Ok((id.clone(), noise.apply_to_state(&prepare(s))?)))
            .collect()
    }

    pub fn noisy_measurements(&self, noise: &NoiseModel) -> Result<Vec<BinaryMeasurement>> {
        self.measurements
            .iter()
            .map(|m| noise.apply_to_measurement(m))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub reflectivity: f64,
    pub depolarizing: f64,
    pub bias: f64,
    pub shots: u64,
    pub seed: u64,
    pub restarts: usize,
    pub ranks: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            reflectivity: 0.75,
            depolarizing: 0.05,
            bias: 0.0,
            shots: 100_000,
            seed: 0,
            restarts: 4,
            ranks: vec![2, 3, 4, 5],
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        PrepSettings::new(self.reflectivity, 0.0, false)?;
        NoiseModel::new(self.depolarizing, self.bias)?;
        if self.shots == 0 {
            return Err(Error::InvalidParameter("shots must be >= 1".into()));
        }
        if self.restarts == 0 {
            return Err(Error::InvalidParameter("restarts must be >= 1".into()));
        }
        if self.ranks.is_empty() {
            return Err(Error::InvalidParameter("no rank candidates".into()));
        }
        Ok(())
    }

    fn noise(&self) -> Result<NoiseModel> {
        NoiseModel::new(self.depolarizing, self.bias)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub config: PipelineConfig,
    pub counts: CountsTable,
    pub fit: TomographyFit,
    /// `fit` mapped onto the noisy true states.
    pub aligned: TomographyFit,
    /// Largest coordinate deviation of an aligned state from the truth.
    pub alignment_error: f64,
    /// Largest deviation of a fitted which-way or which-phase expectation
    /// from the truth, over all preparations.
    pub expectation_error: f64,
    pub secondary: SecondaryQuadruple,
    pub report: WitnessReport,
    /// Witness of the noiseless orbit at the configured reflectivity.
    pub ideal_witness: f64,
}

pub fn run_pipeline(config: &PipelineConfig) -> Result<PipelineResult> {
    run_pipeline_with(config, Exec::default())
}

pub fn run_pipeline_with(config: &PipelineConfig, exec: Exec) -> Result<PipelineResult> {
    config.validate()?;
    let noise = config.noise()?;
    let experiment = Experiment::standard(config.reflectivity)?;
    let truth = experiment.noisy_states(&noise)?;
    let measurements = experiment.noisy_measurements(&noise)?;
    let counts = sample_counts_with(&truth, &measurements, config.shots, config.seed, exec)?;

    let fit = fit_gpt_with(&counts, &config.ranks, config.seed, config.restarts, exec)?;
    let reference: Vec<GptVector> = truth.iter().map(|(_, s)| s.clone()).collect();
    let aligned = gauge_align(&fit, &reference)?;
    let alignment_error = aligned
        .states
        .iter()
        .zip(&reference)
        .map(|(a, b)| a.max_abs_diff(b))
        .fold(0.0, f64::max);

    let fitted_m = aligned.measurement(WHICH_WAY)?;
    let fitted_m_prime = aligned.measurement(WHICH_PHASE)?;
    let mut expectation_error: f64 = 0.0;
    for ((_, s_true), s_fit) in truth.iter().zip(&aligned.states) {
        for (fitted, true_m) in [
            (&fitted_m, &measurements[0]),
            (&fitted_m_prime, &measurements[1]),
        ] {
            expectation_error = expectation_error
                .max((fitted.expectation(s_fit)? - true_m.expectation(s_true)?).abs());
        }
    }

    // Fitted states carry small out-of-plane noise, so the four orbit states
    // alone span a thin tetrahedron in which exact equivalence forces the
    // secondary states toward the center. Every fitted preparation is
    // available for mixing.
    let secondary = find_secondary_quadruple_with(
        &aligned.states,
        &fitted_m,
        &fitted_m_prime,
        ORBIT_TOL,
        exec,
    )?;
    let report = witness_report(&secondary)?;
    let (_, ideal) = ideal_witness(config.reflectivity, 0.0)?;
    Ok(PipelineResult {
        config: config.clone(),
        counts,
        fit,
        aligned,
        alignment_error,
        expectation_error,
        secondary,
        report,
        ideal_witness: ideal.witness,
    })
}

/// The pipeline without statistical noise: the depolarized orbit at `r` with
/// ideal measurements goes straight to the secondary step.
pub fn ideal_witness(r: f64, depolarizing: f64) -> Result<(SecondaryQuadruple, WitnessReport)> {
    let q = NoiseModel::depolarizing(depolarizing)?.apply_to_orbit(&orbit_preparations(r)?)?;
    let secondary =
        find_secondary_quadruple_with(&q.states, &q.m, &q.m_prime, ORBIT_TOL, Exec::Sequential)?;
    let report = witness_report(&secondary)?;
    Ok((secondary, report))
}
