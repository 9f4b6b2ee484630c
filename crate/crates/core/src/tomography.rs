//! Theory-agnostic tomography: fit GPT state and effect vectors to outcome
//! frequencies without assuming quantum theory.
//!
//! For a candidate rank `d`, states are `s_i = (1, t_i)` with `t_i` in
//! `R^(d-1)` and each measurement column `j` gets a `+1` effect `e_j` in
//! `R^d`. The unit effect is the first basis vector, so the unit column of the
//! data is reproduced exactly and is not part of the fit. The objective
//!
//! ```text
//! sum_ij w_ij (f_ij - s_i . e_j)^2,   w_ij = shots / (f_ij (1 - f_ij) + 1 / shots)
//! ```
//!
//! is minimized by alternating least squares over the state block and the
//! effect block. Each block update moves from the current point toward the
//! unconstrained block minimizer only as far as every predicted probability
//! stays in `[0, 1]`, so iterates stay feasible and the residual never
//! increases.
//!
//! Rank selection holds out a seeded 20% of the cells. Ranks whose full-data
//! residual is clearly worse than the best (by more than the statistical
//! noise of the residual) are rejected as underfitting; among the rest the
//! smallest rank whose holdout residual is statistically indistinguishable
//! from the best holdout residual wins. Held-out cells are scored with the
//! variance of the predicted probability rather than of the observed
//! frequency: an observed 0 or 1 would otherwise give its cell a weight of
//! `shots^2` and let one boundary cell decide the rank.
//!
//! The probed preparations and measurements are assumed tomographically
//! complete for the fragment being characterized. Nothing here can detect a
//! state or effect direction that the data never probes.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::gpt::{BinaryMeasurement, GptVector, UNIT_INDEX};
use crate::interferometer::CountsTable;

pub const HOLDOUT_FRACTION: f64 = 0.2;
pub const MAX_ITERATIONS: usize = 5000;
/// Relative residual decrease below which an alternating fit has converged.
pub const RELATIVE_TOL: f64 = 1e-12;
/// For count data, a fit has also converged once the weighted residual fell
/// by less than `STALL_TOL * max(residual, 1)` over the last `STALL_WINDOW`
/// iterations. The residual itself fluctuates by about `sqrt(2 N)` between
/// data sets, so such a drop carries no information.
pub const STALL_WINDOW: usize = 100;
pub const STALL_TOL: f64 = 1e-3;
/// Residuals below this are treated as an exact factorization.
const ABSOLUTE_FLOOR: f64 = 1e-28;
/// Tolerance on fitted probabilities of a returned fit.
pub const FIT_PROB_TOL: f64 = 1e-6;

/// Frequencies of the `+1` outcome with per-cell least-squares weights,
/// row-major in preparations.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyTable {
    prep_ids: Vec<String>,
    labels: Vec<String>,
    freqs: Vec<f64>,
    weights: Vec<f64>,
    /// Shots per cell; empty for exact tables.
    shots: Vec<f64>,
    finite_shots: bool,
}

impl FrequencyTable {
    pub fn from_counts(counts: &CountsTable) -> Self {
        let shots: Vec<f64> = counts.cells().iter().map(|c| c.shots() as f64).collect();
        let freqs: Vec<f64> = counts.cells().iter().map(|c| c.frequency()).collect();
        let weights = freqs
            .iter()
            .zip(&shots)
            .map(|(&f, &n)| n / (f * (1.0 - f) + 1.0 / n))
            .collect();
        FrequencyTable {
            prep_ids: counts.prep_ids().to_vec(),
            labels: counts.measurement_labels().to_vec(),
            freqs,
            weights,
            shots,
            finite_shots: true,
        }
    }

    /// Exact probabilities (the infinite-shot limit), all weights 1.
    pub fn exact(prep_ids: Vec<String>, labels: Vec<String>, freqs: Vec<f64>) -> Result<Self> {
        if prep_ids.is_empty() || labels.is_empty() {
            return Err(Error::Format(
                "frequency table needs at least one cell".into(),
            ));
        }
        if freqs.len() != prep_ids.len() * labels.len() {
            return Err(Error::Format(format!(
                "expected {} frequencies, found {}",
                prep_ids.len() * labels.len(),
                freqs.len()
            )));
        }
        if let Some(&f) = freqs.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            return Err(Error::ProbabilityOutOfRange(f));
        }
        let weights = vec![1.0; freqs.len()];
        Ok(FrequencyTable {
            prep_ids,
            labels,
            freqs,
            weights,
            shots: Vec::new(),
            finite_shots: false,
        })
    }

    pub fn n_preps(&self) -> usize {
        self.prep_ids.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.labels.len()
    }

    pub fn prep_ids(&self) -> &[String] {
        &self.prep_ids
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn frequency(&self, prep: usize, measurement: usize) -> f64 {
        self.freqs[prep * self.labels.len() + measurement]
    }

    pub fn weight(&self, prep: usize, measurement: usize) -> f64 {
        self.weights[prep * self.labels.len() + measurement]
    }

    pub fn has_finite_shots(&self) -> bool {
        self.finite_shots
    }

    fn check_degenerate(&self) -> Result<()> {
        let (n, m) = (self.n_preps(), self.n_measurements());
        if n < 2 {
            return Ok(());
        }
        for j in 0..m {
            let col = (0..n).map(|i| self.frequency(i, j));
            let (lo, hi) = col.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
                (lo.min(f), hi.max(f))
            });
            if hi - lo <= f64::EPSILON {
                return Err(Error::DegenerateData(format!(
                    "measurement '{}' has the same frequency {lo} for every preparation",
                    self.labels[j]
                )));
            }
        }
        Ok(())
    }
}

/// Result of the alternating fit at one rank.
#[derive(Debug, Clone, PartialEq)]
pub struct RankFit {
    pub rank: usize,
    /// `n x d`, first column 1.
    pub states: Vec<Vec<f64>>,
    /// `m x d`.
    pub effects: Vec<Vec<f64>>,
    /// Weighted residual over the cells the fit was trained on.
    pub residual: f64,
    /// Residual after each outer iteration.
    pub trace: Vec<f64>,
    pub converged: bool,
    /// Index of the restart that produced this fit.
    pub restart: usize,
}

impl RankFit {
    fn predict(&self, i: usize, j: usize) -> f64 {
        dot(&self.states[i], &self.effects[j])
    }
}

/// Selection diagnostics for one candidate rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankScore {
    pub rank: usize,
    pub training_residual: f64,
    pub holdout_residual: f64,
    /// Whether the full-data fit converged before the iteration cap.
    pub converged: bool,
    /// Survived the underfitting cut.
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyFit {
    pub prep_ids: Vec<String>,
    /// One `+1` effect per measurement; the `-1` effect is the unit minus it.
    pub effect_labels: Vec<String>,
    pub states: Vec<GptVector>,
    pub effects: Vec<GptVector>,
    pub rank: usize,
    pub training_residual: f64,
    pub holdout_residual: f64,
    pub rank_scores: Vec<RankScore>,
    pub seed: u64,
    pub restarts: usize,
}

impl TomographyFit {
    /// Parses and checks shapes, kinds and the unit-coordinate gauge.
    pub fn from_json(text: &str) -> Result<Self> {
        let fit: TomographyFit = serde_json::from_str(text)?;
        fit.validate()?;
        Ok(fit)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rank == 0 {
            return Err(Error::Format("fit rank must be >= 1".into()));
        }
        if self.states.len() != self.prep_ids.len()
            || self.effects.len() != self.effect_labels.len()
        {
            return Err(Error::Format(
                "fit vectors do not match their labels".into(),
            ));
        }
        for v in self.states.iter().chain(&self.effects) {
            if v.dim() != self.rank {
                return Err(Error::DimensionMismatch {
                    expected: self.rank,
                    found: v.dim(),
                });
            }
        }
        if let Some(v) = self.states.iter().find(|v| !v.is_state()) {
            return Err(Error::KindMismatch {
                expected: "state",
                found: v.kind().name(),
            });
        }
        if let Some(v) = self.effects.iter().find(|v| v.is_state()) {
            return Err(Error::KindMismatch {
                expected: "effect",
                found: v.kind().name(),
            });
        }
        Ok(())
    }

    pub fn state(&self, prep_id: &str) -> Option<&GptVector> {
        let i = self.prep_ids.iter().position(|p| p == prep_id)?;
        Some(&self.states[i])
    }

    /// The fitted two-outcome measurement with the given label.
    pub fn measurement(&self, label: &str) -> Result<BinaryMeasurement> {
        let j = self
            .effect_labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::InvalidParameter(format!("no fitted measurement '{label}'")))?;
        BinaryMeasurement::from_plus(label, self.effects[j].clone())
    }

    /// `s_i . e_j` for the fitted vectors.
    pub fn predicted(&self, prep: usize, measurement: usize) -> f64 {
        dot(
            self.states[prep].coords(),
            self.effects[measurement].coords(),
        )
    }

    /// Largest distance of a fitted probability outside `[0, 1]`.
    pub fn max_probability_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.states.len() {
            for j in 0..self.effects.len() {
                let p = self.predicted(i, j);
                worst = worst.max(-p).max(p - 1.0);
            }
        }
        worst
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Fits every candidate rank, selects one and returns the full-data fit at
/// that rank.
pub fn fit_gpt(
    counts: &CountsTable,
    rank_candidates: &[usize],
    seed: u64,
    restarts: usize,
) -> Result<TomographyFit> {
    fit_gpt_with(counts, rank_candidates, seed, restarts, Exec::default())
}

pub fn fit_gpt_with(
    counts: &CountsTable,
    rank_candidates: &[usize],
    seed: u64,
    restarts: usize,
    exec: Exec,
) -> Result<TomographyFit> {
    fit_frequencies(
        &FrequencyTable::from_counts(counts),
        rank_candidates,
        seed,
        restarts,
        exec,
    )
}

pub fn fit_frequencies(
    table: &FrequencyTable,
    rank_candidates: &[usize],
    seed: u64,
    restarts: usize,
    exec: Exec,
) -> Result<TomographyFit> {
    let (n, m) = (table.n_preps(), table.n_measurements());
    let ranks = validate_ranks(table, rank_candidates)?;
    if restarts == 0 {
        return Err(Error::InvalidParameter("restarts must be >= 1".into()));
    }
    table.check_degenerate()?;

    let full = vec![true; n * m];
    let train = holdout_mask(n, m, *ranks.last().expect("validated"), seed);
    let jobs: Vec<(usize, bool)> = ranks
        .iter()
        .flat_map(|&d| [(d, true), (d, false)])
        .collect();
    let fits = exec.map(&jobs, |&(d, all)| {
        fit_rank(
            table,
            if all { &full } else { &train },
            d,
            seed,
            restarts,
            exec,
        )
    });
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;

    let n_holdout = train.iter().filter(|t| !**t).count();
    let mut scores: Vec<RankScore> = ranks
        .iter()
        .enumerate()
        .map(|(k, &d)| {
            let (full_fit, train_fit) = (&fits[2 * k], &fits[2 * k + 1]);
            RankScore {
                rank: d,
                training_residual: full_fit.residual,
                holdout_residual: holdout_residual(table, train_fit, &train),
                converged: full_fit.converged,
                accepted: false,
            }
        })
        .collect();

    let chosen =
        select_rank(&mut scores, table, n_holdout).ok_or(Error::NoConvergence { restarts })?;
    let best = &fits[2 * chosen];
    let fit = TomographyFit {
        prep_ids: table.prep_ids.clone(),
        effect_labels: table.labels.clone(),
        states: best
            .states
            .iter()
            .map(|s| GptVector::state(s.clone()))
            .collect::<Result<_>>()?,
        effects: best
            .effects
            .iter()
            .map(|e| GptVector::effect(e.clone()))
            .collect::<Result<_>>()?,
        rank: best.rank,
        training_residual: best.residual,
        holdout_residual: scores[chosen].holdout_residual,
        rank_scores: scores,
        seed,
        restarts,
    };
    debug_assert!(fit.max_probability_violation() <= FIT_PROB_TOL);
    Ok(fit)
}

fn validate_ranks(table: &FrequencyTable, candidates: &[usize]) -> Result<Vec<usize>> {
    let max = table.n_preps().min(table.n_measurements() + 1);
    if candidates.is_empty() {
        return Err(Error::InvalidParameter("no rank candidates".into()));
    }
    if let Some(&d) = candidates.iter().find(|&&d| d == 0 || d > max) {
        return Err(Error::InvalidParameter(format!(
            "rank {d} outside [1, {max}] for {} preparations and {} effects",
            table.n_preps(),
            table.n_measurements() + 1
        )));
    }
    let mut ranks = candidates.to_vec();
    ranks.sort_unstable();
    ranks.dedup();
    Ok(ranks)
}

/// Picks the chosen index into `scores`, marking accepted ranks.
fn select_rank(
    scores: &mut [RankScore],
    table: &FrequencyTable,
    n_holdout: usize,
) -> Option<usize> {
    let n_cells = (table.n_preps() * table.n_measurements()) as f64;
    let (train_band, holdout_band) = if table.finite_shots {
        (
            (1e-12 * n_cells).max(6.0 * (2.0 * n_cells).sqrt()),
            2.0 * (2.0 * n_holdout as f64).sqrt(),
        )
    } else {
        (1e-12 * n_cells, 1e-12 * (n_holdout as f64).max(1.0))
    };
    // An iteration-capped fit only overstates its residual, so it still
    // competes; with no converged full-data fit the data are not trusted.
    if !scores.iter().any(|s| s.converged) {
        return None;
    }
    let best_train = scores
        .iter()
        .map(|s| s.training_residual)
        .fold(f64::INFINITY, f64::min);
    if !best_train.is_finite() {
        return None;
    }
    for s in scores.iter_mut() {
        s.accepted = s.training_residual <= best_train + train_band;
    }
    let best_holdout = scores
        .iter()
        .filter(|s| s.accepted)
        .map(|s| s.holdout_residual)
        .fold(f64::INFINITY, f64::min);
    scores
        .iter()
        .position(|s| s.accepted && s.holdout_residual <= best_holdout + holdout_band)
}

/// `true` marks a training cell. A cell is held out only while its row and
/// column keep at least `keep` training cells, so that every state and effect
/// of a rank-`keep` model stays pinned down by training data.
fn holdout_mask(n: usize, m: usize, keep: usize, seed: u64) -> Vec<bool> {
    let keep = keep.max(1);
    let total = n * m;
    let target = (HOLDOUT_FRACTION * total as f64).round() as usize;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut train = vec![true; total];
    let mut row_left = vec![m; n];
    let mut col_left = vec![n; m];
    let mut held = 0;
    for c in order {
        if held == target {
            break;
        }
        let (i, j) = (c / m, c % m);
        if row_left[i] > keep && col_left[j] > keep {
            train[c] = false;
            row_left[i] -= 1;
            col_left[j] -= 1;
            held += 1;
        }
    }
    train
}

fn weighted_residual(
    table: &FrequencyTable,
    fit: &RankFit,
    include: impl Fn(usize) -> bool,
) -> f64 {
    let m = table.n_measurements();
    (0..table.n_preps() * m)
        .filter(|&c| include(c))
        .map(|c| {
            let r = table.freqs[c] - fit.predict(c / m, c % m);
            table.weights[c] * r * r
        })
        .sum()
}

/// Held-out cells weighted by `shots / (p (1 - p) + 1 / shots)` at the
/// predicted probability `p`.
fn holdout_residual(table: &FrequencyTable, fit: &RankFit, train: &[bool]) -> f64 {
    let m = table.n_measurements();
    (0..table.n_preps() * m)
        .filter(|&c| !train[c])
        .map(|c| {
            let p = fit.predict(c / m, c % m);
            let w = if table.finite_shots {
                let (n, q) = (table.shots[c], p.clamp(0.0, 1.0));
                n / (q * (1.0 - q) + 1.0 / n)
            } else {
                table.weights[c]
            };
            let r = table.freqs[c] - p;
            w * r * r
        })
        .sum()
}

/// Best of `restarts` alternating fits at rank `d` on the cells marked in
/// `train`. Restart 0 starts from the principal components of the data; later
/// restarts perturb that start with seeded Gaussian noise.
pub fn fit_rank(
    table: &FrequencyTable,
    train: &[bool],
    d: usize,
    seed: u64,
    restarts: usize,
    exec: Exec,
) -> Result<RankFit> {
    if train.len() != table.freqs.len() {
        return Err(Error::DimensionMismatch {
            expected: table.freqs.len(),
            found: train.len(),
        });
    }
    if d == 0 {
        return Err(Error::InvalidParameter("rank must be >= 1".into()));
    }
    if d == 1 {
        return Ok(rank_one(table, train));
    }
    let base = pca_start(table, train, d);
    let runs = exec.map_range(restarts.max(1), |k| {
        let mut start = base.clone();
        if k > 0 {
            perturb(&mut start, seed, k);
        }
        shrink_to_feasible(&mut start);
        let mut fit = alternate(table, train, start);
        fit.restart = k;
        fit
    });
    let mut best: Option<RankFit> = None;
    for run in runs {
        let better = match &best {
            None => true,
            Some(b) => {
                (run.converged && !b.converged)
                    || (run.converged == b.converged && run.residual < b.residual)
            }
        };
        if better {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

/// Rank 1 has closed form: every state is `(1)` and each effect is the
/// weighted mean frequency of its column.
fn rank_one(table: &FrequencyTable, train: &[bool]) -> RankFit {
    let (n, m) = (table.n_preps(), table.n_measurements());
    let effects = (0..m)
        .map(|j| {
            let (num, den) = (0..n)
                .map(|i| i * m + j)
                .filter(|&c| train[c])
                .fold((0.0, 0.0), |(a, b), c| {
                    (a + table.weights[c] * table.freqs[c], b + table.weights[c])
                });
            vec![if den > 0.0 { num / den } else { 0.5 }]
        })
        .collect();
    let mut fit = RankFit {
        rank: 1,
        states: vec![vec![1.0]; n],
        effects,
        residual: 0.0,
        trace: Vec::new(),
        converged: true,
        restart: 0,
    };
    fit.residual = weighted_residual(table, &fit, |c| train[c]);
    fit.trace.push(fit.residual);
    fit
}

#[derive(Clone)]
struct Factors {
    states: Vec<Vec<f64>>,
    effects: Vec<Vec<f64>>,
}

fn pca_start(table: &FrequencyTable, train: &[bool], d: usize) -> Factors {
    let (n, m) = (table.n_preps(), table.n_measurements());
    let means: Vec<f64> = (0..m)
        .map(|j| {
            let col: Vec<f64> = (0..n)
                .map(|i| i * m + j)
                .filter(|&c| train[c])
                .map(|c| table.freqs[c])
                .collect();
            if col.is_empty() {
                0.5
            } else {
                col.iter().sum::<f64>() / col.len() as f64
            }
        })
        .collect();
    let centered = DMatrix::from_fn(n, m, |i, j| {
        let c = i * m + j;
        if train[c] {
            table.freqs[c] - means[j]
        } else {
            0.0
        }
    });
    let svd = centered.svd(true, true);
    let (u, vt) = (svd.u.expect("u requested"), svd.v_t.expect("v_t requested"));
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let k = d - 1;
    let states = (0..n)
        .map(|i| {
            let mut s = vec![1.0];
            for c in 0..k {
                s.push(order.get(c).map_or(0.0, |&o| {
                    u[(i, o)] * svd.singular_values[o].max(1e-6).sqrt()
                }));
            }
            s
        })
        .collect();
    let effects = (0..m)
        .map(|j| {
            let mut e = vec![means[j]];
            for c in 0..k {
                e.push(order.get(c).map_or(0.0, |&o| {
                    let sv = svd.singular_values[o];
                    vt[(o, j)] * sv / sv.max(1e-6).sqrt()
                }));
            }
            e
        })
        .collect();
    Factors { states, effects }
}

fn perturb(start: &mut Factors, seed: u64, restart: usize) {
    let tails: Vec<f64> = start.states.iter().flat_map(|s| s[1..].to_vec()).collect();
    let rms = (tails.iter().map(|t| t * t).sum::<f64>() / tails.len().max(1) as f64).sqrt();
    let sigma = if rms > 0.0 { 0.5 * rms } else { 0.1 };
    let normal = Normal::new(0.0, sigma).expect("finite positive sigma");
    let mut rng =
        ChaCha8Rng::seed_from_u64(seed ^ (restart as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for s in &mut start.states {
        for t in &mut s[1..] {
            *t += normal.sample(&mut rng);
        }
    }
}

/// Scales every state tail by the largest `c` in `[0, 1]` keeping all
/// predictions in `[0, 1]`. At `c = 0` predictions are the effects' unit
/// coordinates, which the start sets to column means.
fn shrink_to_feasible(f: &mut Factors) {
    let mut c: f64 = 1.0;
    for s in &f.states {
        for e in &f.effects {
            let base = e[0];
            let delta = dot(&s[1..], &e[1..]);
            c = c.min(step_limit(base, delta));
        }
    }
    for s in &mut f.states {
        for t in &mut s[1..] {
            *t *= c;
        }
    }
}

/// Largest `a` in `[0, 1]` with `p + a * delta` in `[0, 1]`.
fn step_limit(p: f64, delta: f64) -> f64 {
    let a = if delta > 0.0 {
        (1.0 - p) / delta
    } else if delta < 0.0 {
        -p / delta
    } else {
        1.0
    };
    a.clamp(0.0, 1.0)
}

fn alternate(table: &FrequencyTable, train: &[bool], start: Factors) -> RankFit {
    let (n, m) = (table.n_preps(), table.n_measurements());
    let d = start.states[0].len();
    let Factors {
        mut states,
        mut effects,
    } = start;
    let residual_of = |states: &[Vec<f64>], effects: &[Vec<f64>]| -> f64 {
        (0..n * m)
            .filter(|&c| train[c])
            .map(|c| {
                let r = table.freqs[c] - dot(&states[c / m], &effects[c % m]);
                table.weights[c] * r * r
            })
            .sum()
    };
    let mut residual = residual_of(&states, &effects);
    let mut trace = vec![residual];
    let mut converged = residual <= ABSOLUTE_FLOOR;
    let mut iterations = 0;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        for i in 0..n {
            let cells: Vec<usize> = (0..m).map(|j| i * m + j).collect();
            let rows: Vec<&[f64]> = effects.iter().map(|e| &e[1..]).collect();
            let offsets: Vec<f64> = effects.iter().map(|e| e[0]).collect();
            let tail = block_update(table, train, &cells, &rows, &offsets, &states[i][1..]);
            states[i][1..].copy_from_slice(&tail);
        }
        for j in 0..m {
            let cells: Vec<usize> = (0..n).map(|i| i * m + j).collect();
            let rows: Vec<&[f64]> = states.iter().map(|s| s.as_slice()).collect();
            let offsets = vec![0.0; n];
            let e = block_update(table, train, &cells, &rows, &offsets, &effects[j]);
            effects[j] = e;
        }
        let next = residual_of(&states, &effects);
        debug_assert!(
            next <= residual * (1.0 + 1e-12) + 1e-300,
            "residual increased from {residual} to {next}"
        );
        let decrease = residual - next;
        residual = next;
        trace.push(residual);
        let stalled = table.finite_shots
            && trace.len() > STALL_WINDOW
            && trace[trace.len() - 1 - STALL_WINDOW] - residual <= STALL_TOL * residual.max(1.0);
        converged = residual <= ABSOLUTE_FLOOR || decrease <= RELATIVE_TOL * residual || stalled;
    }
    RankFit {
        rank: d,
        states,
        effects,
        residual,
        trace,
        converged,
        restart: 0,
    }
}

/// One block of the alternating fit. Predictions for `cells[k]` are
/// `offsets[k] + rows[k] . v`.
///
/// Moves from `current` toward the weighted least-squares minimizer as far as
/// feasibility allows. A cell that blocks the step is then held at its bound
/// and the minimizer is recomputed within that constraint, so an iterate that
/// sits on the boundary can still slide along it. Every accepted step lowers
/// the block residual or leaves it unchanged.
fn block_update(
    table: &FrequencyTable,
    train: &[bool],
    cells: &[usize],
    rows: &[&[f64]],
    offsets: &[f64],
    current: &[f64],
) -> Vec<f64> {
    let p = current.len();
    let fitted: Vec<usize> = (0..cells.len()).filter(|&k| train[cells[k]]).collect();
    if fitted.is_empty() || p == 0 {
        return current.to_vec();
    }
    let a = DMatrix::from_fn(fitted.len(), p, |r, c| {
        let k = fitted[r];
        table.weights[cells[k]].sqrt() * rows[k][c]
    });
    let b = DVector::from_fn(fitted.len(), |r, _| {
        let k = fitted[r];
        table.weights[cells[k]].sqrt() * (table.freqs[cells[k]] - offsets[k])
    });
    let predict = |v: &[f64], k: usize| offsets[k] + dot(rows[k], v);
    let block_residual = |v: &[f64]| -> f64 {
        fitted
            .iter()
            .map(|&k| {
                let r = table.freqs[cells[k]] - predict(v, k);
                table.weights[cells[k]] * r * r
            })
            .sum()
    };

    let mut v = current.to_vec();
    let mut value = block_residual(&v);
    // Orthonormal basis of the pinned rows; steps stay orthogonal to it.
    let mut pinned: Vec<DVector<f64>> = Vec::new();
    let mut held = vec![false; cells.len()];
    while pinned.len() < p {
        let projector = {
            let mut m = DMatrix::<f64>::identity(p, p);
            for q in &pinned {
                m -= q * q.transpose();
            }
            m
        };
        let residual = &b - &a * DVector::from_column_slice(&v);
        let ap = &a * &projector;
        let svd = ap.svd(true, true);
        let smax = svd.singular_values.max();
        if smax == 0.0 {
            break;
        }
        let Ok(z) = svd.solve(&residual, 1e-12 * smax) else {
            break;
        };
        let step = &projector * z;
        let mut alpha: f64 = 1.0;
        let mut blocking = None;
        for k in (0..cells.len()).filter(|&k| !held[k]) {
            let limit = step_limit(predict(&v, k), dot(rows[k], step.as_slice()));
            if limit < alpha {
                alpha = limit;
                blocking = Some(k);
            }
        }
        let candidate: Vec<f64> = v
            .iter()
            .zip(step.iter())
            .map(|(x, d)| x + alpha * d)
            .collect();
        let next = block_residual(&candidate);
        if next <= value {
            v = candidate;
            value = next;
        }
        let Some(k) = blocking else { break };
        held[k] = true;
        let mut w = DVector::from_column_slice(rows[k]);
        for q in &pinned {
            w -= q * q.dot(&w);
        }
        let norm = w.norm();
        if norm
            <= 1e-12
                * DVector::from_column_slice(rows[k])
                    .norm()
                    .max(f64::MIN_POSITIVE)
        {
            continue;
        }
        pinned.push(w / norm);
    }
    v
}

/// Applies the invertible map `A` (first column the unit vector, so the
/// state gauge is kept) minimizing `sum_i |s_i A - r_i|^2`; effects become
/// `A^-1 e` so every probability is unchanged.
pub fn gauge_align(fit: &TomographyFit, reference: &[GptVector]) -> Result<TomographyFit> {
    let d = fit.rank;
    if reference.len() != fit.states.len() {
        return Err(Error::SingularMap(format!(
            "{} reference states for {} fitted states",
            reference.len(),
            fit.states.len()
        )));
    }
    if let Some(r) = reference.iter().find(|r| r.dim() != d) {
        return Err(Error::SingularMap(format!(
            "reference dimension {} differs from fit rank {d}",
            r.dim()
        )));
    }
    let n = fit.states.len();
    let s = DMatrix::from_fn(n, d, |i, k| fit.states[i].coords()[k]);
    let svd = s.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-10 * smax.max(1.0) {
        return Err(Error::SingularMap(
            "fitted states do not span the fit space".into(),
        ));
    }
    let mut a = DMatrix::<f64>::zeros(d, d);
    a[(UNIT_INDEX, 0)] = 1.0;
    for k in 1..d {
        let target = DVector::from_fn(n, |i, _| reference[i].coords()[k]);
        let col = svd
            .solve(&target, 0.0)
            .map_err(|e| Error::SingularMap(e.into()))?;
        a.set_column(k, &col);
    }
    let sv = a.clone().svd(false, false).singular_values;
    if sv.min() <= 1e-12 * sv.max() {
        return Err(Error::SingularMap("alignment map is not invertible".into()));
    }
    let inv = a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::SingularMap("alignment map is not invertible".into()))?;
    let states = (0..n)
        .map(|i| {
            let row = s.row(i) * &a;
            let mut c: Vec<f64> = row.iter().copied().collect();
            c[UNIT_INDEX] = 1.0;
            GptVector::state(c)
        })
        .collect::<Result<_>>()?;
    let effects = fit
        .effects
        .iter()
        .map(|e| {
            let v = &inv * DVector::from_column_slice(e.coords());
            GptVector::effect(v.iter().copied().collect())
        })
        .collect::<Result<_>>()?;
    Ok(TomographyFit {
        states,
        effects,
        ..fit.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interferometer::{orbit_preparations, which_phase, which_way, OutcomeCounts};

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    /// Exact probabilities of the r = 3/4 orbit under which-way and
    /// which-phase, in the 3-dimensional plane fragment.
    fn orbit_table() -> (FrequencyTable, Vec<GptVector>) {
        let q = orbit_preparations(0.75).unwrap();
        let (z, x) = (which_way(), which_phase());
        let mut freqs = Vec::new();
        let mut plane = Vec::new();
        for s in &q.states {
            freqs.push(s.probability(z.plus()).unwrap());
            freqs.push(s.probability(x.plus()).unwrap());
            let c = s.coords();
            plane.push(GptVector::state(vec![1.0, c[1], c[3]]).unwrap());
        }
        let t = FrequencyTable::exact(ids("s", 4), vec!["Z".into(), "X".into()], freqs).unwrap();
        (t, plane)
    }

    #[test]
    fn exact_orbit_data_selects_rank_three() {
        let (table, plane) = orbit_table();
        let fit = fit_frequencies(&table, &[1, 2, 3], 7, 3, Exec::Sequential).unwrap();
        assert_eq!(fit.rank, 3);
        assert!(fit.training_residual < 1e-18, "{}", fit.training_residual);
        let aligned = gauge_align(&fit, &plane).unwrap();
        for (a, b) in aligned.states.iter().zip(&plane) {
            assert!(a.max_abs_diff(b) < 1e-9);
        }
    }

    #[test]
    fn single_cell_gives_empirical_frequency() {
        let counts = CountsTable::new(
            vec!["p".into()],
            vec!["m".into()],
            vec![OutcomeCounts { plus: 3, minus: 7 }],
        )
        .unwrap();
        let fit = fit_gpt(&counts, &[1], 0, 1).unwrap();
        assert_eq!(fit.rank, 1);
        assert!((fit.predicted(0, 0) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn constant_column_is_degenerate() {
        let t = FrequencyTable::exact(
            ids("s", 3),
            vec!["a".into(), "b".into()],
            vec![0.5, 0.1, 0.5, 0.7, 0.5, 0.2],
        )
        .unwrap();
        assert!(matches!(
            fit_frequencies(&t, &[2], 0, 1, Exec::Sequential),
            Err(Error::DegenerateData(_))
        ));
    }

    #[test]
    fn rank_candidates_are_checked() {
        let (table, _) = orbit_table();
        for bad in [&[][..], &[0], &[4]] {
            assert!(matches!(
                fit_frequencies(&table, bad, 0, 1, Exec::Sequential),
                Err(Error::InvalidParameter(_))
            ));
        }
    }

    #[test]
    fn align_to_itself_is_identity() {
        let (table, _) = orbit_table();
        let fit = fit_frequencies(&table, &[3], 1, 1, Exec::Sequential).unwrap();
        let again = gauge_align(&fit, &fit.states).unwrap();
        for (a, b) in again.states.iter().zip(&fit.states) {
            assert!(a.max_abs_diff(b) < 1e-12);
        }
        for (a, b) in again.effects.iter().zip(&fit.effects) {
            assert!(a.max_abs_diff(b) < 1e-9);
        }
    }

    #[test]
    fn rank_mismatch_is_singular() {
        let (table, plane) = orbit_table();
        let fit = fit_frequencies(&table, &[2], 1, 1, Exec::Sequential).unwrap();
        assert!(matches!(
            gauge_align(&fit, &plane),
            Err(Error::SingularMap(_))
        ));
    }

    #[test]
    fn holdout_keeps_every_row_and_column() {
        let train = holdout_mask(4, 2, 1, 11);
        assert_eq!(train.iter().filter(|t| !**t).count(), 2);
        for i in 0..4 {
            assert!(train[i * 2] || train[i * 2 + 1]);
        }
        let train = holdout_mask(12, 7, 5, 3);
        assert_eq!(train.iter().filter(|t| !**t).count(), 17);
        for i in 0..12 {
            assert!((0..7).filter(|&j| train[i * 7 + j]).count() >= 5);
        }
        for j in 0..7 {
            assert!((0..12).filter(|&i| train[i * 7 + j]).count() >= 5);
        }
    }

    #[test]
    fn fit_json_round_trips() {
        let (table, _) = orbit_table();
        let fit = fit_frequencies(&table, &[3], 1, 1, Exec::Sequential).unwrap();
        let text = serde_json::to_string(&fit).unwrap();
        assert_eq!(TomographyFit::from_json(&text).unwrap(), fit);
    }
}
