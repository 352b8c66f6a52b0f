//! Monte Carlo estimators for the scheme's collision probabilities and
//! expectations.
//!
//! Each estimator returns an [`EstimateReport`] comparing an empirical value
//! against its closed form. Trials run in parallel; trial `i` draws from
//! substream `i` of a base seed taken from the caller's stream, so results do
//! not depend on thread scheduling.
//!
//! Experiments can run at the rounded production `t = ceil(c ln n)` or at the
//! exact real `t = c ln n` ([`TMode::Exact`]). Fractional `t` is realized with
//! the direct sampler, which includes a coordinate with probability
//! `1 - (1-p)^t` for any real `t > 0`.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;

use crate::bitvec::BitVector;
use crate::error::{param_err, Result};
use crate::index::{default_delta, derive_params, query_hp, BudgetedScan, IndexParams, LshIndex};
use crate::io::{gen_planted, gen_shell};
use crate::projection::{sample_dp_t, sample_uniq_direct};
use crate::rng::{seeded, substream, LshRng};

pub const CSV_HEADER: &str = "quantity,trials,empirical,theoretical,stderr,z";

/// How the theoretical value relates to the estimated quantity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    /// The theoretical value is the exact expectation.
    Exact,
    /// The true value is at least the theoretical value.
    Lower,
    /// The true value is at most the theoretical value.
    Upper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EstimateReport {
    pub quantity: String,
    pub trials: u64,
    pub empirical: f64,
    pub theoretical: f64,
    pub stderr: f64,
    /// `(empirical - theoretical) / stderr`.
    pub z: f64,
    pub bound: Bound,
}

impl EstimateReport {
    fn new(
        quantity: &str,
        trials: u64,
        empirical: f64,
        theoretical: f64,
        stderr: f64,
        bound: Bound,
    ) -> Self {
        Self {
            quantity: quantity.to_string(),
            trials,
            empirical,
            theoretical,
            stderr,
            z: (empirical - theoretical) / stderr,
            bound,
        }
    }

    /// Whether the estimate is consistent with the theory at `sigmas` standard
    /// errors: two-sided for exact values, one-sided for bounds.
    pub fn passes(&self, sigmas: f64) -> bool {
        match self.bound {
            Bound::Exact => self.z.abs() <= sigmas,
            Bound::Lower => self.z >= -sigmas,
            Bound::Upper => self.z <= sigmas,
        }
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.quantity, self.trials, self.empirical, self.theoretical, self.stderr, self.z
        )
    }
}

impl fmt::Display for EstimateReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: empirical {:.6} vs theoretical {:.6} over {} trials (se {:.3e}, z {:+.2})",
            self.quantity, self.empirical, self.theoretical, self.trials, self.stderr, self.z
        )
    }
}

/// Binomial standard error at the theoretical rate. At a rate of exactly 0 or
/// 1 the binomial error vanishes; the one-count resolution `1/trials` is used
/// instead so the z-score stays defined.
fn proportion_stderr(rate: f64, trials: u64) -> f64 {
    let se = (rate * (1.0 - rate) / trials as f64).sqrt();
    if se > 0.0 {
        se
    } else {
        1.0 / trials as f64
    }
}

fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    if samples.len() < 2 {
        return (mean, 1.0 / n);
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let se = (var / n).sqrt();
    (mean, if se > 0.0 { se } else { 1.0 / n })
}

fn check_trials(trials: u64) -> Result<()> {
    if trials == 0 {
        return param_err("at least one trial is required");
    }
    Ok(())
}

/// `(1-p)^{k}` for real `k`.
fn pow_one_minus(p: f64, k: f64) -> f64 {
    ((-p).ln_1p() * k).exp()
}

/// Estimates the probability that a `t`-block sequence samples none of a
/// fixed set of `delta` coordinates; theory `(1-p)^{delta·t}`.
///
/// Integer `t` samples block concatenations; fractional `t` uses the direct
/// sampler.
pub fn estimate_miss_prob(
    d: usize,
    p: f64,
    t: f64,
    delta: usize,
    trials: u64,
    rng: &mut LshRng,
) -> Result<EstimateReport> {
    check_trials(trials)?;
    if delta > d {
        return param_err(format!(
            "forbidden set of {delta} coordinates exceeds dimension {d}"
        ));
    }
    if !(t.is_finite() && t > 0.0) {
        return param_err(format!("repetition count t must be positive, got {t}"));
    }
    let blocks = (t.fract() == 0.0).then_some(t as usize);
    let forbidden = delta as u32;
    let mut misses = 0u64;
    for _ in 0..trials {
        let seq = match blocks {
            Some(blocks) => sample_dp_t(d, p, blocks, rng)?,
            None => sample_uniq_direct(d, p, t, rng)?,
        };
        // K = {1, ..., delta}
        if seq.indices().iter().all(|&i| i > forbidden) {
            misses += 1;
        }
    }
    let theory = pow_one_minus(p, delta as f64 * t);
    let empirical = misses as f64 / trials as f64;
    Ok(EstimateReport::new(
        "miss_probability",
        trials,
        empirical,
        theory,
        proportion_stderr(theory, trials),
        Bound::Exact,
    ))
}

/// Which `t` an experiment uses.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TMode {
    /// `ceil(c ln n)`, as production indexes use.
    Rounded,
    /// The real value `c ln n`.
    Exact,
}

/// Problem size and parameter regime of an index experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct Setup {
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub eps: f64,
    pub delta_fail: f64,
    pub t_mode: TMode,
    /// Overrides the derived table count.
    pub tables: Option<usize>,
}

/// Parameters of a [`Setup`] with the real-valued `t` actually sampled.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub params: IndexParams,
    pub t: f64,
}

impl Setup {
    pub fn new(n: usize, d: usize, r: usize, eps: f64) -> Self {
        Self {
            n,
            d,
            r,
            eps,
            delta_fail: default_delta(n),
            t_mode: TMode::Rounded,
            tables: None,
        }
    }

    pub fn exact_t(mut self) -> Self {
        self.t_mode = TMode::Exact;
        self
    }

    pub fn with_delta(mut self, delta_fail: f64) -> Self {
        self.delta_fail = delta_fail;
        self
    }

    pub fn with_tables(mut self, tables: usize) -> Self {
        self.tables = Some(tables);
        self
    }

    /// In [`TMode::Exact`] the table count and `q_near` follow the real `t`;
    /// `params.t` keeps the rounded value.
    pub fn resolve(&self) -> Result<Resolved> {
        let mut params = derive_params(self.n, self.d, self.r, self.eps, self.delta_fail)?;
        let t = match self.t_mode {
            TMode::Rounded => params.t as f64,
            TMode::Exact => {
                if self.n < 2 {
                    return param_err("exact t = c ln n is zero for n = 1");
                }
                let t = params.c * (self.n as f64).ln();
                params.q_near = pow_one_minus(params.p, self.r as f64 * t);
                params.l = ((1.0 / self.delta_fail).ln() / params.q_near)
                    .ceil()
                    .max(1.0) as usize;
                t
            }
        };
        if let Some(l) = self.tables {
            if l == 0 {
                return param_err("table count must be at least 1");
            }
            params.l = l;
        }
        Ok(Resolved { params, t })
    }
}

impl Resolved {
    /// Builds an index over `points` with sequences sampled at this `t`. In
    /// the rounded regime this is identical to [`LshIndex::build`].
    pub fn build(&self, points: Vec<BitVector>, seed: u64) -> Result<LshIndex> {
        let mut rng = seeded(seed);
        let p = &self.params;
        let seqs = (0..p.l)
            .map(|_| sample_uniq_direct(p.d, p.p, self.t, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        LshIndex::from_sequences(points, self.params.clone(), seqs, seed)
    }
}

/// Seeds for one trial: instance and index.
fn trial_seeds(base: u64, trial: u64) -> (u64, u64) {
    let mut rng = substream(base, trial);
    (rng.gen(), rng.gen())
}

fn min_far_distance(params: &IndexParams) -> usize {
    ((1.0 + params.eps) * params.r as f64 - 1e-9).ceil() as usize
}

/// Mean number of candidates (point-table collisions, over a full scan) when
/// every point sits at exactly `far_distance` from the query. Theory, an upper
/// bound: `L · n · (1-p)^{far_distance · t}`, which is `L` at the exact `t`
/// and `far_distance = (1+eps)·r`.
pub fn estimate_far_candidates(
    setup: &Setup,
    far_distance: usize,
    trials: u64,
    rng: &mut LshRng,
) -> Result<EstimateReport> {
    check_trials(trials)?;
    let resolved = setup.resolve()?;
    let params = &resolved.params;
    if far_distance > params.d {
        return param_err(format!(
            "far distance {far_distance} exceeds dimension {}",
            params.d
        ));
    }
    if far_distance < min_far_distance(params) {
        return param_err(format!(
            "far distance {far_distance} is below (1+eps)·r = {}",
            (1.0 + params.eps) * params.r as f64
        ));
    }
    let base: u64 = rng.gen();
    let counts = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (inst_seed, index_seed) = trial_seeds(base, trial);
            let (ds, q) = gen_shell(params.n, params.d, far_distance, inst_seed)?;
            let ix = resolved.build(ds.into_vectors(), index_seed)?;
            Ok(ix.count_candidates(&q)? as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let (mean, se) = mean_and_stderr(&counts);
    let theory = params.l as f64
        * params.n as f64
        * pow_one_minus(params.p, far_distance as f64 * resolved.t);
    Ok(EstimateReport::new(
        "far_candidates",
        trials,
        mean,
        theory,
        se,
        Bound::Upper,
    ))
}

/// Fraction of planted instances (one point at `plant_distance <= r`, the
/// rest beyond `r`) on which the query returns a point. Theory, a lower bound:
/// `1 - (1 - q_near)^L`.
pub fn recall_experiment(
    setup: &Setup,
    plant_distance: usize,
    trials: u64,
    rng: &mut LshRng,
) -> Result<EstimateReport> {
    check_trials(trials)?;
    if plant_distance > setup.r {
        return param_err(format!(
            "plant distance {plant_distance} exceeds the near radius r = {}",
            setup.r
        ));
    }
    let resolved = setup.resolve()?;
    let params = &resolved.params;
    let base: u64 = rng.gen();
    let found = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (inst_seed, index_seed) = trial_seeds(base, trial);
            let inst = gen_planted(params.n, params.d, params.r, plant_distance, inst_seed)?;
            let ix = resolved.build(inst.dataset.into_vectors(), index_seed)?;
            Ok(ix.query(&inst.query)?.is_found() as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let theory = 1.0 - pow_one_minus(params.q_near, params.l as f64);
    Ok(EstimateReport::new(
        "recall",
        trials,
        found as f64 / trials as f64,
        theory,
        proportion_stderr(theory, trials),
        Bound::Lower,
    ))
}

/// Fraction of budgeted scans abandoned when every point sits at exactly
/// `far_distance` from the query. With `budget_factor = 2` and at most `L`
/// expected candidates, Markov's inequality bounds this by `1/2`; the report's
/// theory is `1 / budget_factor` (clamped to 1), an upper bound.
pub fn estimate_abort_rate(
    setup: &Setup,
    far_distance: usize,
    budget_factor: f64,
    trials: u64,
    rng: &mut LshRng,
) -> Result<EstimateReport> {
    check_trials(trials)?;
    if !(budget_factor.is_finite() && budget_factor > 0.0) {
        return param_err(format!(
            "budget factor must be positive, got {budget_factor}"
        ));
    }
    let resolved = setup.resolve()?;
    let params = &resolved.params;
    if far_distance > params.d || far_distance < min_far_distance(params) {
        return param_err(format!(
            "far distance {far_distance} outside [(1+eps)·r, d]"
        ));
    }
    let limit = (budget_factor * params.l as f64).floor() as u64;
    let base: u64 = rng.gen();
    let aborted = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (inst_seed, index_seed) = trial_seeds(base, trial);
            let (ds, q) = gen_shell(params.n, params.d, far_distance, inst_seed)?;
            let ix = resolved.build(ds.into_vectors(), index_seed)?;
            let scan = ix.query_budgeted(&q, limit)?;
            Ok(matches!(scan, BudgetedScan::Aborted { .. }) as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let theory = (1.0 / budget_factor).min(1.0);
    Ok(EstimateReport::new(
        "abort_rate",
        trials,
        aborted as f64 / trials as f64,
        theory,
        proportion_stderr(theory, trials),
        Bound::Upper,
    ))
}

/// Like [`recall_experiment`], but queried through a bank of `bank_size`
/// independently built indexes with [`query_hp`].
pub fn recall_experiment_bank(
    setup: &Setup,
    plant_distance: usize,
    bank_size: usize,
    budget_factor: f64,
    trials: u64,
    rng: &mut LshRng,
) -> Result<EstimateReport> {
    check_trials(trials)?;
    if bank_size == 0 {
        return param_err("bank must hold at least one index");
    }
    if plant_distance > setup.r {
        return param_err(format!(
            "plant distance {plant_distance} exceeds r = {}",
            setup.r
        ));
    }
    let resolved = setup.resolve()?;
    let params = &resolved.params;
    let base: u64 = rng.gen();
    let found = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let (inst_seed, index_seed) = trial_seeds(base, trial);
            let inst = gen_planted(params.n, params.d, params.r, plant_distance, inst_seed)?;
            let pts = inst.dataset.into_vectors();
            let bank = (0..bank_size as u64)
                .map(|b| resolved.build(pts.clone(), index_seed.wrapping_add(b)))
                .collect::<Result<Vec<_>>>()?;
            Ok(query_hp(&bank, &inst.query, budget_factor)?.is_found() as u64)
        })
        .collect::<Result<Vec<u64>>>()?
        .into_iter()
        .sum::<u64>();
    let theory = 1.0 - pow_one_minus(params.q_near, params.l as f64);
    Ok(EstimateReport::new(
        "recall_bank",
        trials,
        found as f64 / trials as f64,
        theory,
        proportion_stderr(theory, trials),
        Bound::Lower,
    ))
}

/// Preset experiments for the three collision-probability claims.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    /// Miss probability of `r` forbidden coordinates at exact `t`:
    /// n = 16, r = 4, eps = 1, so theory is `n^{-c} = 1/4`.
    Lemma1,
    /// Recall with a neighbor planted at distance `r`: n = 1024, d = 128,
    /// r = 8, eps = 1, delta = 1/1024.
    Lemma2a,
    /// Far candidates at exact `t` with every point at `(1+eps)·r`:
    /// n = 256, d = 128, r = 4, eps = 1.
    Lemma2b,
}

impl Suite {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "lemma1" => Some(Self::Lemma1),
            "lemma2a" => Some(Self::Lemma2a),
            "lemma2b" => Some(Self::Lemma2b),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Lemma1 => "lemma1",
            Self::Lemma2a => "lemma2a",
            Self::Lemma2b => "lemma2b",
        }
    }

    pub fn default_trials(&self) -> u64 {
        match self {
            Self::Lemma1 => 100_000,
            Self::Lemma2a => 1_000,
            Self::Lemma2b => 500,
        }
    }

    pub fn run(&self, trials: u64, seed: u64) -> Result<EstimateReport> {
        let mut rng = seeded(seed);
        match self {
            Self::Lemma1 => {
                let (n, r, d) = (16usize, 4usize, 16usize);
                let c = 0.5;
                let t = c * (n as f64).ln();
                let p = -(-1.0 / r as f64).exp_m1();
                estimate_miss_prob(d, p, t, r, trials, &mut rng)
            }
            Self::Lemma2a => {
                let setup = Setup::new(1024, 128, 8, 1.0).with_delta(1.0 / 1024.0);
                recall_experiment(&setup, 8, trials, &mut rng)
            }
            Self::Lemma2b => {
                let setup = Setup::new(256, 128, 4, 1.0).exact_t();
                estimate_far_candidates(&setup, 8, trials, &mut rng)
            }
        }
    }
}
