//! Fold-based experiment harness and its aggregates.

use serde::{Deserialize, Serialize};

use super::dist::{add_noise, sample_scores, DistributionSpec};
use crate::audit::run_audit_grid;
use crate::config::TestConfig;
use crate::error::{AuditError, Result};
use crate::ks::repeated_ks_audit;
use crate::net::NetConfig;
use crate::par::map_indexed;
use crate::rng::{derive_seed, seeded};
use crate::score::{into_batches, ScorePair};
use crate::wealth::Verdict;

const STREAM_A: u64 = 0xA;
const STREAM_B: u64 = 0xB;
const STREAM_NOISE: u64 = 0x4015E;
const STREAM_CELL: u64 = 0xCE11;

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Score distributions and the grid of runs to perform. Baseline scores feed
/// `a`, candidate scores feed `b`; equal specs make a null experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub baseline: DistributionSpec,
    pub candidate: DistributionSpec,
    pub folds: usize,
    pub samples_per_fold: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub epsilons: Vec<f64>,
    /// Standard deviations of the Gaussian noise added to both sides.
    pub noise_sigmas: Vec<f64>,
    pub seed: u64,
    pub net: NetConfig,
    /// Also run the repeated-KS baseline on every (fold, sigma) stream.
    pub ks_baseline: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            baseline: DistributionSpec::beta(2.0, 2.0),
            candidate: DistributionSpec::beta(2.0, 2.0),
            folds: 24,
            samples_per_fold: 4000,
            batch_size: 100,
            alpha: 0.05,
            epsilons: vec![0.0],
            noise_sigmas: vec![0.0],
            seed: 0,
            net: NetConfig::default(),
            ks_baseline: false,
        }
    }
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| AuditError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds == 0 {
            return Err(AuditError::InvalidSpec("folds must be positive".into()));
        }
        if self.epsilons.is_empty() || self.noise_sigmas.is_empty() {
            return Err(AuditError::InvalidSpec("epsilon and sigma grids must be non-empty".into()));
        }
        if let Some(s) = self.noise_sigmas.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
            return Err(AuditError::InvalidSpec(format!("noise sigma {s} must be finite and >= 0")));
        }
        self.baseline.validate()?;
        self.candidate.validate()?;
        if self.baseline.dim() != self.candidate.dim() {
            return Err(AuditError::InvalidSpec("baseline and candidate differ in dimension".into()));
        }
        for &eps in &self.epsilons {
            self.test_config(eps, 0).validate()?;
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.baseline.dim()
    }

    fn test_config(&self, epsilon: f64, seed: u64) -> TestConfig {
        let d = self.dim();
        TestConfig {
            alpha: self.alpha,
            epsilon,
            batch_size: self.batch_size,
            max_samples: self.samples_per_fold,
            dim: d,
            seed,
            net: self.net.clone().with_input_dim(d),
        }
    }

    /// Seed of every audit in `fold`. Cells of one fold share it (and the
    /// noise draws), so comparisons across tolerances and noise levels are
    /// paired rather than confounded with fresh randomness.
    pub fn cell_seed(&self, fold: usize) -> u64 {
        derive_seed(self.seed, &[STREAM_CELL, fold as u64])
    }

    /// The pairs of `fold` with noise level `sigma_idx` applied. Every sigma
    /// of a fold uses the same scores and the same standard-normal draws,
    /// scaled by sigma.
    pub fn fold_pairs(&self, fold: usize, sigma_idx: usize) -> Result<Vec<ScorePair>> {
        let n = self.samples_per_fold;
        let f = fold as u64;
        let a = sample_scores(&self.baseline, n, &mut seeded(derive_seed(self.seed, &[STREAM_A, f])))?;
        let b = sample_scores(&self.candidate, n, &mut seeded(derive_seed(self.seed, &[STREAM_B, f])))?;
        let sigma = self.noise_sigmas[sigma_idx];
        let a = add_noise(a, sigma, &mut seeded(derive_seed(self.seed, &[STREAM_NOISE, f, 0])))?;
        let b = add_noise(b, sigma, &mut seeded(derive_seed(self.seed, &[STREAM_NOISE, f, 1])))?;
        Ok(a.into_iter().zip(b).map(|(a, b)| ScorePair::new(a, b)).collect())
    }
}

/// One fold's outcome in one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub fold: usize,
    pub epsilon: f64,
    pub sigma: f64,
    pub verdict: Verdict,
    pub rejection_samples: Option<usize>,
    pub seed: u64,
    pub final_log_wealth: f64,
}

impl RunRecord {
    fn new(fold: usize, epsilon: f64, sigma: f64, verdict: Verdict, seed: u64) -> Self {
        Self {
            fold,
            epsilon,
            sigma,
            rejection_samples: verdict.rejection_samples(),
            final_log_wealth: verdict.final_log_wealth,
            verdict,
            seed,
        }
    }

    pub fn rejected(&self) -> bool {
        self.verdict.rejected()
    }
}

fn cells(spec: &ExperimentSpec) -> usize {
    spec.folds * spec.noise_sigmas.len()
}

/// One audit per `(fold, epsilon, sigma)` cell, ordered by fold, then
/// sigma, then epsilon.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let n_sigma = spec.noise_sigmas.len();
    let per_cell = map_indexed(cells(spec), |job| -> Result<Vec<RunRecord>> {
        let (fold, s) = (job / n_sigma, job % n_sigma);
        let seed = spec.cell_seed(fold);
        let pairs = spec.fold_pairs(fold, s)?;
        let cfg = spec.test_config(0.0, seed);
        let batches = into_batches(pairs, spec.batch_size).into_iter().map(Ok);
        let traces = run_audit_grid(batches, &cfg, &spec.epsilons)?;
        Ok(traces.into_iter().map(|t| RunRecord::new(fold, t.epsilon, spec.noise_sigmas[s], t.verdict, seed)).collect())
    });
    Ok(per_cell.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect())
}

/// The repeated-KS baseline on the same streams; one record per
/// `(fold, sigma)` with `epsilon = 0`.
pub fn run_ks_baseline(spec: &ExperimentSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    if spec.dim() != 1 {
        return Err(AuditError::DimMismatch { expected: 1, found: spec.dim() });
    }
    let n_sigma = spec.noise_sigmas.len();
    map_indexed(cells(spec), |job| {
        let (fold, s) = (job / n_sigma, job % n_sigma);
        let pairs = spec.fold_pairs(fold, s)?;
        let trace = repeated_ks_audit(into_batches(pairs, spec.batch_size), spec.alpha)?;
        Ok(RunRecord::new(fold, 0.0, spec.noise_sigmas[s], trace.verdict, spec.cell_seed(fold)))
    })
    .into_iter()
    .collect()
}

/// A binomial proportion with its 95% Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub rejected: usize,
    pub total: usize,
    pub rate: f64,
    pub lower: f64,
    pub upper: f64,
}

impl RateEstimate {
    pub fn from_counts(rejected: usize, total: usize) -> Self {
        let (lower, upper) = wilson_interval(rejected, total, Z95);
        Self { rejected, total, rate: rejected as f64 / total as f64, lower, upper }
    }

    /// Half the interval width.
    pub fn half_width(&self) -> f64 {
        0.5 * (self.upper - self.lower)
    }
}

/// Wilson score interval for `k` successes in `n` trials.
pub fn wilson_interval(k: usize, n: usize, z: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "need 0 <= k <= n, n > 0");
    let n = n as f64;
    let p = k as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Fraction of records rejected, with a Wilson interval.
pub fn false_positive_rate(records: &[RunRecord]) -> Result<RateEstimate> {
    if records.is_empty() {
        return Err(AuditError::EmptyInput("no records"));
    }
    Ok(RateEstimate::from_counts(records.iter().filter(|r| r.rejected()).count(), records.len()))
}

/// Same computation as [`false_positive_rate`], named for alternatives.
pub fn detection_rate(records: &[RunRecord]) -> Result<RateEstimate> {
    false_positive_rate(records)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub samples: usize,
    pub rate: f64,
}

/// Fraction of records that rejected within `m` samples, for each `m`.
pub fn detection_curve(records: &[RunRecord], sample_grid: &[usize]) -> Result<Vec<CurvePoint>> {
    if records.is_empty() {
        return Err(AuditError::EmptyInput("no records"));
    }
    let n = records.len() as f64;
    Ok(sample_grid
        .iter()
        .map(|&m| CurvePoint {
            samples: m,
            rate: records.iter().filter(|r| r.rejection_samples.is_some_and(|s| s <= m)).count() as f64 / n,
        })
        .collect())
}

/// Median samples-to-rejection, counting non-rejections as infinite; `None`
/// when the median is a non-rejection.
pub fn median_rejection_samples(records: &[RunRecord]) -> Option<f64> {
    let mut v: Vec<f64> = records.iter().map(|r| r.rejection_samples.map_or(f64::INFINITY, |s| s as f64)).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len();
    let med = if k % 2 == 1 { v[k / 2] } else { 0.5 * (v[k / 2 - 1] + v[k / 2]) };
    med.is_finite().then_some(med)
}

/// Aggregate of one `(epsilon, sigma)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub epsilon: f64,
    pub sigma: f64,
    pub rate: RateEstimate,
    pub median_rejection_samples: Option<f64>,
}

/// One summary per distinct `(epsilon, sigma)`, in first-seen order.
pub fn summarize(records: &[RunRecord]) -> Vec<CellSummary> {
    let mut keys: Vec<(f64, f64)> = Vec::new();
    for r in records {
        if !keys.iter().any(|&(e, s)| e == r.epsilon && s == r.sigma) {
            keys.push((r.epsilon, r.sigma));
        }
    }
    keys.into_iter()
        .map(|(epsilon, sigma)| {
            let cell: Vec<RunRecord> =
                records.iter().filter(|r| r.epsilon == epsilon && r.sigma == sigma).cloned().collect();
            CellSummary {
                epsilon,
                sigma,
                rate: RateEstimate::from_counts(cell.iter().filter(|r| r.rejected()).count(), cell.len()),
                median_rejection_samples: median_rejection_samples(&cell),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub rate: RateEstimate,
}

/// Detection rate per tolerance, all from the same fold ensemble. With
/// several noise levels, the rate pools them.
pub fn epsilon_sweep(spec: &ExperimentSpec) -> Result<Vec<SweepPoint>> {
    let records = run_experiment(spec)?;
    spec.epsilons
        .iter()
        .map(|&epsilon| {
            let cell: Vec<RunRecord> = records.iter().filter(|r| r.epsilon == epsilon).cloned().collect();
            Ok(SweepPoint { epsilon, rate: detection_rate(&cell)? })
        })
        .collect()
}
