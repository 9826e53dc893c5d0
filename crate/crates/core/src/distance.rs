//! Neural-net distance estimation for choosing the tolerance, plus the
//! mean-shift and 1-Wasserstein diagnostics.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::net::{self, BettingNet, NetConfig, TrainState};
use crate::par::map_indexed;
use crate::rng::{derive_seed, seeded};
use crate::score::ScorePair;

const SPLIT_STREAM: u64 = 0x5EED_5B11;
const POOL_STREAM: u64 = 0x9001;

/// Supplies fresh pairs for each repeat of an estimate.
pub trait PairSource: Sync {
    /// `n` pairs for repeat `repeat`; must be deterministic in its inputs.
    fn pairs(&self, repeat: usize, n: usize) -> Result<Vec<ScorePair>>;
}

/// A fixed pool of pairs, reshuffled per repeat.
#[derive(Debug, Clone)]
pub struct PairPool {
    pairs: Vec<ScorePair>,
    seed: u64,
}

impl PairPool {
    pub fn new(pairs: Vec<ScorePair>, seed: u64) -> Self {
        Self { pairs, seed }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl PairSource for PairPool {
    fn pairs(&self, repeat: usize, n: usize) -> Result<Vec<ScorePair>> {
        if n > self.pairs.len() {
            return Err(AuditError::InsufficientData { needed: n, available: self.pairs.len() });
        }
        let mut idx: Vec<usize> = (0..self.pairs.len()).collect();
        idx.shuffle(&mut seeded(derive_seed(self.seed, &[POOL_STREAM, repeat as u64])));
        Ok(idx[..n].iter().map(|&i| self.pairs[i].clone()).collect())
    }
}

/// Pairs the first half of a single sample with its second half; both sides
/// then come from one distribution.
pub fn split_halves(sample: &[Vec<f64>]) -> Vec<ScorePair> {
    let half = sample.len() / 2;
    sample[..half].iter().zip(&sample[half..2 * half]).map(|(a, b)| ScorePair::new(a.clone(), b.clone())).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DistanceConfig {
    pub batch_size: usize,
    /// Sample budget `N`; the estimate uses `T = N / b` rounds.
    pub max_samples: usize,
    pub repeats: usize,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for DistanceConfig {
    fn default() -> Self {
        Self { batch_size: 100, max_samples: 4000, repeats: 10, seed: 0, net: NetConfig::default() }
    }
}

impl DistanceConfig {
    pub fn rounds(&self) -> usize {
        self.max_samples / self.batch_size.max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.repeats == 0 {
            return Err(AuditError::InvalidConfig("batch_size and repeats must be positive".into()));
        }
        if self.max_samples < 2 * self.batch_size {
            return Err(AuditError::InvalidConfig(format!(
                "max_samples {} must be at least twice batch_size {}",
                self.max_samples, self.batch_size
            )));
        }
        self.net.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceEstimate {
    /// Estimated distance: the averaged per-pair geometric-mean score minus 1.
    pub value: f64,
    /// The averaged geometric-mean score itself (near 1 for equal
    /// distributions).
    pub literal: f64,
    pub batch_size: usize,
    pub sample_budget: usize,
    pub repeats: usize,
    /// Sample standard deviation of the per-repeat values.
    pub std_across_repeats: f64,
    pub per_repeat: Vec<f64>,
}

/// Per-pair geometric means of the betting score at round 2 (net trained on
/// one batch) and round `T` (net trained on `T - 1` batches), no tolerance.
fn repeat_scores(pairs: &[ScorePair], b: usize, rounds: usize, cfg: &NetConfig, seed: u64) -> Result<(f64, f64)> {
    let mut rng = seeded(seed);
    let mut net = BettingNet::new(cfg, &mut rng)?;
    let mut state = TrainState::new(derive_seed(seed, &[SPLIT_STREAM]), cfg.holdout_fraction);
    let mut early = f64::NAN;
    for t in 1..=rounds {
        let batch = &pairs[(t - 1) * b..t * b];
        if t == 2 || t == rounds {
            let g = (net.sum_log_factors(batch)? / b as f64).exp();
            if t == 2 {
                early = g;
            }
            if t == rounds {
                return Ok((early, g));
            }
        }
        state.extend(batch.iter().cloned());
        (net, state) = net::train(net, state, cfg, &mut rng)?;
    }
    unreachable!("rounds >= 2")
}

pub fn estimate_nn_distance(source: &dyn PairSource, cfg: &DistanceConfig) -> Result<DistanceEstimate> {
    cfg.validate()?;
    let b = cfg.batch_size;
    let rounds = cfg.rounds();
    let needed = rounds * b;
    let literal = map_indexed(cfg.repeats, |r| -> Result<f64> {
        let pairs = source.pairs(r, needed)?;
        if pairs.len() < needed {
            return Err(AuditError::InsufficientData { needed, available: pairs.len() });
        }
        let (early, late) = repeat_scores(&pairs, b, rounds, &cfg.net, derive_seed(cfg.seed, &[r as u64]))?;
        Ok(0.5 * (early + late))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let per_repeat: Vec<f64> = literal.iter().map(|v| v - 1.0).collect();
    let n = per_repeat.len() as f64;
    let value = per_repeat.iter().sum::<f64>() / n;
    let std = if per_repeat.len() > 1 {
        (per_repeat.iter().map(|v| (v - value).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Ok(DistanceEstimate {
        value,
        literal: value + 1.0,
        batch_size: b,
        sample_budget: cfg.max_samples,
        repeats: cfg.repeats,
        std_across_repeats: std,
        per_repeat,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    /// Pairs the late-round network was trained on.
    pub training_size: usize,
    pub estimate: DistanceEstimate,
}

/// One independent estimate per training size `s`, using a budget of
/// `s + b` so the final round's net has seen about `s` pairs.
pub fn convergence_study(source: &dyn PairSource, sizes: &[usize], cfg: &DistanceConfig) -> Result<Vec<ConvergenceRow>> {
    sizes
        .iter()
        .map(|&s| {
            if s < cfg.batch_size {
                return Err(AuditError::InvalidConfig(format!("training size {s} is below batch_size {}", cfg.batch_size)));
            }
            let c = DistanceConfig { max_samples: s + cfg.batch_size, ..cfg.clone() };
            Ok(ConvergenceRow { training_size: s, estimate: estimate_nn_distance(source, &c)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    /// Tolerance to use: the estimate floored at zero.
    pub epsilon: f64,
    pub estimate: DistanceEstimate,
    pub seed: u64,
}

/// Estimates the distance between two acceptable variants and returns it as
/// a tolerance.
pub fn calibrate_epsilon(reference: &dyn PairSource, cfg: &DistanceConfig) -> Result<Calibration> {
    let estimate = estimate_nn_distance(reference, cfg)?;
    Ok(Calibration { epsilon: estimate.value.max(0.0), estimate, seed: cfg.seed })
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical 1-Wasserstein distance. Equal sizes use the sorted-sample
/// formula; otherwise the area between the two empirical CDFs.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(AuditError::EmptyInput("wasserstein1 needs two non-empty samples"));
    }
    let (a, b) = (sorted(a), sorted(b));
    if a.len() == b.len() {
        return Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64);
    }
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut area = 0.0;
    let mut prev = a[0].min(b[0]);
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        area += (i as f64 / n - j as f64 / m).abs() * (next - prev);
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        prev = next;
    }
    Ok(area)
}

/// `mean(b) - mean(a)`.
pub fn mean_shift(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(AuditError::EmptyInput("mean_shift needs two non-empty samples"));
    }
    let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
    Ok(mean(b) - mean(a))
}
