//! WebAssembly entry points for the browser demo.
//!
//! Every export takes and returns JSON strings; the `*_json` functions hold
//! the logic and run natively too.

use serde::{Deserialize, Serialize};
use shiftaudit::distance::{estimate_nn_distance, mean_shift, wasserstein1, DistanceConfig};
use shiftaudit::ks::repeated_ks_audit;
use shiftaudit::net::NetConfig;
use shiftaudit::rng::seeded;
use shiftaudit::score::into_batches;
use shiftaudit::sim::{detection_curve, run_experiment, run_ks_baseline, sample_scores, DistributionSpec, ExperimentSpec, SpecPairSource};
use shiftaudit::{run_audit, AuditError, ScorePair, TestConfig};
use thiserror::Error;
use wasm_bindgen::prelude::*;

#[derive(Debug, Error)]
pub enum DemoError {
    #[error("bad parameters: {0}")]
    Params(#[from] serde_json::Error),
    #[error(transparent)]
    Audit(#[from] AuditError),
}

type Result<T> = std::result::Result<T, DemoError>;

/// Two Beta distributions and the test knobs. Networks are kept small so a
/// browser tab stays responsive.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct Params {
    pub baseline: (f64, f64),
    pub candidate: (f64, f64),
    pub samples: usize,
    pub batch_size: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for Params {
    fn default() -> Self {
        Self { baseline: (2.0, 2.0), candidate: (2.7, 1.45), samples: 1000, batch_size: 50, alpha: 0.05, epsilon: 0.0, folds: 12, seed: 0 }
    }
}

fn small_net() -> NetConfig {
    NetConfig { hidden_widths: vec![16, 16], max_epochs: 40, ..Default::default() }
}

fn beta(p: (f64, f64)) -> DistributionSpec {
    DistributionSpec::beta(p.0, p.1)
}

fn draw_pairs(p: &Params) -> Result<Vec<ScorePair>> {
    let src = SpecPairSource { baseline: beta(p.baseline), candidate: beta(p.candidate), seed: p.seed };
    Ok(shiftaudit::distance::PairSource::pairs(&src, 0, p.samples)?)
}

#[derive(Debug, Serialize)]
struct WealthPoint {
    samples: usize,
    log_wealth: f64,
}

#[derive(Debug, Serialize)]
struct WealthReport {
    threshold: f64,
    verdict: &'static str,
    rejection_samples: Option<usize>,
    betting: Vec<WealthPoint>,
    /// `ln(1/p)` of the repeated KS test on the same stream, per round.
    ks: Vec<WealthPoint>,
}

/// One audit on a fresh stream: the log-wealth path next to the repeated KS
/// evidence `ln(1/p)`.
pub fn wealth_trace_json(params: &str) -> Result<String> {
    let p: Params = serde_json::from_str(params)?;
    let pairs = draw_pairs(&p)?;
    let cfg = TestConfig {
        alpha: p.alpha,
        epsilon: p.epsilon,
        batch_size: p.batch_size.max(1),
        max_samples: p.samples.max(p.batch_size.max(1)),
        seed: p.seed,
        net: small_net(),
        ..Default::default()
    };
    // Run the betting test over the whole stream so the path is visible
    // beyond the crossing; the verdict comes from the stopped run.
    let stopped = run_audit(into_batches(pairs.clone(), cfg.batch_size), &cfg)?;
    let full = run_audit(into_batches(pairs.clone(), cfg.batch_size), &TestConfig { alpha: 1e-300, ..cfg.clone() })?;
    let ks = repeated_ks_audit(into_batches(pairs, cfg.batch_size), 1e-300)?;
    let report = WealthReport {
        threshold: cfg.log_threshold(),
        verdict: stopped.verdict.label(),
        rejection_samples: stopped.verdict.rejection_samples(),
        betting: full.rounds.iter().map(|r| WealthPoint { samples: r.samples, log_wealth: r.log_wealth }).collect(),
        ks: ks
            .rounds
            .iter()
            .map(|r| WealthPoint { samples: r.n, log_wealth: -r.p_value.max(f64::MIN_POSITIVE).ln() })
            .collect(),
    };
    Ok(serde_json::to_string(&report)?)
}

#[derive(Debug, Serialize)]
struct CurveReport {
    samples: Vec<usize>,
    betting: Vec<f64>,
    ks: Vec<f64>,
}

/// Detection rate against sample budget over several folds, for the
/// betting test and the repeated KS test on the same streams.
pub fn detection_curves_json(params: &str) -> Result<String> {
    let p: Params = serde_json::from_str(params)?;
    let spec = ExperimentSpec {
        name: "demo".into(),
        baseline: beta(p.baseline),
        candidate: beta(p.candidate),
        folds: p.folds.max(1),
        samples_per_fold: p.samples,
        batch_size: p.batch_size.max(1),
        alpha: p.alpha,
        epsilons: vec![p.epsilon],
        seed: p.seed,
        net: small_net(),
        ..Default::default()
    };
    let grid: Vec<usize> = (1..=spec.samples_per_fold / spec.batch_size).map(|k| k * spec.batch_size).collect();
    let rates = |records| -> Result<Vec<f64>> { Ok(detection_curve(records, &grid)?.iter().map(|c| c.rate).collect()) };
    let report = CurveReport { betting: rates(&run_experiment(&spec)?)?, ks: rates(&run_ks_baseline(&spec)?)?, samples: grid };
    Ok(serde_json::to_string(&report)?)
}

#[derive(Debug, Serialize)]
struct DistanceReport {
    mean_shift: f64,
    wasserstein1: f64,
    nn_distance: f64,
    nn_distance_std: f64,
    histogram_a: Vec<f64>,
    histogram_b: Vec<f64>,
}

fn histogram(xs: &[f64], bins: usize) -> Vec<f64> {
    let mut h = vec![0.0; bins];
    for &x in xs {
        h[((x * bins as f64) as usize).min(bins - 1)] += 1.0;
    }
    h.iter().map(|c| c / xs.len() as f64).collect()
}

/// Mean shift, 1-Wasserstein and the neural-net distance between the two
/// distributions, with histograms of one sample from each.
pub fn distance_json(params: &str) -> Result<String> {
    let p: Params = serde_json::from_str(params)?;
    let mut rng = seeded(p.seed);
    let a: Vec<f64> = sample_scores(&beta(p.baseline), 5000, &mut rng)?.into_iter().map(|v| v[0]).collect();
    let b: Vec<f64> = sample_scores(&beta(p.candidate), 5000, &mut rng)?.into_iter().map(|v| v[0]).collect();
    let src = SpecPairSource { baseline: beta(p.baseline), candidate: beta(p.candidate), seed: p.seed };
    let batch_size = p.batch_size.max(1);
    let cfg = DistanceConfig { batch_size, max_samples: p.samples.max(2 * batch_size), repeats: 3, seed: p.seed, net: small_net() };
    let est = estimate_nn_distance(&src, &cfg)?;
    let report = DistanceReport {
        mean_shift: mean_shift(&a, &b)?,
        wasserstein1: wasserstein1(&a, &b)?,
        nn_distance: est.value,
        nn_distance_std: est.std_across_repeats,
        histogram_a: histogram(&a, 40),
        histogram_b: histogram(&b, 40),
    };
    Ok(serde_json::to_string(&report)?)
}

fn js(r: Result<String>) -> std::result::Result<String, JsError> {
    r.map_err(|e| JsError::new(&e.to_string()))
}

#[wasm_bindgen]
pub fn wealth_trace(params: &str) -> std::result::Result<String, JsError> {
    js(wealth_trace_json(params))
}

#[wasm_bindgen]
pub fn detection_curves(params: &str) -> std::result::Result<String, JsError> {
    js(detection_curves_json(params))
}

#[wasm_bindgen]
pub fn distance(params: &str) -> std::result::Result<String, JsError> {
    js(distance_json(params))
}
