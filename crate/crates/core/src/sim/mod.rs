//! Synthetic score generation, noise injection and the experiment harness.
//!
//! The synthetic families stand in for model score populations; they
//! reproduce statistical phenomena, not any particular model's magnitudes.

mod dist;
mod experiment;

pub use dist::{add_noise, sample_scores, DistributionSpec};
pub use experiment::{
    detection_curve, detection_rate, epsilon_sweep, false_positive_rate, median_rejection_samples, run_experiment,
    run_ks_baseline, summarize, wilson_interval, CellSummary, CurvePoint, ExperimentSpec, RateEstimate, RunRecord,
    SweepPoint, Z95,
};

use crate::distance::PairSource;
use crate::error::Result;
use crate::rng::{derive_seed, seeded};
use crate::score::ScorePair;

/// Fresh independent draws from two distributions for every repeat.
#[derive(Debug, Clone)]
pub struct SpecPairSource {
    pub baseline: DistributionSpec,
    pub candidate: DistributionSpec,
    pub seed: u64,
}

impl PairSource for SpecPairSource {
    fn pairs(&self, repeat: usize, n: usize) -> Result<Vec<ScorePair>> {
        let r = repeat as u64;
        let a = sample_scores(&self.baseline, n, &mut seeded(derive_seed(self.seed, &[0xA, r])))?;
        let b = sample_scores(&self.candidate, n, &mut seeded(derive_seed(self.seed, &[0xB, r])))?;
        Ok(a.into_iter().zip(b).map(|(a, b)| ScorePair::new(a, b)).collect())
    }
}
