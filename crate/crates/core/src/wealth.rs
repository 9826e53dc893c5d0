//! Betting scores and the log-wealth e-process.
//!
//! The wealth `W_t = W_{t-1} * S_t` starting from `W_0 = 1` is tracked only
//! as `log W_t`; the product form overflows on long traces.

use serde::{Deserialize, Serialize};

use crate::config::log_threshold;
use crate::error::{AuditError, Result};
use crate::net::BettingNet;
use crate::score::PairedBatch;

/// Log of the betting score for one batch:
/// `sum_i log(1 + phi(a_i) - phi(b_i)) - n * epsilon`, with `n` the number
/// of pairs actually present (a partial final batch scales `epsilon` by its
/// own size).
pub fn log_betting_score(net: &BettingNet, batch: &PairedBatch, epsilon: f64) -> Result<f64> {
    if batch.is_empty() {
        return Err(AuditError::EmptyInput("cannot score an empty batch"));
    }
    let sum = net.sum_log_factors(&batch.pairs)?;
    Ok(tolerance_adjusted(sum, batch.len(), epsilon))
}

/// `sum - n * epsilon`: charges the tolerance once per pair.
pub(crate) fn tolerance_adjusted(sum: f64, n: usize, epsilon: f64) -> f64 {
    sum - n as f64 * epsilon
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthState {
    pub log_wealth: f64,
    pub round: usize,
    pub samples_seen: usize,
    pub log_score_trace: Vec<f64>,
}

impl Default for WealthState {
    fn default() -> Self {
        Self::new()
    }
}

impl WealthState {
    /// `W_0 = 1`.
    pub fn new() -> Self {
        Self { log_wealth: 0.0, round: 0, samples_seen: 0, log_score_trace: Vec::new() }
    }

    pub fn wealth(&self) -> f64 {
        self.log_wealth.exp()
    }
}

/// Multiplies the wealth by `exp(log_score)` after a round of `pairs` pairs.
pub fn update_wealth(mut state: WealthState, log_score: f64, pairs: usize) -> WealthState {
    debug_assert!(log_score.is_finite(), "log score must be finite");
    state.log_wealth += log_score;
    state.round += 1;
    state.samples_seen += pairs;
    state.log_score_trace.push(log_score);
    state
}

/// `W_t >= 1/alpha`, evaluated in log space.
pub fn threshold_crossed(state: &WealthState, alpha: f64) -> bool {
    state.log_wealth >= log_threshold(alpha)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    RejectedAt { round: usize, samples_seen: usize },
    NotRejected { samples_seen: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    #[serde(flatten)]
    pub outcome: Outcome,
    pub final_log_wealth: f64,
}

impl Verdict {
    pub fn rejected(&self) -> bool {
        matches!(self.outcome, Outcome::RejectedAt { .. })
    }

    pub fn samples_seen(&self) -> usize {
        match self.outcome {
            Outcome::RejectedAt { samples_seen, .. } | Outcome::NotRejected { samples_seen } => samples_seen,
        }
    }

    /// Sample count at rejection, if rejected.
    pub fn rejection_samples(&self) -> Option<usize> {
        match self.outcome {
            Outcome::RejectedAt { samples_seen, .. } => Some(samples_seen),
            Outcome::NotRejected { .. } => None,
        }
    }

    pub fn label(&self) -> &'static str {
        if self.rejected() {
            "REJECTED"
        } else {
            "NOT-REJECTED"
        }
    }
}
