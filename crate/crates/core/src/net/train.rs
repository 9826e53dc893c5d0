//! Online training of the betting network on all pairs seen so far.

use rand::Rng;

use super::{BettingNet, Dropout, NetConfig, PairMatrix, Workspace};
use crate::error::Result;
use crate::rng::unit_hash;
use crate::score::ScorePair;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Objectives recorded after one epoch of a training call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStat {
    /// Training-split objective under that epoch's dropout masks, at the
    /// parameters before the step.
    pub train_objective: f64,
    /// Holdout objective (evaluation mode) after the step.
    pub holdout_objective: Option<f64>,
}

/// Accumulated pairs and early-stopping bookkeeping.
///
/// Each pair is assigned to the holdout split by hashing its arrival index
/// with the split seed, so the assignment never changes as data accumulates.
#[derive(Debug, Clone)]
pub struct TrainState {
    split_seed: u64,
    holdout_fraction: f64,
    seen: u64,
    train_pairs: Vec<ScorePair>,
    holdout_pairs: Vec<ScorePair>,
    /// Total epochs run across all calls.
    pub epoch_counter: usize,
    /// Best holdout objective in the latest call.
    pub best_holdout: Option<f64>,
    pub epochs_since_improvement: usize,
    /// Per-epoch statistics of the latest call.
    pub history: Vec<EpochStat>,
}

impl TrainState {
    pub fn new(split_seed: u64, holdout_fraction: f64) -> Self {
        Self {
            split_seed,
            holdout_fraction,
            seen: 0,
            train_pairs: Vec::new(),
            holdout_pairs: Vec::new(),
            epoch_counter: 0,
            best_holdout: None,
            epochs_since_improvement: 0,
            history: Vec::new(),
        }
    }

    pub fn extend<I: IntoIterator<Item = ScorePair>>(&mut self, pairs: I) {
        for pair in pairs {
            if unit_hash(self.split_seed, self.seen) < self.holdout_fraction {
                self.holdout_pairs.push(pair);
            } else {
                self.train_pairs.push(pair);
            }
            self.seen += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.seen as usize
    }

    pub fn is_empty(&self) -> bool {
        self.seen == 0
    }

    pub fn train_pairs(&self) -> &[ScorePair] {
        &self.train_pairs
    }

    pub fn holdout_pairs(&self) -> &[ScorePair] {
        &self.holdout_pairs
    }
}

/// Full-batch Adam ascent on the training split, warm-started from `net`.
///
/// Stops after `max_epochs`, or once the holdout objective has failed to
/// improve for `patience` consecutive epochs, and returns the parameters
/// with the best holdout objective (the incoming parameters count as epoch
/// zero). Without a holdout split it runs all epochs and returns the last
/// parameters.
pub fn train<R: Rng + ?Sized>(
    net: BettingNet,
    mut state: TrainState,
    cfg: &NetConfig,
    rng: &mut R,
) -> Result<(BettingNet, TrainState)> {
    state.history.clear();
    state.epochs_since_improvement = 0;
    state.best_holdout = None;
    if cfg.max_epochs == 0 || state.train_pairs.is_empty() {
        return Ok((net, state));
    }
    let d = net.input_dim();
    let train_m = PairMatrix::new(&state.train_pairs, d)?;
    let holdout_m = PairMatrix::new(&state.holdout_pairs, d)?;
    let use_holdout = holdout_m.len() > 0;
    let mut train_ws = Workspace::new(net.layout(), 2 * train_m.len());
    let mut holdout_ws = Workspace::new(net.layout(), 2 * holdout_m.len());
    let mut best_value = if use_holdout { Some(net.objective_in(&holdout_m, &mut holdout_ws)?) } else { None };
    let mut best = net.clone();
    let mut current = net;
    let n = current.params.len();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];

    for epoch in 1..=cfg.max_epochs {
        let train_obj = current.objective_and_gradient_in(
            &train_m,
            Some(Dropout { rate: cfg.dropout_rate, rng: &mut *rng }),
            &mut train_ws,
        )?;
        let b1 = 1.0 - BETA1.powi(epoch as i32);
        let b2 = 1.0 - BETA2.powi(epoch as i32);
        for (i, g) in train_ws.grad.iter().enumerate() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g;
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g * g;
            let step = cfg.learning_rate * (m[i] / b1) / ((v[i] / b2).sqrt() + ADAM_EPS);
            // Ascent: the objective is maximized.
            current.params[i] += step;
        }
        state.epoch_counter += 1;

        let holdout = if use_holdout { Some(current.objective_in(&holdout_m, &mut holdout_ws)?) } else { None };
        state.history.push(EpochStat { train_objective: train_obj, holdout_objective: holdout });
        match (holdout, best_value) {
            (Some(h), Some(b)) if h > b => {
                best_value = Some(h);
                best.params.copy_from_slice(&current.params);
                state.epochs_since_improvement = 0;
            }
            (Some(_), _) => {
                state.epochs_since_improvement += 1;
                if state.epochs_since_improvement >= cfg.patience {
                    break;
                }
            }
            (None, _) => best.params.copy_from_slice(&current.params),
        }
    }
    state.best_holdout = best_value;
    Ok((best, state))
}
