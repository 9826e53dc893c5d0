//! The sequential auditing test: score each batch with the network trained
//! on earlier batches, update wealth, check the threshold, then train.

use serde::{Deserialize, Serialize};

use crate::config::{log_threshold, TestConfig};
use crate::error::{AuditError, Result};
use crate::net::{self, BettingNet, TrainState};
use crate::rng::{derive_seed, seeded, AuditRng};
use crate::score::{validate_batch, PairedBatch, ScorePair};
use crate::wealth::{tolerance_adjusted, update_wealth, Outcome, Verdict, WealthState};

const SPLIT_STREAM: u64 = 0x5EED_5B11;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub samples: usize,
    pub log_score: f64,
    pub log_wealth: f64,
    /// Holdout objective after this round's training; absent when the run
    /// stopped at this round.
    pub holdout_objective: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditTrace {
    pub verdict: Verdict,
    /// Tolerance actually used for scoring.
    pub epsilon: f64,
    /// Per-test level actually used (differs from the configured level under
    /// Bonferroni correction).
    pub alpha: f64,
    pub wealth: WealthState,
    pub rounds: Vec<RoundRecord>,
}

/// What [`Auditor::step`] did with a batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Step {
    Continue { log_score: f64 },
    Finished(Verdict),
}

/// Wealth bookkeeping for one tolerance value.
#[derive(Debug, Clone)]
struct Lane {
    epsilon: f64,
    wealth: WealthState,
    rounds: Vec<RoundRecord>,
    verdict: Option<Verdict>,
}

impl Lane {
    fn new(epsilon: f64) -> Self {
        Self { epsilon, wealth: WealthState::new(), rounds: Vec::new(), verdict: None }
    }

    fn finish_with(&mut self, outcome: Outcome) -> Verdict {
        let v = Verdict { outcome, final_log_wealth: self.wealth.log_wealth };
        self.verdict = Some(v);
        v
    }

    fn into_trace(mut self, alpha: f64) -> AuditTrace {
        let verdict = match self.verdict {
            Some(v) => v,
            None => self.finish_with(Outcome::NotRejected { samples_seen: self.wealth.samples_seen }),
        };
        AuditTrace { verdict, epsilon: self.epsilon, alpha, wealth: self.wealth, rounds: self.rounds }
    }
}

/// Incremental driver of one audit run.
///
/// Training never looks at the tolerance, so a single driver can carry
/// several tolerances over one shared sequence of networks; each lane's
/// trace is identical to a separate run with that tolerance.
#[derive(Debug, Clone)]
pub struct Auditor {
    cfg: TestConfig,
    alpha: f64,
    net: BettingNet,
    train_state: TrainState,
    rng: AuditRng,
    lanes: Vec<Lane>,
}

impl Auditor {
    pub fn new(cfg: TestConfig) -> Result<Self> {
        let alpha = cfg.alpha;
        let eps = cfg.epsilon;
        Self::build(cfg, alpha, &[eps])
    }

    fn build(cfg: TestConfig, alpha: f64, epsilons: &[f64]) -> Result<Self> {
        cfg.validate()?;
        if epsilons.is_empty() {
            return Err(AuditError::EmptyInput("no tolerance values"));
        }
        for &eps in epsilons {
            TestConfig { epsilon: eps, ..cfg.clone() }.validate()?;
        }
        let mut rng = seeded(cfg.seed);
        let net = BettingNet::new(&cfg.net, &mut rng)?;
        let train_state = TrainState::new(derive_seed(cfg.seed, &[SPLIT_STREAM]), cfg.net.holdout_fraction);
        Ok(Self { cfg, alpha, net, train_state, rng, lanes: epsilons.iter().map(|&e| Lane::new(e)).collect() })
    }

    pub fn config(&self) -> &TestConfig {
        &self.cfg
    }

    /// The network that will score the next batch.
    pub fn net(&self) -> &BettingNet {
        &self.net
    }

    pub fn wealth(&self) -> &WealthState {
        &self.lanes[0].wealth
    }

    pub fn rounds(&self) -> &[RoundRecord] {
        &self.lanes[0].rounds
    }

    pub fn verdict(&self) -> Option<Verdict> {
        self.lanes[0].verdict
    }

    pub fn is_finished(&self) -> bool {
        self.lanes.iter().all(|l| l.verdict.is_some())
    }

    /// Processes one batch. Pairs beyond the sample cap are ignored.
    pub fn step(&mut self, batch: PairedBatch) -> Result<Step> {
        if self.is_finished() {
            return Ok(self.lane_step(None));
        }
        let mut batch = validate_batch(batch, self.cfg.dim)?;
        let seen = self.lanes.iter().find(|l| l.verdict.is_none()).map_or(0, |l| l.wealth.samples_seen);
        batch.pairs.truncate(self.cfg.max_samples - seen);
        let n = batch.len();

        // Score strictly before training: the net here saw rounds < t only.
        let sum = self.net.sum_log_factors(&batch.pairs)?;
        let threshold = log_threshold(self.alpha);
        let mut active = false;
        let mut fresh = Vec::new();
        for (k, lane) in self.lanes.iter_mut().enumerate() {
            if lane.verdict.is_some() {
                continue;
            }
            let log_score = tolerance_adjusted(sum, n, lane.epsilon);
            let wealth = std::mem::take(&mut lane.wealth);
            lane.wealth = update_wealth(wealth, log_score, n);
            lane.rounds.push(RoundRecord {
                round: lane.wealth.round,
                samples: lane.wealth.samples_seen,
                log_score,
                log_wealth: lane.wealth.log_wealth,
                holdout_objective: None,
            });
            if lane.wealth.log_wealth >= threshold {
                let (round, samples_seen) = (lane.wealth.round, lane.wealth.samples_seen);
                lane.finish_with(Outcome::RejectedAt { round, samples_seen });
            } else if lane.wealth.samples_seen >= self.cfg.max_samples {
                let samples_seen = lane.wealth.samples_seen;
                lane.finish_with(Outcome::NotRejected { samples_seen });
            } else {
                active = true;
                fresh.push(k);
            }
        }

        if active {
            self.train_state.extend(batch.pairs);
            let net = self.net.clone();
            let state = std::mem::replace(&mut self.train_state, TrainState::new(0, 0.0));
            let (net, state) = net::train(net, state, &self.cfg.net, &mut self.rng)?;
            self.net = net;
            for k in fresh {
                if let Some(r) = self.lanes[k].rounds.last_mut() {
                    r.holdout_objective = state.best_holdout;
                }
            }
            self.train_state = state;
        }
        Ok(self.lane_step(Some(tolerance_adjusted(sum, n, self.lanes[0].epsilon))))
    }

    fn lane_step(&self, log_score: Option<f64>) -> Step {
        match (self.lanes[0].verdict, log_score) {
            (Some(v), _) => Step::Finished(v),
            (None, Some(log_score)) => Step::Continue { log_score },
            (None, None) => unreachable!("finished auditor has a verdict"),
        }
    }

    /// Ends the run. A run that has not stopped is reported as not rejected
    /// at the samples seen so far.
    pub fn finish(self) -> AuditTrace {
        self.finish_all().swap_remove(0)
    }

    fn finish_all(self) -> Vec<AuditTrace> {
        let alpha = self.alpha;
        self.lanes.into_iter().map(|l| l.into_trace(alpha)).collect()
    }
}

/// Runs the audit over a stream of batches whose items may carry ingestion
/// errors. Stops pulling from the stream as soon as the run ends.
pub fn run_audit_stream<I>(batches: I, cfg: &TestConfig) -> Result<AuditTrace>
where
    I: IntoIterator<Item = Result<PairedBatch>>,
{
    drive(Auditor::new(cfg.clone())?, batches)
}

fn drive<I>(auditor: Auditor, batches: I) -> Result<AuditTrace>
where
    I: IntoIterator<Item = Result<PairedBatch>>,
{
    Ok(drive_all(auditor, batches)?.swap_remove(0))
}

fn drive_all<I>(mut auditor: Auditor, batches: I) -> Result<Vec<AuditTrace>>
where
    I: IntoIterator<Item = Result<PairedBatch>>,
{
    for batch in batches {
        auditor.step(batch?)?;
        if auditor.is_finished() {
            break;
        }
    }
    Ok(auditor.finish_all())
}

/// Runs one audit per tolerance in `epsilons` over the same stream and the
/// same network sequence; `cfg.epsilon` is ignored. Each returned trace
/// equals `run_audit` with that tolerance.
pub fn run_audit_grid<I>(batches: I, cfg: &TestConfig, epsilons: &[f64]) -> Result<Vec<AuditTrace>>
where
    I: IntoIterator<Item = Result<PairedBatch>>,
{
    drive_all(Auditor::build(cfg.clone(), cfg.alpha, epsilons)?, batches)
}

pub fn run_audit<I>(batches: I, cfg: &TestConfig) -> Result<AuditTrace>
where
    I: IntoIterator<Item = PairedBatch>,
{
    run_audit_stream(batches.into_iter().map(Ok), cfg)
}

/// The exact test: `epsilon` is forced to zero whatever the config says.
pub fn run_exact<I>(batches: I, cfg: &TestConfig) -> Result<AuditTrace>
where
    I: IntoIterator<Item = PairedBatch>,
{
    let cfg = TestConfig { epsilon: 0.0, ..cfg.clone() };
    run_audit(batches, &cfg)
}

/// Seed of the `k`-th parallel test; stream 0 keeps the base seed.
pub fn stream_seed(seed: u64, k: usize) -> u64 {
    seed.wrapping_add(k as u64)
}

/// Runs `m` audits side by side, each at level `alpha / m` (wealth
/// threshold `m / alpha`), so the family-wise error stays below `alpha`.
pub fn run_parallel_bonferroni<I>(streams: Vec<I>, cfg: &TestConfig) -> Result<Vec<AuditTrace>>
where
    I: IntoIterator<Item = PairedBatch>,
{
    if streams.is_empty() {
        return Err(AuditError::EmptyInput("no streams to test"));
    }
    let m = streams.len() as f64;
    streams
        .into_iter()
        .enumerate()
        .map(|(k, stream)| {
            let cfg = TestConfig { seed: stream_seed(cfg.seed, k), ..cfg.clone() };
            let alpha = cfg.alpha / m;
            let eps = cfg.epsilon;
            drive(Auditor::build(cfg, alpha, &[eps])?, stream.into_iter().map(Ok))
        })
        .collect()
}

/// True if any test of the family rejected.
pub fn family_rejected(traces: &[AuditTrace]) -> bool {
    traces.iter().any(|t| t.verdict.rejected())
}

/// Splits `d`-dimensional pairs into `d` scalar streams, one per behavior.
pub fn split_dimensions(pairs: &[ScorePair]) -> Vec<Vec<ScorePair>> {
    let d = pairs.first().map_or(0, ScorePair::dim);
    (0..d).map(|k| pairs.iter().map(|p| ScorePair::scalar(p.a[k], p.b[k])).collect()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::score::into_batches;

    fn small_cfg() -> TestConfig {
        let mut cfg = TestConfig { max_samples: 400, batch_size: 50, ..Default::default() };
        cfg.net.hidden_widths = vec![8, 8];
        cfg.net.max_epochs = 20;
        cfg
    }

    #[test]
    fn empty_stream_is_not_rejected() {
        let trace = run_audit(Vec::<PairedBatch>::new(), &small_cfg()).unwrap();
        assert_eq!(trace.verdict.outcome, Outcome::NotRejected { samples_seen: 0 });
        assert_eq!(trace.verdict.final_log_wealth, 0.0);
        assert!(trace.rounds.is_empty());
    }

    #[test]
    fn first_round_pays_exactly_the_tolerance() {
        let cfg = TestConfig { epsilon: 0.01, ..small_cfg() };
        let pairs: Vec<_> = (0..50).map(|i| ScorePair::scalar(i as f64 / 50.0, 0.3)).collect();
        let trace = run_audit(into_batches(pairs, 50), &cfg).unwrap();
        assert!((trace.rounds[0].log_score + 0.5).abs() < 1e-12);
    }

    #[test]
    fn exact_test_overrides_epsilon() {
        let cfg = TestConfig { epsilon: 0.1, ..small_cfg() };
        let pairs: Vec<_> = (0..100).map(|i| ScorePair::scalar(i as f64 / 100.0, 0.5)).collect();
        let trace = run_exact(into_batches(pairs, 50), &cfg).unwrap();
        assert_eq!(trace.epsilon, 0.0);
        assert_eq!(trace.rounds[0].log_score, 0.0);
    }

    #[test]
    fn sample_cap_truncates_the_last_batch() {
        let cfg = TestConfig { max_samples: 120, ..small_cfg() };
        let pairs: Vec<_> = (0..200).map(|i| ScorePair::scalar((i % 10) as f64 / 10.0, ((i + 3) % 10) as f64 / 10.0)).collect();
        let trace = run_audit(into_batches(pairs, 50), &cfg).unwrap();
        assert_eq!(trace.wealth.samples_seen, 120);
        assert_eq!(trace.rounds.len(), 3);
        assert_eq!(trace.rounds.last().unwrap().holdout_objective, None);
    }

    #[test]
    fn invalid_batch_propagates() {
        let bad = PairedBatch::new(vec![ScorePair::scalar(0.5, 1.5)], 1);
        assert!(matches!(run_audit(vec![bad], &small_cfg()), Err(AuditError::OutOfRange { .. })));
    }

    #[test]
    fn bonferroni_uses_split_level() {
        let cfg = small_cfg();
        let mk = || into_batches((0..100).map(|_| ScorePair::scalar(0.5, 0.5)).collect(), 50);
        let traces = run_parallel_bonferroni(vec![mk(), mk()], &cfg).unwrap();
        assert_eq!(traces.len(), 2);
        for t in &traces {
            assert_eq!(t.alpha, 0.025);
            assert!((log_threshold(t.alpha) - 3.688879454113936).abs() < 1e-12);
        }
        let single = run_parallel_bonferroni(vec![mk()], &cfg).unwrap();
        assert_eq!(single[0], run_audit(mk(), &cfg).unwrap());
    }

    #[test]
    fn grid_lanes_match_separate_runs() {
        let pairs: Vec<_> = (0..400).map(|i| ScorePair::scalar(((i * 7) % 13) as f64 / 13.0, ((i * 5) % 11) as f64 / 11.0)).collect();
        let cfg = small_cfg();
        let grid = [0.0, 0.01, 0.2];
        let lanes = run_audit_grid(into_batches(pairs.clone(), 50).into_iter().map(Ok), &cfg, &grid).unwrap();
        for (eps, lane) in grid.iter().zip(&lanes) {
            let single = run_audit(into_batches(pairs.clone(), 50), &TestConfig { epsilon: *eps, ..cfg.clone() }).unwrap();
            assert_eq!(&single, lane);
        }
    }

    #[test]
    fn splits_dimensions_into_scalar_streams() {
        let pairs = vec![ScorePair::new(vec![0.1, 0.2], vec![0.3, 0.4])];
        let split = split_dimensions(&pairs);
        assert_eq!(split, vec![vec![ScorePair::scalar(0.1, 0.3)], vec![ScorePair::scalar(0.2, 0.4)]]);
    }
}
