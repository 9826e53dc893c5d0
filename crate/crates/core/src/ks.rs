//! Two-sample Kolmogorov-Smirnov primitives and the repeated-KS audit, a
//! deliberately uncorrected baseline whose false-positive rate inflates
//! under continuous monitoring.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::score::{validate_batch, PairedBatch};
use crate::wealth::{Outcome, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub m: usize,
}

fn sorted_checked(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(AuditError::EmptyInput("KS needs two non-empty samples"));
    }
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(AuditError::NonFinite { pair: i, dim: 0 });
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Largest gap between the two empirical CDFs, evaluated at every pooled
/// sample point (so ties are counted on both sides at once).
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    let (a, b) = (sorted_checked(a)?, sorted_checked(b)?);
    let (n, m) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(d)
}

/// Kolmogorov limiting tail `Q(lambda) = 2 sum_{k>=1} (-1)^(k-1) exp(-2 k^2 lambda^2)`.
///
/// The alternating series converges slowly for small `lambda`; there the
/// equivalent Jacobi-theta form
/// `1 - sqrt(2 pi)/lambda * sum_{k>=1} exp(-(2k-1)^2 pi^2 / (8 lambda^2))` is used.
pub fn kolmogorov_q(lambda: f64) -> f64 {
    const TERM_TOL: f64 = 1e-12;
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let mut sum = 0.0;
        for k in 1.. {
            let j = (2 * k - 1) as f64;
            let term = (-(j * j) * std::f64::consts::PI.powi(2) / (8.0 * lambda * lambda)).exp();
            sum += term;
            if term < TERM_TOL {
                break;
            }
        }
        return 1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * sum;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * lambda * lambda).exp();
        sum += sign * term;
        if term < TERM_TOL {
            break;
        }
        sign = -sign;
    }
    2.0 * sum
}

/// Asymptotic p-value at `lambda = D sqrt(n m / (n + m))`, clamped to
/// `(0, 1]`.
pub fn ks_pvalue(d: f64, n: usize, m: usize) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let lambda = d * (nf * mf / (nf + mf)).sqrt();
    kolmogorov_q(lambda).clamp(f64::MIN_POSITIVE, 1.0)
}

pub fn ks_test(a: &[f64], b: &[f64]) -> Result<KsResult> {
    let statistic = ks_statistic(a, b)?;
    Ok(KsResult { statistic, p_value: ks_pvalue(statistic, a.len(), b.len()), n: a.len(), m: b.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsTrace {
    /// `final_log_wealth` carries `ln(1/p)` of the last test run, so KS
    /// verdicts line up with betting verdicts (rejection iff it reaches
    /// `ln(1/alpha)`).
    pub verdict: Verdict,
    pub rounds: Vec<KsResult>,
}

/// Runs a KS test on the growing pools after every batch and rejects on the
/// first `p <= alpha`, with no multiplicity correction.
pub fn repeated_ks_audit<I>(batches: I, alpha: f64) -> Result<KsTrace>
where
    I: IntoIterator<Item = PairedBatch>,
{
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AuditError::InvalidConfig(format!("alpha {alpha} must lie in (0, 1)")));
    }
    let mut pool_a = Vec::new();
    let mut pool_b = Vec::new();
    let mut rounds = Vec::new();
    for (t, batch) in batches.into_iter().enumerate() {
        if let Some(d) = batch.dim().filter(|&d| d != 1) {
            return Err(AuditError::DimMismatch { expected: 1, found: d });
        }
        let batch = validate_batch(batch, 1)?;
        pool_a.extend(batch.pairs.iter().map(|p| p.a[0]));
        pool_b.extend(batch.pairs.iter().map(|p| p.b[0]));
        let res = ks_test(&pool_a, &pool_b)?;
        rounds.push(res);
        if res.p_value <= alpha {
            let verdict = Verdict {
                outcome: Outcome::RejectedAt { round: t + 1, samples_seen: pool_a.len() },
                final_log_wealth: -res.p_value.ln(),
            };
            return Ok(KsTrace { verdict, rounds });
        }
    }
    let final_log_wealth = rounds.last().map_or(0.0, |r| -r.p_value.ln());
    Ok(KsTrace { verdict: Verdict { outcome: Outcome::NotRejected { samples_seen: pool_a.len() }, final_log_wealth }, rounds })
}
