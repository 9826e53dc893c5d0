//! Behavior-score pairs and batch validation.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// One prompt's behavior scores under the baseline model (`a`) and the
/// candidate model (`b`). Both are `d`-dimensional vectors in `[0, 1]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScorePair {
    pub fn new(a: Vec<f64>, b: Vec<f64>) -> Self {
        Self { a, b }
    }

    /// Single-behavior pair.
    pub fn scalar(a: f64, b: f64) -> Self {
        Self { a: vec![a], b: vec![b] }
    }

    pub fn dim(&self) -> usize {
        self.a.len()
    }

    /// Checks the pair against dimension `d`; `index` is only used for error
    /// reporting.
    pub fn check(&self, d: usize, index: usize) -> Result<()> {
        for side in [&self.a, &self.b] {
            if side.len() != d {
                return Err(AuditError::DimMismatch { expected: d, found: side.len() });
            }
            for (dim, &v) in side.iter().enumerate() {
                if !v.is_finite() {
                    return Err(AuditError::NonFinite { pair: index, dim });
                }
                if !(0.0..=1.0).contains(&v) {
                    return Err(AuditError::OutOfRange { pair: index, dim, value: v });
                }
            }
        }
        Ok(())
    }
}

/// An ordered batch of pairs observed in one round of the test.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairedBatch {
    pub pairs: Vec<ScorePair>,
    /// 1-based round index.
    pub round: usize,
}

impl PairedBatch {
    pub fn new(pairs: Vec<ScorePair>, round: usize) -> Self {
        Self { pairs, round }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.pairs.first().map(ScorePair::dim)
    }
}

/// Returns the batch unchanged if it is non-empty and every pair is a valid
/// `d`-dimensional unit-interval pair. Out-of-range scores are rejected,
/// never clipped.
pub fn validate_batch(batch: PairedBatch, d: usize) -> Result<PairedBatch> {
    if batch.pairs.is_empty() {
        return Err(AuditError::EmptyInput("batch has no pairs"));
    }
    for (i, pair) in batch.pairs.iter().enumerate() {
        pair.check(d, i)?;
    }
    Ok(batch)
}

/// Chops a sequence of pairs into batches of `batch_size`; the last batch
/// may be partial.
pub fn into_batches(pairs: Vec<ScorePair>, batch_size: usize) -> Vec<PairedBatch> {
    assert!(batch_size > 0, "batch size must be positive");
    let mut out = Vec::with_capacity(pairs.len().div_ceil(batch_size));
    let mut iter = pairs.into_iter().peekable();
    let mut round = 1;
    while iter.peek().is_some() {
        let chunk: Vec<ScorePair> = iter.by_ref().take(batch_size).collect();
        out.push(PairedBatch::new(chunk, round));
        round += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch(values: &[(f64, f64)]) -> PairedBatch {
        PairedBatch::new(values.iter().map(|&(a, b)| ScorePair::scalar(a, b)).collect(), 1)
    }

    #[test]
    fn valid_batch_is_returned_unchanged() {
        let b = batch(&[(0.0, 1.0), (0.3, 0.7)]);
        assert_eq!(validate_batch(b.clone(), 1).unwrap(), b);
    }

    #[test]
    fn out_of_range_component_is_rejected() {
        let err = validate_batch(batch(&[(0.2, 0.3), (1.2, 0.1)]), 1).unwrap_err();
        assert_eq!(err, AuditError::OutOfRange { pair: 1, dim: 0, value: 1.2 });
        let err = validate_batch(batch(&[(0.2, -0.01)]), 1).unwrap_err();
        assert!(matches!(err, AuditError::OutOfRange { .. }));
    }

    #[test]
    fn nan_component_is_rejected() {
        let err = validate_batch(batch(&[(f64::NAN, 0.3)]), 1).unwrap_err();
        assert_eq!(err, AuditError::NonFinite { pair: 0, dim: 0 });
        let err = validate_batch(batch(&[(0.1, f64::INFINITY)]), 1).unwrap_err();
        assert!(matches!(err, AuditError::NonFinite { .. }));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let b = PairedBatch::new(vec![ScorePair::new(vec![0.1, 0.2], vec![0.3])], 1);
        assert!(matches!(validate_batch(b, 2), Err(AuditError::DimMismatch { .. })));
        assert!(matches!(validate_batch(batch(&[(0.1, 0.2)]), 2), Err(AuditError::DimMismatch { .. })));
    }

    #[test]
    fn batching_keeps_partial_tail() {
        let pairs: Vec<_> = (0..250).map(|_| ScorePair::scalar(0.5, 0.5)).collect();
        let sizes: Vec<_> = into_batches(pairs, 100).iter().map(|b| (b.round, b.len())).collect();
        assert_eq!(sizes, vec![(1, 100), (2, 100), (3, 50)]);
    }
}
