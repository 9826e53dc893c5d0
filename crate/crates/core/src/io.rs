//! Record formats: line-delimited JSON score pairs in, CSV/JSON run
//! records out.
//!
//! A score line looks like
//! `{"prompt_id": "p17", "score_a": 0.12, "score_b": [0.3]}`; scalar and
//! one-element array scores are equivalent.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::score::{PairedBatch, ScorePair};
use crate::sim::RunRecord;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScoreValue {
    Scalar(f64),
    Vector(Vec<f64>),
}

impl ScoreValue {
    pub fn into_vec(self) -> Vec<f64> {
        match self {
            Self::Scalar(x) => vec![x],
            Self::Vector(v) => v,
        }
    }

    pub fn from_vec(v: &[f64]) -> Self {
        match v {
            [x] => Self::Scalar(*x),
            _ => Self::Vector(v.to_vec()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRecord {
    pub prompt_id: String,
    pub score_a: ScoreValue,
    pub score_b: ScoreValue,
}

/// Streams validated batches from line-delimited score records. Blank lines
/// are skipped; the first error ends the stream.
pub struct ScoreReader<R> {
    lines: std::io::Lines<R>,
    line_no: usize,
    batch_size: usize,
    dim: Option<usize>,
    round: usize,
    done: bool,
}

/// Reads line-delimited score records and yields batches of `batch_size`
/// pairs in file order; the last batch may be partial.
pub fn read_paired_scores<R: BufRead>(source: R, batch_size: usize) -> ScoreReader<R> {
    assert!(batch_size > 0, "batch size must be positive");
    ScoreReader { lines: source.lines(), line_no: 0, batch_size, dim: None, round: 0, done: false }
}

impl<R: BufRead> ScoreReader<R> {
    /// Dimension fixed by the first record, once read.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    fn next_pair(&mut self) -> Option<Result<ScorePair>> {
        loop {
            let line = match self.lines.next()? {
                Ok(l) => l,
                Err(e) => return Some(Err(e.into())),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            return Some(self.parse(&line));
        }
    }

    fn parse(&mut self, line: &str) -> Result<ScorePair> {
        let at = self.line_no;
        let rec: ScoreRecord =
            serde_json::from_str(line).map_err(|e| AuditError::Parse { line: at, message: e.to_string() })?;
        let pair = ScorePair::new(rec.score_a.into_vec(), rec.score_b.into_vec());
        let d = *self.dim.get_or_insert(pair.dim());
        pair.check(d, at - 1).map_err(|e| AuditError::InvalidRecord { line: at, source: Box::new(e) })?;
        Ok(pair)
    }
}

impl<R: BufRead> Iterator for ScoreReader<R> {
    type Item = Result<PairedBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let mut pairs = Vec::with_capacity(self.batch_size);
        while pairs.len() < self.batch_size {
            match self.next_pair() {
                Some(Ok(p)) => pairs.push(p),
                Some(Err(e)) => {
                    self.done = true;
                    return Some(Err(e));
                }
                None => {
                    self.done = true;
                    break;
                }
            }
        }
        if pairs.is_empty() {
            return None;
        }
        self.round += 1;
        Some(Ok(PairedBatch::new(pairs, self.round)))
    }
}

/// Writes pairs as score lines with prompt ids `p0, p1, ...`.
pub fn write_paired_scores<W: Write>(mut w: W, pairs: &[ScorePair]) -> Result<()> {
    for (i, p) in pairs.iter().enumerate() {
        let rec = ScoreRecord {
            prompt_id: format!("p{i}"),
            score_a: ScoreValue::from_vec(&p.a),
            score_b: ScoreValue::from_vec(&p.b),
        };
        serde_json::to_writer(&mut w, &rec).map_err(|e| AuditError::Io(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Flat CSV row of a [`RunRecord`].
#[derive(Debug, Serialize)]
struct CsvRow {
    fold: usize,
    epsilon: f64,
    sigma: f64,
    verdict: &'static str,
    rejection_samples: Option<usize>,
    seed: u64,
    final_log_wealth: f64,
}

/// Columns: `fold, epsilon, sigma, verdict, rejection_samples, seed,
/// final_log_wealth`; `rejection_samples` is empty when not rejected.
pub fn write_records_csv<W: Write>(w: W, records: &[RunRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in records {
        out.serialize(CsvRow {
            fold: r.fold,
            epsilon: r.epsilon,
            sigma: r.sigma,
            verdict: r.verdict.label(),
            rejection_samples: r.rejection_samples,
            seed: r.seed,
            final_log_wealth: r.final_log_wealth,
        })
        .map_err(|e| AuditError::Io(e.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_json<W: Write, T: Serialize + ?Sized>(w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(w, value).map_err(|e| AuditError::Io(e.to_string()))
}
