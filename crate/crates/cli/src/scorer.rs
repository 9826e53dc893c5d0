//! Client for an external behavior scorer.
//!
//! Contract: `POST endpoint` with body `{"texts": [..]}`; the reply is
//! `{"scores": [..]}` with one number or number-array per text, each in
//! `[0, 1]`. Texts are sent in chunks, at most `concurrency` requests in
//! flight, and the scores come back in input order.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use shiftaudit::io::ScoreValue;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("transport: {0}")]
    Transport(String),
    #[error("scorer timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("contract violation: {0}")]
    ContractViolation(String),
}

#[derive(Debug, Clone)]
pub struct ScorerConfig {
    /// Per-request timeout.
    pub timeout: Duration,
    /// Retries after the first attempt, for transport failures, timeouts
    /// and 429/5xx replies.
    pub retries: u32,
    /// Delay before the first retry; doubles each time.
    pub backoff: Duration,
    pub concurrency: usize,
    pub chunk_size: usize,
}

impl Default for ScorerConfig {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            retries: 3,
            backoff: Duration::from_millis(200),
            concurrency: 4,
            chunk_size: 32,
        }
    }
}

#[derive(Serialize)]
struct Request<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    scores: Vec<ScoreValue>,
}

type Slot = Mutex<Option<Result<Vec<Vec<f64>>, ScorerError>>>;

enum Failure {
    Retry(ScorerError),
    Fatal(ScorerError),
}

fn post_once(agent: &ureq::Agent, endpoint: &str, texts: &[String]) -> Result<Vec<Vec<f64>>, Failure> {
    let mut resp = match agent.post(endpoint).send_json(Request { texts }) {
        Ok(r) => r,
        Err(ureq::Error::Timeout(_)) => return Err(Failure::Retry(ScorerError::Timeout { attempts: 1 })),
        Err(e) => return Err(Failure::Retry(ScorerError::Transport(e.to_string()))),
    };
    let status = resp.status().as_u16();
    if status == 429 || status >= 500 {
        return Err(Failure::Retry(ScorerError::Transport(format!("HTTP {status}"))));
    }
    if !(200..300).contains(&status) {
        return Err(Failure::Fatal(ScorerError::Transport(format!("HTTP {status}"))));
    }
    let body: Response = match resp.body_mut().read_json() {
        Ok(b) => b,
        Err(ureq::Error::Timeout(_)) => return Err(Failure::Retry(ScorerError::Timeout { attempts: 1 })),
        Err(e) => return Err(Failure::Fatal(ScorerError::ContractViolation(format!("bad response body: {e}")))),
    };
    check_scores(body.scores, texts.len()).map_err(Failure::Fatal)
}

fn check_scores(scores: Vec<ScoreValue>, expected: usize) -> Result<Vec<Vec<f64>>, ScorerError> {
    if scores.len() != expected {
        return Err(ScorerError::ContractViolation(format!("sent {expected} texts, got {} scores", scores.len())));
    }
    let scores: Vec<Vec<f64>> = scores.into_iter().map(ScoreValue::into_vec).collect();
    let d = scores.first().map_or(0, Vec::len);
    for (i, s) in scores.iter().enumerate() {
        if s.len() != d || d == 0 {
            return Err(ScorerError::ContractViolation(format!("score {i} has dimension {}, expected {d}", s.len())));
        }
        if let Some(v) = s.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ScorerError::ContractViolation(format!("score {i} has component {v} outside [0, 1]")));
        }
    }
    Ok(scores)
}

fn post_with_retries(
    agent: &ureq::Agent,
    endpoint: &str,
    texts: &[String],
    cfg: &ScorerConfig,
) -> Result<Vec<Vec<f64>>, ScorerError> {
    let mut delay = cfg.backoff;
    let mut attempt = 0;
    loop {
        attempt += 1;
        match post_once(agent, endpoint, texts) {
            Ok(s) => return Ok(s),
            Err(Failure::Fatal(e)) => return Err(e),
            Err(Failure::Retry(e)) if attempt > cfg.retries => {
                return Err(match e {
                    ScorerError::Timeout { .. } => ScorerError::Timeout { attempts: attempt },
                    other => other,
                })
            }
            Err(Failure::Retry(_)) => {
                thread::sleep(delay);
                delay *= 2;
            }
        }
    }
}

/// Scores `texts` at `endpoint`, preserving order. An empty list makes no
/// request.
pub fn fetch_scores(endpoint: &str, texts: &[String], cfg: &ScorerConfig) -> Result<Vec<Vec<f64>>, ScorerError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(cfg.timeout))
        .http_status_as_error(false)
        .build()
        .into();
    let chunks: Vec<&[String]> = texts.chunks(cfg.chunk_size.max(1)).collect();
    let results: Vec<Slot> = chunks.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicUsize::new(0);
    thread::scope(|s| {
        for _ in 0..cfg.concurrency.clamp(1, chunks.len()) {
            s.spawn(|| loop {
                if failed.load(Ordering::Relaxed) > 0 {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(chunk) = chunks.get(i) else { break };
                let r = post_with_retries(&agent, endpoint, chunk, cfg);
                if r.is_err() {
                    failed.fetch_add(1, Ordering::Relaxed);
                }
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let mut out = Vec::with_capacity(texts.len());
    let mut d = None;
    for slot in results {
        // Chunks skipped after a failure stay empty.
        match slot.into_inner().unwrap() {
            Some(Ok(scores)) => {
                let dim = *d.get_or_insert(scores[0].len());
                if scores[0].len() != dim {
                    return Err(ScorerError::ContractViolation("score dimension changed between requests".into()));
                }
                out.extend(scores);
            }
            Some(Err(e)) => return Err(e),
            None => continue,
        }
    }
    if out.len() != texts.len() {
        return Err(ScorerError::Transport("scoring was abandoned after a failed request".into()));
    }
    Ok(out)
}
