//! Test configuration.

use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::net::NetConfig;

/// Parameters of one sequential audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestConfig {
    /// Type-I error level; the test rejects once wealth reaches `1/alpha`.
    pub alpha: f64,
    /// Tolerated neural-net distance between the two behavior distributions.
    pub epsilon: f64,
    pub batch_size: usize,
    /// Sample cap; the run ends `NotRejected` once this many pairs are used.
    pub max_samples: usize,
    pub dim: usize,
    pub seed: u64,
    pub net: NetConfig,
}

impl Default for TestConfig {
    fn default() -> Self {
        Self { alpha: 0.05, epsilon: 0.0, batch_size: 100, max_samples: 4000, dim: 1, seed: 0, net: NetConfig::default() }
    }
}

impl TestConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AuditError::InvalidConfig(m));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha {} must lie in (0, 1)", self.alpha));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("epsilon {} must be a finite value >= 0", self.epsilon));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive".into());
        }
        if self.max_samples < self.batch_size {
            return bad(format!("max_samples {} is below batch_size {}", self.max_samples, self.batch_size));
        }
        if self.dim == 0 {
            return bad("dim must be positive".into());
        }
        if self.net.input_dim != self.dim {
            return bad(format!("net.input_dim {} differs from dim {}", self.net.input_dim, self.dim));
        }
        self.net.validate()
    }

    /// Sets `dim` and the network input dimension together.
    pub fn with_dim(mut self, d: usize) -> Self {
        self.dim = d;
        self.net.input_dim = d;
        self
    }

    /// `log(1/alpha)`, the rejection threshold in log-wealth.
    pub fn log_threshold(&self) -> f64 {
        log_threshold(self.alpha)
    }
}

pub fn log_threshold(alpha: f64) -> f64 {
    (1.0 / alpha).ln()
}
