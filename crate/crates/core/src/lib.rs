//! Anytime-valid auditing of behavioral shifts between two models.
//!
//! Each prompt yields a pair of behavior scores in `[0, 1]^d`, one from the
//! baseline model and one from the candidate. A bounded network `phi`,
//! retrained after every batch on everything seen so far, turns each new
//! batch into a betting score
//! `S_t = prod_i (1 + phi(a_i) - phi(b_i)) / exp(epsilon)`. The running
//! product is an e-process under the null "neural-net distance <= epsilon",
//! so the test may stop and reject the moment wealth reaches `1/alpha`.
//!
//! Modules:
//! - [`score`], [`wealth`], [`config`]: domain types and the e-process.
//! - [`net`]: the betting network with hand-written gradients.
//! - [`audit`]: the sequential test loop.
//! - [`distance`]: neural-net distance estimation and diagnostics.
//! - [`ks`]: the repeated Kolmogorov-Smirnov baseline.
//! - [`sim`]: synthetic scores, noise injection and the fold harness.
//! - [`io`]: record formats.

pub mod audit;
pub mod config;
pub mod distance;
pub mod error;
pub mod io;
pub mod ks;
pub mod net;
mod par;
pub mod rng;
pub mod score;
pub mod sim;
pub mod wealth;

pub use audit::{run_audit, run_audit_grid, run_audit_stream, run_exact, run_parallel_bonferroni, AuditTrace, Auditor, RoundRecord};
pub use config::TestConfig;
pub use error::{AuditError, Result};
pub use net::{BettingNet, NetConfig};
pub use score::{validate_batch, PairedBatch, ScorePair};
pub use wealth::{log_betting_score, threshold_crossed, update_wealth, Outcome, Verdict, WealthState};
