//! Binary parameter checkpoints.
//!
//! Layout (all integers little-endian `u64`, reals little-endian IEEE-754
//! `f64`):
//!
//! ```text
//! magic   b"BETNET\0\0"
//! version u64
//! input_dim, n_hidden, hidden_widths[n_hidden]
//! dropout_rate, output_bound, learning_rate          (f64)
//! max_epochs, patience                               (u64)
//! holdout_fraction, scale                            (f64)
//! n_params, params[n_params]                         (f64, declaration order)
//! ```

use std::io::{Read, Write};

use super::{BettingNet, NetConfig};
use crate::error::{AuditError, Result};

const MAGIC: &[u8; 8] = b"BETNET\0\0";
pub const CHECKPOINT_VERSION: u64 = 1;

pub fn write_checkpoint<W: Write>(mut w: W, net: &BettingNet, cfg: &NetConfig) -> Result<()> {
    if cfg.input_dim != net.input_dim() || cfg.hidden_widths != net.hidden_widths() {
        return Err(AuditError::Checkpoint("config does not match network architecture".into()));
    }
    let mut buf = Vec::with_capacity(128 + 8 * net.num_params());
    buf.extend_from_slice(MAGIC);
    let u = |buf: &mut Vec<u8>, x: u64| buf.extend_from_slice(&x.to_le_bytes());
    u(&mut buf, CHECKPOINT_VERSION);
    u(&mut buf, cfg.input_dim as u64);
    u(&mut buf, cfg.hidden_widths.len() as u64);
    for &w in &cfg.hidden_widths {
        u(&mut buf, w as u64);
    }
    let f = |buf: &mut Vec<u8>, x: f64| buf.extend_from_slice(&x.to_le_bytes());
    f(&mut buf, cfg.dropout_rate);
    f(&mut buf, net.output_bound());
    f(&mut buf, cfg.learning_rate);
    u(&mut buf, cfg.max_epochs as u64);
    u(&mut buf, cfg.patience as u64);
    f(&mut buf, cfg.holdout_fraction);
    f(&mut buf, net.scale());
    u(&mut buf, net.num_params() as u64);
    for &p in net.params() {
        f(&mut buf, p);
    }
    w.write_all(&buf)?;
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes8(&mut self) -> Result<[u8; 8]> {
        let mut b = [0u8; 8];
        self.inner
            .read_exact(&mut b)
            .map_err(|e| AuditError::Checkpoint(format!("truncated checkpoint: {e}")))?;
        Ok(b)
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes8()?))
    }

    fn usize(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| AuditError::Checkpoint("size overflows usize".into()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.bytes8()?))
    }
}

pub fn read_checkpoint<R: Read>(r: R) -> Result<(BettingNet, NetConfig)> {
    let mut r = Reader { inner: r };
    if &r.bytes8()? != MAGIC {
        return Err(AuditError::Checkpoint("bad magic".into()));
    }
    let version = r.u64()?;
    if version != CHECKPOINT_VERSION {
        return Err(AuditError::Checkpoint(format!("unsupported version {version}")));
    }
    let input_dim = r.usize()?;
    let n_hidden = r.usize()?;
    if n_hidden > 1024 {
        return Err(AuditError::Checkpoint(format!("implausible layer count {n_hidden}")));
    }
    let hidden_widths = (0..n_hidden).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
    let cfg = NetConfig {
        input_dim,
        hidden_widths,
        dropout_rate: r.f64()?,
        output_bound: r.f64()?,
        learning_rate: r.f64()?,
        max_epochs: r.usize()?,
        patience: r.usize()?,
        holdout_fraction: r.f64()?,
    };
    let scale = r.f64()?;
    let n = r.usize()?;
    let expected = super::Layout::new(cfg.input_dim, &cfg.hidden_widths).len;
    if n != expected {
        return Err(AuditError::Checkpoint(format!("expected {expected} parameters, header says {n}")));
    }
    let params = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
    let net = BettingNet::from_parts(&cfg, scale, params)?;
    Ok((net, cfg))
}
