//! The bounded betting-score network.
//!
//! Architecture: `input -> [Linear -> LayerNorm -> ReLU -> Dropout] x L ->
//! Linear -> tanh`, with the output mapped to `c * q * tanh(raw)`. Since
//! `|tanh| < 1` and `|c| <= 1`, every output lies in `[-q, q]`, and scaling
//! by any `c' in [-1, 1]` stays inside the class.
//!
//! All parameters live in one flat vector; [`Layout`] describes where each
//! array starts. Gradients use the same layout.

mod checkpoint;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, CHECKPOINT_VERSION};
pub use train::{train, EpochStat, TrainState};

use ndarray::linalg::{general_mat_mul, general_mat_vec_mul};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};
use crate::score::ScorePair;

pub(crate) const LN_EPS: f64 = 1e-5;

/// Architecture and training hyperparameters of the betting network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub input_dim: usize,
    pub hidden_widths: Vec<usize>,
    pub dropout_rate: f64,
    /// Output bound `q`; must lie strictly inside `(0, 1/2)`.
    pub output_bound: f64,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub holdout_fraction: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            input_dim: 1,
            hidden_widths: vec![32, 32],
            dropout_rate: 0.1,
            output_bound: 0.45,
            learning_rate: 5e-3,
            max_epochs: 100,
            patience: 5,
            holdout_fraction: 0.2,
        }
    }
}

impl NetConfig {
    pub fn with_input_dim(mut self, d: usize) -> Self {
        self.input_dim = d;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(AuditError::InvalidConfig(m));
        if self.input_dim == 0 {
            return bad("input_dim must be positive".into());
        }
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        if !(self.output_bound > 0.0 && self.output_bound < 0.5) {
            return bad(format!("output_bound {} must lie in (0, 0.5)", self.output_bound));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return bad(format!("dropout_rate {} must lie in [0, 1)", self.dropout_rate));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning_rate {} must be positive", self.learning_rate));
        }
        if !(0.0..1.0).contains(&self.holdout_fraction) {
            return bad(format!("holdout_fraction {} must lie in [0, 1)", self.holdout_fraction));
        }
        if self.patience == 0 {
            return bad("patience must be positive".into());
        }
        Ok(())
    }
}

/// Offsets of one hidden layer's arrays inside the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HiddenLayout {
    pub fan_in: usize,
    pub width: usize,
    /// `width x fan_in`, row-major.
    pub weight: usize,
    pub bias: usize,
    pub gain: usize,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layout {
    pub input_dim: usize,
    pub hidden: Vec<HiddenLayout>,
    pub out_weight: usize,
    pub out_bias: usize,
    pub len: usize,
}

impl Layout {
    pub fn new(input_dim: usize, widths: &[usize]) -> Self {
        let mut hidden = Vec::with_capacity(widths.len());
        let mut at = 0;
        let mut fan_in = input_dim;
        for &width in widths {
            let weight = at;
            let bias = weight + width * fan_in;
            let gain = bias + width;
            let offset = gain + width;
            at = offset + width;
            hidden.push(HiddenLayout { fan_in, width, weight, bias, gain, offset });
            fan_in = width;
        }
        let out_weight = at;
        let out_bias = out_weight + fan_in;
        Self { input_dim, hidden, out_weight, out_bias, len: out_bias + 1 }
    }

    fn last_width(&self) -> usize {
        self.hidden.last().map_or(self.input_dim, |h| h.width)
    }

    /// Named parameter arrays in declaration order: `(name, start, len)`.
    pub fn arrays(&self) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        for (i, h) in self.hidden.iter().enumerate() {
            out.push((format!("hidden{i}.weight"), h.weight, h.width * h.fan_in));
            out.push((format!("hidden{i}.bias"), h.bias, h.width));
            out.push((format!("hidden{i}.ln_gain"), h.gain, h.width));
            out.push((format!("hidden{i}.ln_offset"), h.offset, h.width));
        }
        out.push(("output.weight".into(), self.out_weight, self.last_width()));
        out.push(("output.bias".into(), self.out_bias, 1));
        out
    }
}

/// Gradient of the training objective, laid out like [`BettingNet::params`].
#[derive(Debug, Clone, PartialEq)]
pub struct ParamGrad(pub Vec<f64>);

impl ParamGrad {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// The betting-score network `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct BettingNet {
    layout: Layout,
    hidden_widths: Vec<usize>,
    bound: f64,
    scale: f64,
    params: Vec<f64>,
}

/// Scores of a pair list stacked as a `2n x d` matrix: rows `0..n` are the
/// baseline scores, rows `n..2n` the candidate scores.
#[derive(Debug, Clone)]
pub(crate) struct PairMatrix {
    x: Array2<f64>,
    n: usize,
}

impl PairMatrix {
    pub(crate) fn new(pairs: &[ScorePair], d: usize) -> Result<Self> {
        let n = pairs.len();
        let mut x = Array2::zeros((2 * n, d));
        for (i, pair) in pairs.iter().enumerate() {
            for side in [&pair.a, &pair.b] {
                if side.len() != d {
                    return Err(AuditError::DimMismatch { expected: d, found: side.len() });
                }
            }
            x.row_mut(i).assign(&ArrayView1::from(&pair.a[..]));
            x.row_mut(n + i).assign(&ArrayView1::from(&pair.b[..]));
        }
        Ok(Self { x, n })
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }
}

/// Activations of one hidden layer, kept for backpropagation.
struct LayerCache {
    input: Array2<f64>,
    zhat: Array2<f64>,
    /// Post-LayerNorm, pre-ReLU, row-major.
    normed: Vec<f64>,
    /// Dropout multipliers (0 or `1/(1-p)`); only meaningful when
    /// `dropped` is set.
    keep: Vec<f64>,
    dropped: bool,
    inv_sigma: Vec<f64>,
    /// Backpropagated error for this layer's units.
    delta: Array2<f64>,
}

/// Buffers for a forward/backward pass over a fixed number of rows; reused
/// across epochs so training does not reallocate.
pub(crate) struct Workspace {
    rows: usize,
    layers: Vec<LayerCache>,
    last: Array2<f64>,
    tanh: Vec<f64>,
    phi: Vec<f64>,
    draw: Array1<f64>,
    grad: Vec<f64>,
}

impl Workspace {
    pub(crate) fn new(layout: &Layout, rows: usize) -> Self {
        let layers = layout
            .hidden
            .iter()
            .map(|h| LayerCache {
                input: Array2::zeros((rows, h.fan_in)),
                zhat: Array2::zeros((rows, h.width)),
                normed: vec![0.0; rows * h.width],
                keep: vec![1.0; rows * h.width],
                dropped: false,
                inv_sigma: vec![0.0; rows],
                delta: Array2::zeros((rows, h.width)),
            })
            .collect();
        Self {
            rows,
            layers,
            last: Array2::zeros((rows, layout.last_width())),
            tanh: vec![0.0; rows],
            phi: vec![0.0; rows],
            draw: Array1::zeros(rows),
            grad: vec![0.0; layout.len],
        }
    }
}

/// Dropout applied during a training forward pass.
pub(crate) struct Dropout<'a, R: Rng + ?Sized> {
    pub rate: f64,
    pub rng: &'a mut R,
}

impl BettingNet {
    /// Fresh network: hidden layers drawn uniformly in
    /// `+-1/sqrt(fan_in)`, LayerNorm at identity, output layer zero so the
    /// initial network is `phi == 0`.
    pub fn new<R: Rng + ?Sized>(cfg: &NetConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg.input_dim, &cfg.hidden_widths);
        let mut params = vec![0.0; layout.len];
        for h in &layout.hidden {
            let bound = 1.0 / (h.fan_in as f64).sqrt();
            for p in &mut params[h.weight..h.bias] {
                *p = rng.random_range(-bound..bound);
            }
            for p in &mut params[h.bias..h.gain] {
                *p = rng.random_range(-bound..bound);
            }
            params[h.gain..h.offset].fill(1.0);
        }
        Ok(Self { layout, hidden_widths: cfg.hidden_widths.clone(), bound: cfg.output_bound, scale: 1.0, params })
    }

    /// A network with every parameter zero (`phi == 0`).
    pub fn zeros(cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg.input_dim, &cfg.hidden_widths);
        let params = vec![0.0; layout.len];
        Ok(Self { layout, hidden_widths: cfg.hidden_widths.clone(), bound: cfg.output_bound, scale: 1.0, params })
    }

    pub(crate) fn from_parts(cfg: &NetConfig, scale: f64, params: Vec<f64>) -> Result<Self> {
        cfg.validate()?;
        let layout = Layout::new(cfg.input_dim, &cfg.hidden_widths);
        if params.len() != layout.len {
            return Err(AuditError::DimMismatch { expected: layout.len, found: params.len() });
        }
        if !(-1.0..=1.0).contains(&scale) {
            return Err(AuditError::ScaleOutOfRange(scale));
        }
        Ok(Self { layout, hidden_widths: cfg.hidden_widths.clone(), bound: cfg.output_bound, scale, params })
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input_dim
    }

    pub fn hidden_widths(&self) -> &[usize] {
        &self.hidden_widths
    }

    pub fn output_bound(&self) -> f64 {
        self.bound
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Evaluates `phi(score)` with dropout disabled.
    pub fn forward(&self, score: &[f64]) -> Result<f64> {
        self.check_dim(score.len())?;
        let x = ArrayView2::from_shape((1, score.len()), score).expect("row vector");
        Ok(self.phi_rows(x)[0])
    }

    /// Evaluates `phi` on many scores at once.
    pub fn forward_many(&self, scores: &[Vec<f64>]) -> Result<Vec<f64>> {
        let d = self.layout.input_dim;
        let mut x = Array2::zeros((scores.len(), d));
        for (i, s) in scores.iter().enumerate() {
            self.check_dim(s.len())?;
            x.row_mut(i).assign(&ArrayView1::from(&s[..]));
        }
        Ok(self.phi_rows(x.view()))
    }

    fn check_dim(&self, d: usize) -> Result<()> {
        if d != self.layout.input_dim {
            return Err(AuditError::DimMismatch { expected: self.layout.input_dim, found: d });
        }
        Ok(())
    }

    fn hidden_weight(&self, h: &HiddenLayout) -> ArrayView2<'_, f64> {
        ArrayView2::from_shape((h.width, h.fan_in), &self.params[h.weight..h.bias]).expect("layout")
    }

    /// Forward pass over the rows of `x`, filling `ws`; `ws.phi` holds the
    /// outputs afterwards.
    fn forward_into<R: Rng + ?Sized>(&self, x: ArrayView2<'_, f64>, mut dropout: Option<Dropout<'_, R>>, ws: &mut Workspace) {
        let p = &self.params;
        let rows = x.nrows();
        debug_assert_eq!(rows, ws.rows);
        let depth = self.layout.hidden.len();
        if depth == 0 {
            ws.last.assign(&x);
        } else {
            ws.layers[0].input.assign(&x);
        }
        for (l, h) in self.layout.hidden.iter().enumerate() {
            let w = h.width;
            let (head, tail) = ws.layers.split_at_mut(l + 1);
            let cache = &mut head[l];
            general_mat_mul(1.0, &cache.input, &self.hidden_weight(h).t(), 0.0, &mut cache.zhat);
            let bias = &p[h.bias..h.gain];
            let gain = &p[h.gain..h.offset];
            let offset = &p[h.offset..h.offset + w];
            let dest = if l + 1 < depth { &mut tail[0].input } else { &mut ws.last };
            let out = dest.as_slice_mut().expect("standard layout");
            let zs = cache.zhat.as_slice_mut().expect("standard layout");
            for r in 0..rows {
                let z = &mut zs[r * w..(r + 1) * w];
                for (zj, bj) in z.iter_mut().zip(bias) {
                    *zj += bj;
                }
                // LayerNorm across the units of the row.
                let mean = z.iter().sum::<f64>() / w as f64;
                let var = z.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
                let inv = 1.0 / (var + LN_EPS).sqrt();
                cache.inv_sigma[r] = inv;
                let y = &mut cache.normed[r * w..(r + 1) * w];
                let o = &mut out[r * w..(r + 1) * w];
                for j in 0..w {
                    z[j] = (z[j] - mean) * inv;
                    y[j] = gain[j] * z[j] + offset[j];
                    o[j] = y[j].max(0.0);
                }
            }
            cache.dropped = false;
            if let Some(d) = dropout.as_mut() {
                if d.rate > 0.0 {
                    fill_dropout_mask(&mut cache.keep, d);
                    for (o, k) in out.iter_mut().zip(&cache.keep) {
                        *o *= k;
                    }
                    cache.dropped = true;
                }
            }
        }
        let w_out = &p[self.layout.out_weight..self.layout.out_bias];
        let b_out = p[self.layout.out_bias];
        let last = ws.last.as_slice().expect("standard layout");
        let k = w_out.len();
        for r in 0..rows {
            let raw = b_out + last[r * k..(r + 1) * k].iter().zip(w_out).map(|(a, b)| a * b).sum::<f64>();
            let t = raw.tanh();
            ws.tanh[r] = t;
            ws.phi[r] = self.scale * (self.bound * t);
        }
    }

    /// Gradient of `sum_r dphi[r] * phi(x_r)` into `ws.grad`, using the
    /// activations of the preceding [`forward_into`](Self::forward_into).
    fn backward_into(&self, ws: &mut Workspace, dphi: &[f64]) {
        let p = &self.params;
        let c = self.scale * self.bound;
        for ((d, &g), &t) in ws.draw.iter_mut().zip(dphi).zip(&ws.tanh) {
            *d = g * c * (1.0 - t * t);
        }
        let out_w = self.layout.out_weight;
        let out_b = self.layout.out_bias;
        {
            let mut g_out = ArrayViewMut1::from(&mut ws.grad[out_w..out_b]);
            general_mat_vec_mul(1.0, &ws.last.t(), &ws.draw, 0.0, &mut g_out);
        }
        ws.grad[out_b] = ws.draw.sum();
        let depth = self.layout.hidden.len();
        if depth == 0 {
            return;
        }

        let w_out = ArrayView1::from(&p[out_w..out_b]);
        {
            let top = &mut ws.layers[depth - 1].delta;
            general_mat_mul(1.0, &ws.draw.view().insert_axis(Axis(1)), &w_out.insert_axis(Axis(0)), 0.0, top);
        }
        for (l, h) in self.layout.hidden.iter().enumerate().rev() {
            let w = h.width;
            let (head, _) = ws.layers.split_at_mut(l + 1);
            let (below, cur) = head.split_at_mut(l);
            let cache = &mut cur[0];
            let rows = ws.rows;
            let zhat = cache.zhat.as_slice().expect("standard layout");
            let gain = &p[h.gain..h.offset];
            let ds = cache.delta.as_slice_mut().expect("standard layout");
            let (g_gain, g_offset) = ws.grad[h.gain..h.offset + w].split_at_mut(w);
            g_gain.fill(0.0);
            g_offset.fill(0.0);
            for r in 0..rows {
                let d = &mut ds[r * w..(r + 1) * w];
                let z = &zhat[r * w..(r + 1) * w];
                let y = &cache.normed[r * w..(r + 1) * w];
                // Through dropout and ReLU.
                if cache.dropped {
                    let k = &cache.keep[r * w..(r + 1) * w];
                    for j in 0..w {
                        d[j] = if y[j] > 0.0 { d[j] * k[j] } else { 0.0 };
                    }
                } else {
                    for j in 0..w {
                        if y[j] <= 0.0 {
                            d[j] = 0.0;
                        }
                    }
                }
                let mut m1 = 0.0;
                let mut m2 = 0.0;
                for j in 0..w {
                    g_gain[j] += d[j] * z[j];
                    g_offset[j] += d[j];
                    d[j] *= gain[j];
                    m1 += d[j];
                    m2 += d[j] * z[j];
                }
                // Through LayerNorm.
                m1 /= w as f64;
                m2 /= w as f64;
                let inv = cache.inv_sigma[r];
                for j in 0..w {
                    d[j] = inv * (d[j] - m1 - z[j] * m2);
                }
            }
            {
                let mut g_w = ArrayViewMut2::from_shape((w, h.fan_in), &mut ws.grad[h.weight..h.bias]).expect("layout");
                general_mat_mul(1.0, &cache.delta.t(), &cache.input, 0.0, &mut g_w);
            }
            let g_b = &mut ws.grad[h.bias..h.gain];
            g_b.fill(0.0);
            for row in cache.delta.as_slice().expect("standard layout").chunks_exact(w) {
                for (g, d) in g_b.iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                general_mat_mul(1.0, &cache.delta, &self.hidden_weight(h), 0.0, &mut below[l - 1].delta);
            }
        }
    }

    fn phi_rows(&self, x: ArrayView2<'_, f64>) -> Vec<f64> {
        let mut ws = Workspace::new(&self.layout, x.nrows());
        self.forward_into::<rand::rngs::StdRng>(x, None, &mut ws);
        ws.phi
    }

    /// `sum_i log(1 + phi(a_i) - phi(b_i))`, evaluation mode. Every factor
    /// is checked against `[1 - 2q, 1 + 2q]`.
    pub fn sum_log_factors(&self, pairs: &[ScorePair]) -> Result<f64> {
        self.sum_log_factors_matrix(&PairMatrix::new(pairs, self.layout.input_dim)?)
    }

    pub(crate) fn sum_log_factors_matrix(&self, m: &PairMatrix) -> Result<f64> {
        let phi = self.phi_rows(m.x.view());
        let (a, b) = phi.split_at(m.n);
        let lo = 1.0 - 2.0 * self.bound;
        let hi = 1.0 + 2.0 * self.bound;
        let mut sum = 0.0;
        for (fa, fb) in a.iter().zip(b) {
            let factor = 1.0 + (fa - fb);
            if !(lo..=hi).contains(&factor) {
                return Err(AuditError::NonPositiveFactor { factor });
            }
            sum += factor.ln();
        }
        Ok(sum)
    }

    /// Mean of `log(1 + phi(a) - phi(b))` over `pairs`, evaluation mode.
    pub fn objective(&self, pairs: &[ScorePair]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(AuditError::EmptyInput("objective needs at least one pair"));
        }
        self.objective_matrix(&PairMatrix::new(pairs, self.layout.input_dim)?)
    }

    pub(crate) fn objective_matrix(&self, m: &PairMatrix) -> Result<f64> {
        Ok(self.sum_log_factors_matrix(m)? / m.n as f64)
    }

    /// Exact gradient of [`objective`](Self::objective) with dropout disabled.
    pub fn gradient(&self, pairs: &[ScorePair]) -> Result<ParamGrad> {
        if pairs.is_empty() {
            return Err(AuditError::EmptyInput("gradient needs at least one pair"));
        }
        let m = PairMatrix::new(pairs, self.layout.input_dim)?;
        self.objective_and_gradient::<rand::rngs::StdRng>(&m, None).map(|(_, g)| g)
    }

    /// Objective and its gradient. With `dropout`, masks are drawn from the
    /// given generator; the result is the exact gradient of the objective
    /// under those masks.
    pub(crate) fn objective_and_gradient<R: Rng + ?Sized>(
        &self,
        m: &PairMatrix,
        dropout: Option<Dropout<'_, R>>,
    ) -> Result<(f64, ParamGrad)> {
        let mut ws = Workspace::new(&self.layout, 2 * m.n);
        let value = self.objective_and_gradient_in(m, dropout, &mut ws)?;
        Ok((value, ParamGrad(ws.grad)))
    }

    /// As [`objective_and_gradient`](Self::objective_and_gradient), leaving
    /// the gradient in `ws.grad`.
    pub(crate) fn objective_and_gradient_in<R: Rng + ?Sized>(
        &self,
        m: &PairMatrix,
        dropout: Option<Dropout<'_, R>>,
        ws: &mut Workspace,
    ) -> Result<f64> {
        if m.n == 0 {
            return Err(AuditError::EmptyInput("gradient needs at least one pair"));
        }
        self.forward_into(m.x.view(), dropout, ws);
        let n = m.n as f64;
        let mut dphi = vec![0.0; 2 * m.n];
        let mut sum = 0.0;
        for i in 0..m.n {
            let fa = ws.phi[i];
            let fb = ws.phi[m.n + i];
            sum += log_factor(fa, fb)?;
            let w = 1.0 / (n * (1.0 + (fa - fb)));
            dphi[i] = w;
            dphi[m.n + i] = -w;
        }
        self.backward_into(ws, &dphi);
        Ok(sum / n)
    }

    /// Objective in evaluation mode, reusing `ws`.
    pub(crate) fn objective_in(&self, m: &PairMatrix, ws: &mut Workspace) -> Result<f64> {
        self.forward_into::<rand::rngs::StdRng>(m.x.view(), None, ws);
        let mut sum = 0.0;
        for i in 0..m.n {
            sum += log_factor(ws.phi[i], ws.phi[m.n + i])?;
        }
        Ok(sum / m.n as f64)
    }
}

/// Objective under a fixed dropout-mask stream: masks are regenerated from
/// `mask_seed` on every call, so repeated calls see identical masks.
pub fn objective_with_masks(net: &BettingNet, pairs: &[ScorePair], rate: f64, mask_seed: u64) -> Result<f64> {
    let m = PairMatrix::new(pairs, net.input_dim())?;
    let mut rng = crate::rng::seeded(mask_seed);
    let (value, _) = net.objective_and_gradient(&m, Some(Dropout { rate, rng: &mut rng }))?;
    Ok(value)
}

/// Gradient of [`objective_with_masks`] under the same masks.
pub fn gradient_with_masks(net: &BettingNet, pairs: &[ScorePair], rate: f64, mask_seed: u64) -> Result<ParamGrad> {
    let m = PairMatrix::new(pairs, net.input_dim())?;
    let mut rng = crate::rng::seeded(mask_seed);
    net.objective_and_gradient(&m, Some(Dropout { rate, rng: &mut rng })).map(|(_, g)| g)
}

/// Smallest `|pre-ReLU activation|` over all hidden units and all scores
/// of `pairs`, under the same masks as [`objective_with_masks`]. Finite
/// differences are only meaningful when this is well above the step size.
pub fn relu_margin(net: &BettingNet, pairs: &[ScorePair], rate: f64, mask_seed: u64) -> Result<f64> {
    let m = PairMatrix::new(pairs, net.input_dim())?;
    let mut rng = crate::rng::seeded(mask_seed);
    let mut ws = Workspace::new(&net.layout, 2 * m.n);
    net.forward_into(m.x.view(), Some(Dropout { rate, rng: &mut rng }), &mut ws);
    Ok(ws.layers.iter().flat_map(|l| l.normed.iter()).fold(f64::INFINITY, |acc, y| acc.min(y.abs())))
}

/// Fills `keep` with dropout multipliers, two draws per 64-bit word.
fn fill_dropout_mask<R: Rng + ?Sized>(keep: &mut [f64], d: &mut Dropout<'_, R>) {
    let cut = (d.rate * 4_294_967_296.0) as u64;
    let kept = 1.0 / (1.0 - d.rate);
    for pair in keep.chunks_mut(2) {
        let word = d.rng.next_u64();
        for (k, half) in pair.iter_mut().zip([word & 0xFFFF_FFFF, word >> 32]) {
            *k = if half < cut { 0.0 } else { kept };
        }
    }
}

fn log_factor(fa: f64, fb: f64) -> Result<f64> {
    let factor = 1.0 + (fa - fb);
    if factor <= 0.0 || !factor.is_finite() {
        return Err(AuditError::NonPositiveFactor { factor });
    }
    Ok(factor.ln())
}

/// Returns `c * phi`. Fails if `|c| > 1`.
pub fn scale_net(net: &BettingNet, c: f64) -> Result<BettingNet> {
    if !(-1.0..=1.0).contains(&c) {
        return Err(AuditError::ScaleOutOfRange(c));
    }
    let mut out = net.clone();
    out.scale = c * net.scale;
    Ok(out)
}
