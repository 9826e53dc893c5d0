//! Helpers shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_distr::{Beta, Distribution};
use shiftaudit::net::{objective_with_masks, relu_margin, BettingNet, NetConfig};
use shiftaudit::rng::seeded;
use shiftaudit::ScorePair;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Denominator floor of the relative error: gradients below it are compared
/// absolutely (central differences carry ~1e-12 roundoff).
pub const FD_FLOOR: f64 = 1e-6;
/// Instances are redrawn until every pre-ReLU value is this far from the
/// kink, so a step of `FD_STEP` never crosses it.
pub const KINK_MARGIN: f64 = 1e-3;

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FD_FLOOR)
}

pub fn random_pairs<R: Rng>(rng: &mut R, n: usize, d: usize) -> Vec<ScorePair> {
    (0..n).map(|_| ScorePair::new((0..d).map(|_| rng.random()).collect(), (0..d).map(|_| rng.random()).collect())).collect()
}

/// A random network (output layer randomized too, so every gradient is
/// generically non-zero) and 16 random pairs away from ReLU kinks.
pub fn gradient_instance(seed: u64, rate: f64, mask_seed: u64) -> (BettingNet, Vec<ScorePair>) {
    let mut rng = seeded(seed);
    let d = 1 + (seed % 3) as usize;
    let widths = if seed % 2 == 0 { vec![32, 32] } else { vec![16, 8, 4] };
    let cfg = NetConfig { input_dim: d, hidden_widths: widths, ..Default::default() };
    loop {
        let mut net = BettingNet::new(&cfg, &mut rng).unwrap();
        let out = net.layout().out_weight;
        for p in &mut net.params_mut()[out..] {
            *p = rng.random_range(-1.0..1.0);
        }
        for (h, _) in net.layout().hidden.clone().iter().zip(0..) {
            for p in &mut net.params_mut()[h.gain..h.offset + h.width] {
                *p += rng.random_range(-0.2..0.2);
            }
        }
        let pairs = random_pairs(&mut rng, 16, d);
        if relu_margin(&net, &pairs, rate, mask_seed).unwrap() >= KINK_MARGIN {
            return (net, pairs);
        }
    }
}

/// Largest relative error between the analytic gradient and central
/// differences, over every parameter.
pub fn max_gradient_error(net: &BettingNet, pairs: &[ScorePair], rate: f64, mask_seed: u64) -> f64 {
    let g = shiftaudit::net::gradient_with_masks(net, pairs, rate, mask_seed).unwrap();
    let f = |n: &BettingNet| objective_with_masks(n, pairs, rate, mask_seed).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..net.num_params() {
        let mut p = net.clone();
        p.params_mut()[i] += FD_STEP;
        let mut m = net.clone();
        m.params_mut()[i] -= FD_STEP;
        let fd = (f(&p) - f(&m)) / (2.0 * FD_STEP);
        worst = worst.max(rel_err(g.0[i], fd));
    }
    worst
}

/// `n` pairs with `a ~ Beta(pa)` and `b ~ Beta(pb)`, independent.
pub fn beta_pairs(pa: (f64, f64), pb: (f64, f64), n: usize, seed: u64) -> Vec<ScorePair> {
    let mut rng = seeded(seed);
    let da = Beta::new(pa.0, pa.1).unwrap();
    let db = Beta::new(pb.0, pb.1).unwrap();
    (0..n).map(|_| ScorePair::scalar(da.sample(&mut rng), db.sample(&mut rng))).collect()
}
