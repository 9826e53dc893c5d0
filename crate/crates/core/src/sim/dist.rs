//! Synthetic behavior-score distributions.

use rand::Rng;
use rand_distr::weighted::WeightedIndex;
use rand_distr::{Beta, Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{AuditError, Result};

/// A distribution on `[0, 1]^d`. Scalar families have `d = 1`;
/// [`Product`](DistributionSpec::Product) stacks independent components for
/// multi-behavior scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum DistributionSpec {
    Beta { alpha: f64, beta: f64 },
    Uniform { lo: f64, hi: f64 },
    PointMass { value: f64 },
    Mixture { weights: Vec<f64>, components: Vec<DistributionSpec> },
    /// Resamples uniformly from a fixed list of score vectors.
    Empirical { values: Vec<Vec<f64>> },
    Product { components: Vec<DistributionSpec> },
}

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(AuditError::InvalidSpec(msg.into()))
}

fn unit(v: f64) -> bool {
    (0.0..=1.0).contains(&v)
}

impl DistributionSpec {
    pub fn beta(alpha: f64, beta: f64) -> Self {
        Self::Beta { alpha, beta }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Beta { .. } | Self::Uniform { .. } | Self::PointMass { .. } => 1,
            Self::Mixture { components, .. } => components.first().map_or(0, Self::dim),
            Self::Empirical { values } => values.first().map_or(0, Vec::len),
            Self::Product { components } => components.iter().map(Self::dim).sum(),
        }
    }

    /// Checks the support lies in the unit cube and parameters are sane.
    pub fn validate(&self) -> Result<()> {
        match self {
            Self::Beta { alpha, beta } => {
                if !(alpha.is_finite() && beta.is_finite() && *alpha > 0.0 && *beta > 0.0) {
                    return invalid(format!("beta parameters ({alpha}, {beta}) must be positive"));
                }
            }
            Self::Uniform { lo, hi } => {
                if !(unit(*lo) && unit(*hi) && lo <= hi) {
                    return invalid(format!("uniform bounds ({lo}, {hi}) must satisfy 0 <= lo <= hi <= 1"));
                }
            }
            Self::PointMass { value } => {
                if !unit(*value) {
                    return invalid(format!("point mass {value} is outside [0, 1]"));
                }
            }
            Self::Mixture { weights, components } => {
                if components.is_empty() || weights.len() != components.len() {
                    return invalid("mixture needs one weight per component and at least one component");
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return invalid("mixture weights must be non-negative");
                }
                let total: f64 = weights.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return invalid(format!("mixture weights sum to {total}, not 1"));
                }
                let d = components[0].dim();
                for c in components {
                    c.validate()?;
                    if c.dim() != d {
                        return invalid("mixture components differ in dimension");
                    }
                }
            }
            Self::Empirical { values } => {
                let Some(first) = values.first() else {
                    return invalid("empirical distribution has no values");
                };
                if first.is_empty() {
                    return invalid("empirical values are zero-dimensional");
                }
                for v in values {
                    if v.len() != first.len() || !v.iter().all(|x| unit(*x)) {
                        return invalid("empirical values must share one dimension and lie in [0, 1]");
                    }
                }
            }
            Self::Product { components } => {
                if components.is_empty() {
                    return invalid("product needs at least one component");
                }
                components.iter().try_for_each(Self::validate)?;
            }
        }
        Ok(())
    }
}

/// Pre-built sampler for a validated spec.
enum Sampler {
    Beta(Beta<f64>),
    Uniform(Uniform<f64>),
    Point(f64),
    Mixture(WeightedIndex<f64>, Vec<Sampler>),
    Empirical(Vec<Vec<f64>>),
    Product(Vec<Sampler>),
}

impl Sampler {
    fn build(spec: &DistributionSpec) -> Result<Self> {
        Ok(match spec {
            DistributionSpec::Beta { alpha, beta } => {
                Self::Beta(Beta::new(*alpha, *beta).map_err(|e| AuditError::InvalidSpec(e.to_string()))?)
            }
            DistributionSpec::Uniform { lo, hi } => {
                Self::Uniform(Uniform::new_inclusive(*lo, *hi).map_err(|e| AuditError::InvalidSpec(e.to_string()))?)
            }
            DistributionSpec::PointMass { value } => Self::Point(*value),
            DistributionSpec::Mixture { weights, components } => Self::Mixture(
                WeightedIndex::new(weights).map_err(|e| AuditError::InvalidSpec(e.to_string()))?,
                components.iter().map(Self::build).collect::<Result<_>>()?,
            ),
            DistributionSpec::Empirical { values } => Self::Empirical(values.clone()),
            DistributionSpec::Product { components } => {
                Self::Product(components.iter().map(Self::build).collect::<Result<_>>()?)
            }
        })
    }

    fn draw_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut Vec<f64>) {
        match self {
            Self::Beta(d) => out.push(d.sample(rng)),
            Self::Uniform(d) => out.push(d.sample(rng)),
            Self::Point(v) => out.push(*v),
            Self::Mixture(w, cs) => cs[w.sample(rng)].draw_into(rng, out),
            Self::Empirical(vs) => out.extend_from_slice(&vs[rng.random_range(0..vs.len())]),
            Self::Product(cs) => cs.iter().for_each(|c| c.draw_into(rng, out)),
        }
    }
}

/// `n` i.i.d. draws from `spec`.
pub fn sample_scores<R: Rng + ?Sized>(spec: &DistributionSpec, n: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    spec.validate()?;
    let sampler = Sampler::build(spec)?;
    let d = spec.dim();
    Ok((0..n)
        .map(|_| {
            let mut v = Vec::with_capacity(d);
            sampler.draw_into(rng, &mut v);
            v
        })
        .collect())
}

/// Adds independent `N(0, sigma^2)` noise to every component, then clips
/// to `[0, 1]`. `sigma` is a standard deviation.
pub fn add_noise<R: Rng + ?Sized>(mut scores: Vec<Vec<f64>>, sigma: f64, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return invalid(format!("noise sigma {sigma} must be finite and >= 0"));
    }
    if sigma == 0.0 {
        return Ok(scores);
    }
    let normal = Normal::new(0.0, sigma).map_err(|e| AuditError::InvalidSpec(e.to_string()))?;
    for v in scores.iter_mut().flatten() {
        *v = (*v + normal.sample(rng)).clamp(0.0, 1.0);
    }
    Ok(scores)
}
