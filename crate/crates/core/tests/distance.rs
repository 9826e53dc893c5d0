mod common;

use proptest::prelude::*;
use shiftaudit::distance::*;
use shiftaudit::sim::{sample_scores, DistributionSpec, SpecPairSource};
use shiftaudit::ScorePair;

fn quick(budget: usize, repeats: usize) -> DistanceConfig {
    DistanceConfig { max_samples: budget, repeats, ..Default::default() }
}

fn source(a: DistributionSpec, b: DistributionSpec, seed: u64) -> SpecPairSource {
    SpecPairSource { baseline: a, candidate: b, seed }
}

#[test]
fn point_masses_sit_just_below_twice_the_bound() {
    let pool = PairPool::new(vec![ScorePair::scalar(1.0, 0.0); 1000], 0);
    let est = estimate_nn_distance(&pool, &quick(1000, 2)).unwrap();
    assert!((0.8..=0.9).contains(&est.value), "{est:?}");
    assert!((est.literal - 1.0 - est.value).abs() < 1e-15);
}

#[test]
fn identical_distributions_estimate_zero_at_every_size() {
    let src = source(DistributionSpec::beta(2.0, 2.0), DistributionSpec::beta(2.0, 2.0), 1);
    let rows = convergence_study(&src, &[100, 1000], &quick(0, 5)).unwrap();
    assert_eq!(rows.len(), 2);
    for row in rows {
        assert!(row.estimate.value.abs() <= 0.02, "{row:?}");
        assert_eq!(row.estimate.sample_budget, row.training_size + 100);
    }
    let cal = calibrate_epsilon(&src, &quick(1000, 5)).unwrap();
    assert!(cal.epsilon >= 0.0 && cal.epsilon <= 0.02, "{cal:?}");
}

#[test]
fn estimate_grows_with_training_size_on_separated_streams() {
    let src = source(DistributionSpec::beta(8.0, 2.0), DistributionSpec::beta(2.0, 8.0), 2);
    let rows = convergence_study(&src, &[100, 400, 1600], &quick(0, 5)).unwrap();
    let v: Vec<f64> = rows.iter().map(|r| r.estimate.value).collect();
    let noise = rows.iter().map(|r| r.estimate.std_across_repeats / 5f64.sqrt()).fold(0.0, f64::max);
    for w in v.windows(2) {
        assert!(w[1] >= w[0] - 2.0 * noise, "{v:?}");
    }
    assert!(v[2] > 0.3, "{v:?}");
}

#[test]
fn estimate_grows_with_separation() {
    let values: Vec<f64> = [0.0, 0.5, 1.5]
        .iter()
        .map(|&delta| {
            let src = source(DistributionSpec::beta(2.0 + delta, 2.0 - delta / 2.0), DistributionSpec::beta(2.0, 2.0), 3);
            estimate_nn_distance(&src, &quick(1000, 10)).unwrap().value
        })
        .collect();
    assert!(values[0] <= values[1] && values[1] <= values[2], "{values:?}");
}

#[test]
fn wasserstein_of_independent_halves_is_small() {
    let mut rng = shiftaudit::rng::seeded(4);
    let x: Vec<f64> = sample_scores(&DistributionSpec::beta(2.0, 2.0), 20_000, &mut rng).unwrap().into_iter().map(|v| v[0]).collect();
    assert!(wasserstein1(&x[..10_000], &x[10_000..]).unwrap() < 0.01);
}

proptest! {
    #[test]
    fn wasserstein_is_a_metric_on_samples(a in proptest::collection::vec(0.0f64..=1.0, 1..40), b in proptest::collection::vec(0.0f64..=1.0, 1..40)) {
        let w = wasserstein1(&a, &b).unwrap();
        prop_assert!(w >= 0.0);
        prop_assert!((w - wasserstein1(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
        // Doubling a sample keeps its empirical measure, and sends the
        // unequal-size path through the same value.
        let doubled: Vec<f64> = a.iter().chain(&a).copied().collect();
        if b.len() != doubled.len() {
            prop_assert!((wasserstein1(&doubled, &b).unwrap() - w).abs() < 1e-9);
        }
        // Bounded by the mean shift from below.
        prop_assert!(w + 1e-12 >= mean_shift(&a, &b).unwrap().abs());
    }
}
