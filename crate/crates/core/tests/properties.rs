//! Property tests over the probability plumbing.

use catreg_core::dist::{erf, DistFamily};
use catreg_core::eval::EvalRecord;
use catreg_core::interval::{interval_probs, normalize_probs};
use catreg_core::scheme::{Category, CategoryScheme};
use proptest::prelude::*;

fn scheme() -> CategoryScheme {
    CategoryScheme::quality_default()
}

proptest! {
    #![proptest_config(ProptestConfig {
        failure_persistence: None,
        ..ProptestConfig::default()
    })]

    #[test]
    fn normalize_unit_sum_and_ratio_preserving(
        raw in prop::collection::vec(1e-6f64..1e3, 2..8)
    ) {
        let out = normalize_probs(&raw).unwrap();
        let sum: f64 = out.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-12);
        // pairwise ratios survive normalization
        for i in 1..raw.len() {
            let before = raw[i] / raw[0];
            let after = out[i] / out[0];
            prop_assert!((before - after).abs() <= 1e-9 * before.abs());
        }
    }

    #[test]
    fn interval_probs_are_a_distribution(
        mu in 0.01f64..0.99,
        sigma in 0.005f64..0.8,
        gaussian in any::<bool>(),
    ) {
        let family = if gaussian { DistFamily::Gaussian } else { DistFamily::Laplace };
        let p = interval_probs(mu, sigma, &scheme(), family).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn erf_odd_and_monotone(a in -5.5f64..5.5, b in -5.5f64..5.5) {
        prop_assert!((erf(a) + erf(-a)).abs() <= 1e-15);
        if a < b {
            prop_assert!(erf(a) < erf(b));
        }
    }

    #[test]
    fn certain_records_reduce_to_exact_categorical_match(
        mean in 1e-6f64..1.0,
        label in 0usize..4,
    ) {
        let s = scheme();
        let r = EvalRecord {
            mean,
            probs: vec![],
            first_label: Category(label),
            second_label: Category(label),
        };
        let (lo, hi) = s.bounds(Category(label));
        prop_assert_eq!(r.is_hit(&s), mean > lo && mean <= hi);
    }
}
