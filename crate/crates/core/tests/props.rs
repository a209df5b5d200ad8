//! Property tests for the invariants that must hold over all inputs,
//! not just the curated cases.

use proptest::prelude::*;

use polarloc_core::bev::{BevConfig, PolarBev};
use polarloc_core::cloud::{filter_points, rotate_point_cloud, FilterConfig, PointCloud};
use polarloc_core::correlate::{correlation_distribution, softmax_expectation_yaw};
use polarloc_core::learn::{quadruplet_loss, rotation_loss, LossConfig};
use polarloc_core::spectrum::{signature_distance, Signature};

fn cloud_strategy(n: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec(
        (-100.0f64..100.0, -100.0f64..100.0, -5.0f64..30.0),
        0..n,
    )
    .prop_map(|pts| PointCloud::new(pts.into_iter().map(|(x, y, z)| [x, y, z]).collect()))
}

fn signature_strategy(len: usize) -> impl Strategy<Value = Signature> {
    prop::collection::vec(-10.0f64..10.0, len..=len).prop_map(|values| Signature { values })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn filter_is_idempotent(pc in cloud_strategy(300)) {
        let cfg = FilterConfig::default();
        let once = filter_points(&pc, &cfg);
        prop_assert_eq!(filter_points(&once, &cfg), once);
    }

    #[test]
    fn rotation_preserves_pairwise_distances(
        pc in cloud_strategy(60),
        yaw in -720.0f64..720.0,
    ) {
        let rot = rotate_point_cloud(&pc, yaw);
        for i in 0..pc.len().saturating_sub(1) {
            let j = i + 1;
            let d0 = dist(&pc.points[i], &pc.points[j]);
            let d1 = dist(&rot.points[i], &rot.points[j]);
            prop_assert!((d0 - d1).abs() <= 1e-9 * d0.max(1.0));
        }
    }

    #[test]
    fn distance_is_symmetric_nonnegative_triangular(
        a in signature_strategy(16),
        b in signature_strategy(16),
        c in signature_strategy(16),
    ) {
        let ab = signature_distance(&a, &b).unwrap();
        let ba = signature_distance(&b, &a).unwrap();
        let ac = signature_distance(&a, &c).unwrap();
        let cb = signature_distance(&c, &b).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!(ab >= 0.0);
        prop_assert!(ab <= ac + cb + 1e-9);
    }

    #[test]
    fn softmax_probabilities_sum_to_one(
        corr in prop::collection::vec(-5.0f64..5.0, 12..120),
        scale in 0.1f64..50.0,
        bias in -3.0f64..3.0,
    ) {
        let dist = correlation_distribution(&corr, scale, bias);
        let total: f64 = dist.probs.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(dist.probs.iter().all(|&p| p >= 0.0));
        // The solver either returns a wrapped angle or flags degeneracy.
        match softmax_expectation_yaw(&corr, scale, bias, 1.05) {
            Ok((est, _)) => prop_assert!((0.0..360.0).contains(&est.yaw_deg)),
            Err(polarloc_core::Error::DegenerateDistribution { .. }) => {}
            Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
        }
    }

    #[test]
    fn quadruplet_loss_is_nonnegative_and_order_free(
        q in signature_strategy(8),
        s in signature_strategy(8),
        n1 in signature_strategy(8),
        n2 in signature_strategy(8),
        n3 in signature_strategy(8),
    ) {
        let cfg = LossConfig::default();
        let (loss, _) =
            quadruplet_loss(&q, &s, &[n1.clone(), n2.clone()], std::slice::from_ref(&n3), &cfg)
                .unwrap();
        prop_assert!(loss >= 0.0);
        let (swapped, _) = quadruplet_loss(&q, &s, &[n2, n1], &[n3], &cfg).unwrap();
        prop_assert!((loss - swapped).abs() < 1e-9);
    }

    #[test]
    fn rotation_loss_is_nonnegative_and_zero_only_at_one_hot(
        raw in prop::collection::vec(0.01f64..1.0, 24..=24),
        bin in 0usize..24,
    ) {
        let total: f64 = raw.iter().sum();
        let probs: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let dist = polarloc_core::correlate::CorrelationDistribution {
            probs, scale: 1.0, bias: 0.0,
        };
        let yaw = bin as f64 * 15.0;
        let (loss, _) = rotation_loss(&dist, yaw).unwrap();
        prop_assert!(loss >= 0.0);
        // One-hot at the target reaches exactly zero.
        let mut one_hot = vec![0.0; 24];
        one_hot[bin] = 1.0;
        let perfect = polarloc_core::correlate::CorrelationDistribution {
            probs: one_hot, scale: 1.0, bias: 0.0,
        };
        prop_assert_eq!(rotation_loss(&perfect, yaw).unwrap().0, 0.0);
    }

    #[test]
    fn column_shifts_compose_modulo_sectors(
        shift_a in -300i64..300,
        shift_b in -300i64..300,
    ) {
        let mut bev = PolarBev::zeros(BevConfig {
            rings: 4, sectors: 24, layers: 2, ..BevConfig::default()
        });
        for (i, v) in bev.cells.iter_mut().enumerate() {
            *v = i as f64;
        }
        let ab = polarloc_core::bev::rotate_polar_bev(
            &polarloc_core::bev::rotate_polar_bev(&bev, shift_a), shift_b);
        let sum = polarloc_core::bev::rotate_polar_bev(&bev, shift_a + shift_b);
        prop_assert_eq!(ab.cells, sum.cells);
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}
