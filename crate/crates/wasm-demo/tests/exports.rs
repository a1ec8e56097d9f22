use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rootopt::robustify::soft_threshold;
use rootopt_oracles::{scalar_compose, singular_values_via_gram, sorted_quantile_abs};
use rootopt_wasm::{ns_curve, orthogonalize_gaussian, soft_threshold_decompose};

#[test]
fn curve_matches_longhand_composition() {
    let ys = ns_curve(3.4445, -4.7750, 2.0315, 5, 1.2, 61).unwrap();
    assert_eq!(ys.len(), 61);
    for (i, y) in ys.iter().enumerate() {
        let x = 1.2 * i as f64 / 60.0;
        assert!((y - scalar_compose(3.4445, -4.7750, 2.0315, 5, x)).abs() <= 1e-12 * y.abs().max(1.0));
    }
    assert_eq!(ys[0], 0.0);
    let classic = ns_curve(1.875, -1.25, 0.375, 3, 1.0, 2).unwrap();
    assert_eq!(classic[1], 1.0);
}

#[test]
fn decomposition_splits_at_the_quantile() {
    let values = vec![0.1, -0.2, 5.0, 0.3, -7.0, 0.05, 0.4, -0.25];
    let d = soft_threshold_decompose(values.clone(), 0.75).unwrap();
    let eps = sorted_quantile_abs(&values, 0.75);
    assert!((d.epsilon() - eps).abs() < 1e-15);
    for ((x, b), o) in values.iter().zip(d.base()).zip(d.outliers()) {
        assert_eq!(b, x.clamp(-eps, eps));
        assert_eq!(o, soft_threshold(*x, eps));
    }
    assert_eq!(d.outlier_fraction(), 2.0 / 8.0);
    assert!(d.outlier_mass_ratio() > 0.0 && d.outlier_mass_ratio() < 1.0);
}

#[test]
fn orthogonalization_report_is_consistent() {
    let r = orthogonalize_gaussian(24, 10, 3, 3.4445, -4.7750, 2.0315, 5).unwrap();
    let before = r.sigma_before();
    assert_eq!(before.len(), 10);
    assert!((before.iter().map(|s| s * s).sum::<f64>() - 1.0).abs() < 1e-12);
    // every output singular value is g^T of the matching input one
    let after = r.sigma_after();
    let mut mapped: Vec<f64> = before.iter().map(|s| scalar_compose(3.4445, -4.7750, 2.0315, 5, *s)).collect();
    mapped.sort_by(|a, b| b.total_cmp(a));
    for (a, m) in after.iter().zip(&mapped) {
        assert!((a - m).abs() < 1e-9, "{after:?} vs {mapped:?}");
    }
    let m = rootopt::DenseMatrix::random_gaussian(24, 10, &mut ChaCha8Rng::seed_from_u64(3));
    let norm = m.frobenius_norm();
    for (got, want) in before.iter().zip(singular_values_via_gram(&m)) {
        assert!((got - want / norm).abs() < 1e-10);
    }
    let expected_mse = after.iter().map(|s| (s - 1.0).powi(2)).sum::<f64>() / 240.0;
    assert!((r.mse() - expected_mse).abs() < 1e-9);
    assert!(r.relative_error() > 0.0 && r.relative_error() < 1.0);
    // more iterations of the classic quintic converge further
    let slow = orthogonalize_gaussian(24, 10, 3, 1.875, -1.25, 0.375, 5).unwrap();
    let fast = orthogonalize_gaussian(24, 10, 3, 1.875, -1.25, 0.375, 15).unwrap();
    assert!(fast.relative_error() < slow.relative_error());
}
