//! Reference values computed independently with 40-digit arithmetic.
#![allow(clippy::excessive_precision)]

use approx::assert_abs_diff_eq;
use poseguard_core::stats::{
    cohens_d_from_moments, paired_t_test, t_cdf, two_tailed_p, welch_t_test, Moments,
};
use proptest::prelude::*;

#[test]
fn two_tailed_reference_values() {
    let cases = [
        (2.21, 65.0, 0.030632490763032491),
        (2.85, 65.0, 0.005851071514339534),
        (2.62, 37.0, 0.012677642271075666),
        (2.50, 37.0, 0.016979962176607769),
        (2.54, 37.0, 0.015416263779420015),
        (1.96, 1e5, 0.049998563194301638),
    ];
    for (t, df, p) in cases {
        assert_abs_diff_eq!(two_tailed_p(t, df).unwrap(), p, epsilon = 1e-10);
        assert_abs_diff_eq!(two_tailed_p(-t, df).unwrap(), p, epsilon = 1e-10);
    }
}

#[test]
fn effect_sizes_from_published_moments() {
    let cases = [
        ((48.39, 9.42), (51.61, 12.17), 0.29589558423360385),
        ((83.01, 10.74), (84.60, 10.43), 0.1501964626434514),
        ((81.26, 11.56), (83.24, 11.31), 0.17314225720229165),
        ((81.26, 11.56), (83.54, 10.64), 0.20522925135750383),
        ((57.26, 10.13), (52.82, 8.74), -0.469316684057554),
    ];
    for ((ma, sa), (mb, sb), d) in cases {
        let got =
            cohens_d_from_moments(&Moments::new(ma, sa, 2), &Moments::new(mb, sb, 2)).unwrap();
        assert_abs_diff_eq!(got, d, epsilon = 1e-9);
    }
}

const A: [f64; 66] = [
    47.44, 55.11, 47.74, 46.85, 40.7, 47.87, 61.12, 54.24, 60.37, 52.49, 53.95, 51.85, 33.34,
    58.55, 55.06, 54.99, 33.09, 32.56, 41.1, 45.32, 53.05, 49.54, 55.21, 43.58, 53.09, 53.94,
    43.39, 67.18, 55.57, 61.97, 43.8, 42.6, 46.56, 48.94, 56.32, 52.48, 45.53, 40.43, 44.79, 62.21,
    41.92, 52.45, 54.27, 35.1, 50.48, 63.06, 29.86, 46.78, 48.94, 41.83, 54.97, 49.38, 35.35,
    58.28, 56.69, 59.46, 64.41, 53.62, 51.19, 37.01, 56.15, 43.88, 45.47, 37.35, 40.32, 44.69,
];
const B: [f64; 66] = [
    57.17, 44.92, 40.99, 50.29, 51.36, 53.34, 51.72, 41.13, 64.51, 50.07, 49.23, 59.71, 41.95,
    61.49, 58.53, 59.6, 44.65, 38.27, 46.21, 50.61, 45.64, 59.23, 62.94, 48.76, 43.25, 52.14,
    50.44, 58.31, 56.47, 70.09, 37.93, 54.26, 51.87, 50.04, 60.27, 58.38, 48.25, 49.3, 42.82,
    61.72, 50.17, 54.61, 50.99, 42.78, 61.27, 62.39, 23.58, 47.97, 50.05, 42.04, 65.4, 45.22,
    44.91, 52.67, 53.97, 65.25, 73.18, 60.77, 55.26, 39.86, 59.06, 49.33, 46.41, 41.01, 45.76,
    46.7,
];

#[test]
fn paired_reference_fixture() {
    let a: Vec<_> = A.iter().copied().map(Some).collect();
    let b: Vec<_> = B.iter().copied().map(Some).collect();
    let r = paired_t_test(&a, &b).unwrap();
    assert_eq!(r.n_pairs, 66);
    assert_eq!(r.df, 65.0);
    assert_abs_diff_eq!(r.t, -3.2686269185591969955, epsilon = 1e-10);
    assert_abs_diff_eq!(r.p, 0.0017292766834721797999, epsilon = 1e-12);
    assert_abs_diff_eq!(r.d.unwrap(), 0.28435663543024113426, epsilon = 1e-10);
}

#[test]
fn welch_reference_fixture() {
    let r = welch_t_test(
        &[20.1, 22.3, 19.8, 25.0, 21.7],
        &[18.2, 17.9, 21.0, 16.5, 19.3, 18.8],
    )
    .unwrap();
    assert_abs_diff_eq!(r.t, 2.8320031867345294, epsilon = 1e-10);
    assert_abs_diff_eq!(r.df, 7.1545135132240185, epsilon = 1e-9);
    assert_abs_diff_eq!(r.p, 0.02476136602973194, epsilon = 1e-9);
}

proptest! {
    #[test]
    fn cdf_symmetric_and_monotone(t in -50.0f64..50.0, dt in 0.001f64..5.0, df in 0.5f64..500.0) {
        let c = t_cdf(t, df).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        prop_assert!((c + t_cdf(-t, df).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!(t_cdf(t + dt, df).unwrap() >= c);
    }

    #[test]
    fn paired_antisymmetric(pairs in prop::collection::vec((0.0f64..100.0, 0.0f64..100.0), 3..60)) {
        let a: Vec<_> = pairs.iter().map(|p| Some(p.0)).collect();
        let b: Vec<_> = pairs.iter().map(|p| Some(p.1)).collect();
        if let (Ok(ab), Ok(ba)) = (paired_t_test(&a, &b), paired_t_test(&b, &a)) {
            prop_assert!((ab.t + ba.t).abs() < 1e-9 * ab.t.abs().max(1.0));
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            if let (Some(x), Some(y)) = (ab.d, ba.d) {
                prop_assert!((x + y).abs() < 1e-12);
            }
        }
    }
}

proptest! {
    #[test]
    fn cdf_agrees_with_statrs(t in -40.0f64..40.0, df in 1u32..400) {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let reference = StudentsT::new(0.0, 1.0, df as f64).unwrap().cdf(t);
        let ours = t_cdf(t, df as f64).unwrap();
        prop_assert!((ours - reference).abs() < 1e-9, "t={} df={}: {} vs {}", t, df, ours, reference);
    }
}
