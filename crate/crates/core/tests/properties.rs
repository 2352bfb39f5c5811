use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use ivspectral::dgp::{generate_instruments, simulate_dataset, Dataset, DgpConfig, InstrumentDesign, PiScheme};
use ivspectral::diagnostics::{covariance_spectrum, effective_count, q_sequence};
use ivspectral::estimators::{
    ols, projection_apply, regularized_projection_apply, tsls, tsls_regularized, RegularizationScheme,
    EFFECTIVE_DF,
};
use ivspectral::montecarlo::{run_scenario, summarize, EstimatorSpec, ScenarioConfig};

fn gaussian(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
    generate_instruments(&InstrumentDesign::IidGaussian, n, k, seed).unwrap()
}

fn dataset(n: usize, k: usize, seed: u64) -> Dataset {
    let mut config = DgpConfig {
        n,
        k,
        g: 1,
        pi: PiScheme::FixedSupport {
            support_size: k.min(3),
            value: 1.0,
        },
        design: InstrumentDesign::IidGaussian,
        delta_true: vec![],
        sigma_u: 1.0,
        sigma_vu: vec![0.5],
        sigma_v: 1.0,
    };
    config.resolve_defaults();
    simulate_dataset(&config, seed).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn projection_is_idempotent_and_symmetric(n in 5usize..60, frac in 0.1f64..0.9, seed in any::<u64>()) {
        let k = ((n as f64 * frac) as usize).max(1);
        let z = gaussian(n, k, seed);
        let ab = gaussian(n, 2, seed ^ 1);
        let (a, b) = (ab.columns(0, 1).into_owned(), ab.columns(1, 1).into_owned());
        let pa = projection_apply(&z, &a).unwrap();
        let ppa = projection_apply(&z, &pa).unwrap();
        prop_assert!((&ppa - &pa).norm() <= 1e-10 * a.norm());
        let pb = projection_apply(&z, &b).unwrap();
        let lhs = pa.dot(&b);
        let rhs = a.dot(&pb);
        prop_assert!((lhs - rhs).abs() <= 1e-10 * a.norm() * b.norm());
    }

    #[test]
    fn tsls_invariant_under_instrument_remixing(n in 20usize..80, k in 1usize..8, seed in any::<u64>()) {
        let data = dataset(n, k, seed);
        // A well-conditioned re-mixing: identity plus a small random perturbation.
        let a = DMatrix::identity(k, k) + gaussian(k, k, seed ^ 7) * (0.3 / (k as f64).sqrt());
        let remixed = Dataset::new(data.y().clone(), data.x().clone(), data.z() * a, None).unwrap();
        let d0 = tsls(&data).unwrap().delta_hat[0];
        let d1 = tsls(&remixed).unwrap().delta_hat[0];
        prop_assert!(rel(d1, d0) < 1e-8, "{d0} vs {d1}");
    }

    #[test]
    fn tikhonov_tends_to_tsls_as_alpha_vanishes(n in 30usize..80, k in 2usize..10, seed in any::<u64>()) {
        let data = dataset(n, k, seed);
        let d_tsls = tsls(&data).unwrap().delta_hat[0];
        let lmax = data.z().tr_mul(data.z()).symmetric_eigen().eigenvalues.max();
        let mut previous = f64::INFINITY;
        for e in 2..=12 {
            let alpha = 10f64.powi(-e) * lmax * lmax;
            let d = tsls_regularized(&data, &RegularizationScheme::Tikhonov { alpha }).unwrap().delta_hat[0];
            let err = (d - d_tsls).abs();
            prop_assert!(err <= previous + 1e-13 * d_tsls.abs(), "not decreasing at 1e-{e}");
            previous = err;
        }
        prop_assert!(previous <= 1e-6 * d_tsls.abs().max(1.0));
    }

    #[test]
    fn square_instruments_reduce_tsls_to_ols(n in 2usize..20, seed in any::<u64>()) {
        let z = gaussian(n, n, seed);
        let xy = gaussian(n, 2, seed ^ 3);
        let data = Dataset::new(
            DVector::from_iterator(n, xy.column(1).iter().copied()),
            xy.columns(0, 1).into_owned(),
            z,
            None,
        ).unwrap();
        match tsls(&data) {
            Ok(r) => {
                let o = ols(&data).unwrap().delta_hat[0];
                prop_assert!((r.delta_hat[0] - o).abs() <= 1e-10 * o.abs().max(1.0));
            }
            // Some Gaussian square draws are too ill-conditioned to invert.
            Err(e) => prop_assert_eq!(e.kind(), "rank"),
        }
    }

    #[test]
    fn estimators_scale_with_y(n in 10usize..60, k in 1usize..6, seed in any::<u64>(), m in -8i32..8, c in 0.1f64..10.0) {
        let data = dataset(n, k, seed);
        let scheme = RegularizationScheme::Tikhonov { alpha: 1.0 };
        let estimates = |d: &Dataset| {
            [
                ols(d).unwrap().delta_hat[0],
                tsls(d).unwrap().delta_hat[0],
                tsls_regularized(d, &scheme).unwrap().delta_hat[0],
            ]
        };
        let base = estimates(&data);
        // Powers of two scale exactly in floating point.
        let pow2 = 2f64.powi(m);
        let exact = estimates(&data.with_y(data.y() * pow2).unwrap());
        for (b, s) in base.iter().zip(exact) {
            prop_assert_eq!(s, b * pow2);
        }
        let scaled = estimates(&data.with_y(data.y() * c).unwrap());
        for (b, s) in base.iter().zip(scaled) {
            prop_assert!(rel(s, b * c) < 1e-12);
        }
    }

    #[test]
    fn effective_df_below_k_for_positive_alpha(n in 10usize..60, k in 1usize..8, seed in any::<u64>(), alpha in 1e-6f64..1e6) {
        let data = dataset(n, k, seed);
        prop_assert_eq!(tsls(&data).unwrap().diagnostics[EFFECTIVE_DF], k as f64);
        let df = tsls_regularized(&data, &RegularizationScheme::Tikhonov { alpha }).unwrap().diagnostics[EFFECTIVE_DF];
        prop_assert!(df < k as f64 && df > 0.0);
    }

    #[test]
    fn regularized_projection_is_a_contraction(n in 3usize..30, k in 1usize..40, seed in any::<u64>(), alpha in 1e-3f64..1e3) {
        let z = gaussian(n, k, seed);
        let v = gaussian(n, 1, seed ^ 5);
        let pv = regularized_projection_apply(&z, &v, &RegularizationScheme::Tikhonov { alpha }).unwrap();
        prop_assert!(pv.norm() <= v.norm() * (1.0 + 1e-12));
        let w = gaussian(n, 1, seed ^ 9);
        let pw = regularized_projection_apply(&z, &w, &RegularizationScheme::Tikhonov { alpha }).unwrap();
        prop_assert!((pv.dot(&w) - v.dot(&pw)).abs() <= 1e-10 * v.norm() * w.norm());
    }

    #[test]
    fn simulation_is_reproducible(n in 5usize..40, k in 1usize..5, seed in any::<u64>()) {
        prop_assert_eq!(dataset(n, k, seed), dataset(n, k, seed));
    }

    #[test]
    fn orthonormalized_gram_is_identity(k in 1usize..20, extra in 0usize..50, seed in any::<u64>()) {
        let n = k + extra;
        let z = generate_instruments(&InstrumentDesign::Orthonormalized, n, k, seed).unwrap();
        let gram = z.tr_mul(&z) / n as f64;
        for l in gram.symmetric_eigen().eigenvalues.iter() {
            prop_assert!((l - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn q_sequence_endpoint_matches_direct_formula(n in 5usize..50, k in 1usize..10, seed in any::<u64>()) {
        let z = gaussian(n, k, seed);
        let pi = gaussian(k, 1, seed ^ 11);
        let report = q_sequence(&z, &pi, &[k]).unwrap();
        let direct = (pi.transpose() * z.tr_mul(&z) * &pi)[(0, 0)] / n as f64;
        prop_assert!((report.q_values[0][(0, 0)] - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn effective_count_monotone_in_c(pi in prop::collection::vec(-2.0f64..2.0, 1..30), n in 1usize..1000, c1 in 0.01f64..5.0, dc in 0.0f64..5.0) {
        let low = effective_count(&pi, n, c1);
        let high = effective_count(&pi, n, c1 + dc);
        prop_assert!(high.count_effective <= low.count_effective);
        prop_assert_eq!(low.count_effective + low.count_below_threshold + low.count_irrelevant, pi.len());
    }

    #[test]
    fn spectrum_preserves_weighted_trace(n in 5usize..60, k in 1usize..12, seed in any::<u64>(), raw in prop::collection::vec(0.1f64..1.0, 12)) {
        let z = gaussian(n, k, seed);
        let total: f64 = raw[..k].iter().sum();
        let weights: Vec<f64> = raw[..k].iter().map(|w| w / total).collect();
        let report = covariance_spectrum(&z, Some(&weights)).unwrap();
        let gram = z.tr_mul(&z) / n as f64;
        let trace: f64 = (0..k).map(|j| weights[j] * gram[(j, j)]).sum();
        let sum: f64 = report.eigenvalues.iter().sum();
        prop_assert!(rel(sum, trace) < 1e-8);
    }

    #[test]
    fn summary_respects_variance_decomposition(values in prop::collection::vec(-1e3f64..1e3, 1..200), truth in -10.0f64..10.0) {
        let raw: Vec<Vec<f64>> = values.iter().map(|v| vec![*v]).collect();
        let s = &summarize(&raw, &[truth]).unwrap()[0];
        prop_assert!(s.mse >= s.mean_bias * s.mean_bias - 1e-12 * s.mse.max(1.0));
        prop_assert!(s.mad >= 0.0 && s.decile_range >= 0.0);
    }
}

#[test]
fn paired_design_gives_identical_stats_to_identical_estimators() {
    let mut dgp = DgpConfig {
        n: 60,
        k: 8,
        g: 1,
        pi: PiScheme::FixedSupport { support_size: 2, value: 1.0 },
        design: InstrumentDesign::IidGaussian,
        delta_true: vec![],
        sigma_u: 1.0,
        sigma_vu: vec![0.5],
        sigma_v: 1.0,
    };
    dgp.resolve_defaults();
    let config = ScenarioConfig {
        dgp,
        estimators: vec![
            EstimatorSpec::Tsls { label: "a".into() },
            EstimatorSpec::Tsls { label: "b".into() },
        ],
        replications: 20,
        master_seed: 4,
        n_grid: None,
    };
    let stats = run_scenario(&config).unwrap();
    assert_eq!(stats.cells[0].coordinates, stats.cells[1].coordinates);
}
