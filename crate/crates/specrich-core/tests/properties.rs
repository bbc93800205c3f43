//! Property tests over randomized inputs.

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use specrich_core::eval;
use specrich_core::regress::{self, KernelParams};
use specrich_core::spectra::{self, ResampleWeights};
use specrich_core::SpectralGrid;

fn finite_vec(len: usize, lo: f64, hi: f64) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(lo..hi, len)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn resample_rows_sum_to_one_and_stay_linear(
        values_a in finite_vec(80, -2.0, 2.0),
        values_b in finite_vec(80, -2.0, 2.0),
        alpha in -3.0..3.0f64,
        beta in -3.0..3.0f64,
    ) {
        let source = SpectralGrid::uniform(400.0, 2.55, 80, 2.55).unwrap();
        let target = SpectralGrid::uniform(410.0, 10.0, 18, 10.0).unwrap();
        let weights = ResampleWeights::compute(&source, &target).unwrap();

        let mixed: Vec<f64> = values_a.iter().zip(&values_b)
            .map(|(a, b)| alpha * a + beta * b)
            .collect();
        let out_mixed = weights.apply(&mixed).unwrap();
        let out_a = weights.apply(&values_a).unwrap();
        let out_b = weights.apply(&values_b).unwrap();
        for i in 0..out_mixed.len() {
            let expect = alpha * out_a[i] + beta * out_b[i];
            prop_assert!((out_mixed[i] - expect).abs() <= 1e-10 * expect.abs().max(1.0));
        }

        // Convex-combination check through a constant spectrum.
        let constant = vec![0.73; 80];
        for v in weights.apply(&constant).unwrap() {
            prop_assert!((v - 0.73).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_normalize_idempotent_and_scale_free(
        values in finite_vec(12, 0.05, 5.0),
        scale in 0.01..100.0f64,
    ) {
        let once = spectra::mean_normalize(&values, 1e-12).unwrap();
        let twice = spectra::mean_normalize(&once, 1e-12).unwrap();
        for (a, b) in once.iter().zip(&twice) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let scaled: Vec<f64> = values.iter().map(|v| v * scale).collect();
        let of_scaled = spectra::mean_normalize(&scaled, 1e-12).unwrap();
        for (a, b) in once.iter().zip(&of_scaled) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let mean: f64 = once.iter().sum::<f64>() / once.len() as f64;
        prop_assert!((mean - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_gram_is_positive_semidefinite(
        rows in prop::collection::vec(finite_vec(4, -3.0, 3.0), 5..25),
        sigma2 in 1e-3..1e2f64,
        length_scale in 1e-2..1e2f64,
    ) {
        let n = rows.len();
        let z = DMatrix::from_fn(n, 4, |i, j| rows[i][j]);
        let params = KernelParams::new(sigma2, length_scale, 0.0).unwrap();
        let gram = regress::gram_matrix(&z, &params);
        let eig = nalgebra::SymmetricEigen::new(gram.clone());
        let min_eig = eig.eigenvalues.min();
        let bound = -1e-8 * gram.trace() / n as f64;
        prop_assert!(min_eig >= bound, "min eigenvalue {min_eig} below {bound}");

        // With a positive white term the factorization must succeed.
        let ridged = KernelParams::new(sigma2, length_scale, 1e-3).unwrap();
        let gram = regress::gram_matrix(&z, &ridged);
        prop_assert!(nalgebra::Cholesky::new(gram).is_some());
    }

    #[test]
    fn krr_gpr_equivalence_holds(
        rows in prop::collection::vec(finite_vec(3, -2.0, 2.0), 6..20),
        targets_seed in 0u64..1000,
        noise in 1e-3..1.0f64,
    ) {
        use rand::{Rng, SeedableRng};
        let n = rows.len();
        let z = DMatrix::from_fn(n, 3, |i, j| rows[i][j]);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(targets_seed);
        let y = DVector::from_fn(n, |i, _| z.row(i).sum() * 2.0 + rng.random_range(0.0..1.0) + 20.0);
        let params = KernelParams::new(0.5, 1.0, noise).unwrap();

        let gpr = regress::gpr_fit(&z, &y, &params).unwrap();
        let y_mean = y.mean();
        let yc = y.map(|v| v - y_mean);
        let krr = regress::krr_fit(&z, &yc, &params).unwrap();

        let test = DMatrix::from_fn(5, 3, |i, j| (i as f64 - 2.0) * 0.7 + j as f64 * 0.3);
        let g = regress::predict(&gpr, &test).unwrap();
        let k = regress::predict(&krr, &test).unwrap().map(|v| v + y_mean);
        prop_assert!((g - k).amax() < 1e-8);
    }

    #[test]
    fn pearson_affine_invariance(
        truth in finite_vec(8, -10.0, 10.0),
        a in 0.01..50.0f64,
        b in -20.0..20.0f64,
    ) {
        let spread = truth.iter().fold(f64::MIN, |m, &v| m.max(v))
            - truth.iter().fold(f64::MAX, |m, &v| m.min(v));
        prop_assume!(spread > 1e-6);
        let pred: Vec<f64> = truth.iter().map(|t| a * t + b).collect();
        let r = eval::pearson_r(&pred, &truth).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rmse_offset_identity(
        truth in finite_vec(6, -5.0, 5.0),
        offset in -10.0..10.0f64,
    ) {
        let pred: Vec<f64> = truth.iter().map(|t| t + offset).collect();
        let e = eval::rmse(&pred, &truth).unwrap();
        prop_assert!((e - offset.abs()).abs() < 1e-12);
    }

    #[test]
    fn gpr_variance_nonnegative(
        rows in prop::collection::vec(finite_vec(2, -2.0, 2.0), 5..15),
        noise in 1e-3..1.0f64,
    ) {
        let n = rows.len();
        let z = DMatrix::from_fn(n, 2, |i, j| rows[i][j]);
        let y = DVector::from_fn(n, |i, _| z.row(i).sum());
        let params = KernelParams::new(0.1, 0.8, noise).unwrap();
        let model = regress::gpr_fit(&z, &y, &params).unwrap();
        let probe = DMatrix::from_fn(9, 2, |i, j| (i as f64 - 4.0) * 1.5 + j as f64);
        let var = regress::gpr_predictive_variance(&model, &probe).unwrap();
        prop_assert!(var.iter().all(|&v| v >= 0.0));
    }
}
