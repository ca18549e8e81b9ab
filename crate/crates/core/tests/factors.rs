use itac_core::synthetic::{simulate_dfm, two_factor_dfm};
use itac_core::factors::{
    canonical_correlations, dfm_fit, dfm_smooth, pca_fit, pca_fit_with, EmConfig, PcaBasis,
};
use itac_core::linalg::Matrix;
use itac_core::rng::rng_from_seed;
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;
use rand_distr::{Distribution, StandardNormal};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut rng = rng_from_seed(seed);
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
}

/// Sorted eigenpairs of the explicitly formed sample covariance.
fn covariance_oracle(x: &Matrix<f64>, correlation: bool) -> (Vec<f64>, DMatrix<f64>) {
    let (t, n) = x.shape();
    let mut z = DMatrix::from_fn(t, n, |r, c| x[(r, c)]);
    for c in 0..n {
        let mu = z.column(c).mean();
        z.column_mut(c).add_scalar_mut(-mu);
        if correlation {
            let sd = (z.column(c).norm_squared() / (t - 1) as f64).sqrt();
            z.column_mut(c).scale_mut(1.0 / sd);
        }
    }
    let cov = z.transpose() * &z / (t - 1) as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

fn assert_matches_oracle(x: &Matrix<f64>, k: usize, basis: PcaBasis) {
    let model = pca_fit_with(x, k, basis).unwrap();
    let (vals, vecs) = covariance_oracle(x, basis == PcaBasis::Correlation);
    for j in 0..k {
        assert!((model.eigenvalues[j] - vals[j]).abs() < 1e-8);
        let sign = if (0..x.cols()).map(|i| model.loadings[(i, j)] * vecs[(i, j)]).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
        for i in 0..x.cols() {
            assert!((model.loadings[(i, j)] - sign * vecs[(i, j)]).abs() < 1e-8, "entry ({i},{j})");
        }
    }
    assert!(model.eigenvalues.windows(2).all(|w| w[0] >= w[1]));
    assert!(model.eigenvalues.iter().all(|&l| l >= -1e-10));
    let wtw = model.loadings.t_matmul(&model.loadings).unwrap();
    for i in 0..k {
        for j in 0..k {
            let want = if i == j { 1.0 } else { 0.0 };
            assert!((wtw[(i, j)] - want).abs() < 1e-8);
        }
    }
}

#[test]
fn pca_matches_covariance_eigendecomposition() {
    for seed in 0..20 {
        assert_matches_oracle(&gaussian(50, 20, seed), 20, PcaBasis::Covariance);
    }
}

#[test]
fn correlation_pca_matches_correlation_eigendecomposition() {
    for seed in 0..10 {
        let mut x = gaussian(40, 12, 100 + seed);
        for r in 0..40 {
            for c in 0..12 {
                x[(r, c)] *= (c + 1) as f64;
            }
        }
        assert_matches_oracle(&x, 6, PcaBasis::Correlation);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn pca_oracle_on_random_shapes(seed in 0u64..10_000, t in 5usize..50, n in 2usize..20) {
        let x = gaussian(t, n, seed);
        let k = (t - 1).min(n);
        assert_matches_oracle(&x, k, PcaBasis::Covariance);
    }
}

/// Draws T observations from a DFM with the given parameters.
#[test]
fn dfm_recovers_factor_space() {
    let mut total = 0.0;
    for seed in 0..5 {
        let truth = two_factor_dfm(20, 1.0, seed);
        let (x, f) = simulate_dfm(&truth, 200, seed);
        let fit = dfm_fit(&x, 2, &EmConfig::default()).unwrap();
        let sm = dfm_smooth(&fit, &x).unwrap();
        let cc = canonical_correlations(&sm.values, &f).unwrap();
        total += cc.iter().sum::<f64>() / cc.len() as f64;
        let h = &fit.diagnostics.loglik_history;
        assert!(h.windows(2).all(|w| w[1] >= w[0] - 1e-8 * w[0].abs()));
        assert!(itac_core::linalg::spectral_radius(&fit.transition) < 1.0);
    }
    assert!(total / 5.0 >= 0.95, "mean canonical correlation {}", total / 5.0);
}

#[test]
fn noiseless_smoothing_tracks_true_factors() {
    let mut truth = two_factor_dfm(20, 1.0, 77);
    truth.idiosyncratic = vec![1e-6; 20];
    let (_, f) = simulate_dfm(&truth, 150, 77);
    let x = f.matmul(&truth.loadings.transpose()).unwrap();
    let sm = dfm_smooth(&truth, &x).unwrap();
    for j in 0..2 {
        let a = sm.factor(j);
        let b = f.column(j);
        let corr = pearson(&a, &b);
        assert!(corr > 0.999, "factor {j}: {corr}");
    }
}

#[test]
fn smoothing_is_invariant_to_common_rescaling() {
    let truth = two_factor_dfm(10, 0.5, 3);
    let (x, _) = simulate_dfm(&truth, 80, 3);
    let c = 7.5;
    let mut scaled = truth.clone();
    scaled.loadings = truth.loadings.scale(c);
    scaled.idiosyncratic = truth.idiosyncratic.iter().map(|v| v * c * c).collect();
    let a = dfm_smooth(&truth, &x).unwrap();
    let b = dfm_smooth(&scaled, &x.scale(c)).unwrap();
    for (u, v) in a.values.as_slice().iter().zip(b.values.as_slice()) {
        assert!((u - v).abs() < 1e-9);
    }
}

#[test]
fn fitted_factors_are_scale_consistent() {
    let truth = two_factor_dfm(12, 0.5, 5);
    let (x, _) = simulate_dfm(&truth, 120, 5);
    let cfg = EmConfig { max_iter: 30, tol: 0.0, series_length: 0.0 };
    let a = dfm_fit(&x, 2, &cfg).unwrap();
    let b = dfm_fit(&x.scale(4.0), 2, &cfg).unwrap();
    let fa = dfm_smooth(&a, &x).unwrap();
    let fb = dfm_smooth(&b, &x.scale(4.0)).unwrap();
    let cc = canonical_correlations(&fa.values, &fb.values).unwrap();
    assert!(cc.iter().all(|&c| c > 1.0 - 1e-6), "{cc:?}");
}

#[test]
fn table_component_counts_are_accepted() {
    let x = gaussian(214, 26, 8);
    assert_eq!(pca_fit(&x, 6).unwrap().k, 6);
    let m = dfm_fit(&x, 4, &EmConfig { max_iter: 10, tol: 1e-6, series_length: 1.2 }).unwrap();
    assert_eq!(m.loadings.shape(), (26, 4));
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
