//! Linear index constructions: principal components and a dynamic factor model.

mod dfm;
mod pca;

use serde::{Deserialize, Serialize};

pub use dfm::{dfm_filter, dfm_fit, dfm_loglik, dfm_smooth, DfmDiagnostics, DfmModel, EmConfig};
pub use pca::{pca_fit, pca_fit_with, pca_transform, PcaBasis, PcaModel};

use crate::error::{Error, Result};
use crate::linalg::{dot, right_singular, Matrix};
use crate::scalar::Real;
use crate::series::MonthRange;

/// T×r factor or score matrix, dated when it came from a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct FactorSeries<T: Real> {
    pub values: Matrix<T>,
    pub span: Option<MonthRange>,
}

impl<T: Real> FactorSeries<T> {
    pub fn with_span(mut self, span: MonthRange) -> Result<Self> {
        if span.len() != self.values.rows() {
            return Err(Error::shape(format!(
                "{} factor rows for a span of {} months",
                self.values.rows(),
                span.len()
            )));
        }
        self.span = Some(span);
        Ok(self)
    }

    pub fn factor(&self, j: usize) -> Vec<T> {
        self.values.column(j)
    }
}

/// Orthonormal basis of the centered column space (modified Gram–Schmidt).
fn centered_basis<T: Real>(m: &Matrix<T>) -> Vec<Vec<T>> {
    let mut basis: Vec<Vec<T>> = Vec::new();
    for j in 0..m.cols() {
        let col = m.column(j);
        let mu = crate::scalar::mean(&col);
        let mut v: Vec<T> = col.iter().map(|&x| x - mu).collect();
        let scale = crate::linalg::norm(&v);
        for b in &basis {
            let p = dot(&v, b);
            for (vi, &bi) in v.iter_mut().zip(b) {
                *vi = *vi - p * bi;
            }
        }
        let nv = crate::linalg::norm(&v);
        if nv > T::of(1e-10) * scale.max(T::min_positive_value()) {
            basis.push(v.into_iter().map(|x| x / nv).collect());
        }
    }
    basis
}

/// Canonical correlations between the column spaces of two T-row matrices, descending.
pub fn canonical_correlations<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Vec<T>> {
    if a.rows() != b.rows() {
        return Err(Error::shape("canonical correlation needs equal row counts"));
    }
    let qa = centered_basis(a);
    let qb = centered_basis(b);
    if qa.is_empty() || qb.is_empty() {
        return Err(Error::DegenerateSeries {
            name: None,
            reason: "constant columns have no canonical correlation".into(),
        });
    }
    let m = Matrix::from_fn(qa.len(), qb.len(), |i, j| dot(&qa[i], &qb[j]));
    let (sigma, _) = right_singular(&m)?;
    let k = qa.len().min(qb.len());
    Ok(sigma.into_iter().take(k).map(|s| s.min(T::one())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::artifact;
    use crate::rng::rng_from_seed;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
        let mut rng = rng_from_seed(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn points_on_diagonal_line() {
        let x = Matrix::from_rows(&[vec![1.0, 1.0], vec![2.0, 2.0], vec![3.0, 3.0], vec![-1.0, -1.0]]).unwrap();
        let m = pca_fit_with(&x, 2, PcaBasis::Covariance).unwrap();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((m.loadings[(0, 0)] - s).abs() < 1e-12);
        assert!((m.loadings[(1, 0)] - s).abs() < 1e-12);
        assert!(m.eigenvalues[1].abs() < 1e-12);
    }

    #[test]
    fn isotropic_noise_has_unit_eigenvalues() {
        let x = gaussian(4000, 2, 3);
        let m = pca_fit_with(&x, 2, PcaBasis::Covariance).unwrap();
        for l in &m.eigenvalues {
            assert!((l - 1.0).abs() < 0.1, "{l}");
        }
    }

    #[test]
    fn scores_variance_equals_eigenvalues() {
        let x = gaussian(60, 8, 5);
        for basis in [PcaBasis::Covariance, PcaBasis::Correlation] {
            let m = pca_fit_with(&x, 4, basis).unwrap();
            let z = pca_transform(&m, &x).unwrap();
            for j in 0..4 {
                let v = crate::scalar::sample_variance(&z.factor(j));
                assert!((v - m.eigenvalues[j]).abs() < 1e-8);
            }
            let ev = m.explained_variance_ratio();
            assert!(ev.windows(2).all(|w| w[0] >= w[1]));
            assert!(ev.iter().sum::<f64>() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn constant_input_scores_are_zero() {
        let x = Matrix::from_fn(10, 3, |_, c| c as f64);
        let m = pca_fit(&x, 2).unwrap();
        let z = pca_transform(&m, &x).unwrap();
        assert!(z.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pca_shapes_and_errors() {
        let x = gaussian(214, 26, 1);
        let m = pca_fit(&x, 6).unwrap();
        assert_eq!(pca_transform(&m, &x).unwrap().values.shape(), (214, 6));
        assert!(matches!(pca_fit(&x, 0), Err(Error::Rank(_))));
        assert!(matches!(pca_fit(&x, 27), Err(Error::Rank(_))));
        assert!(matches!(pca_transform(&m, &gaussian(5, 25, 1)), Err(Error::Shape(_))));
        let mut bad = x.clone();
        bad[(3, 3)] = f64::NAN;
        assert!(matches!(pca_fit(&bad, 2), Err(Error::Numeric(_))));
    }

    #[test]
    fn sign_convention() {
        let x = gaussian(40, 6, 9);
        let m = pca_fit(&x, 3).unwrap();
        for j in 0..3 {
            let col = m.loadings.column(j);
            let big = col.iter().copied().fold(0.0f64, |a, b| if b.abs() > a.abs() { b } else { a });
            assert!(big > 0.0);
        }
    }

    #[test]
    fn pca_artifact_round_trip_is_exact() {
        let m = pca_fit(&gaussian(30, 5, 2), 3).unwrap();
        let text = artifact::to_json(&m).unwrap();
        let back: PcaModel<f64> = artifact::from_json(&text).unwrap();
        assert_eq!(m, back);
        assert!(artifact::from_json::<DfmModel<f64>>(&text).is_err());
    }

    #[test]
    fn pca_works_in_single_precision() {
        let x: Matrix<f32> = gaussian(30, 4, 4).cast();
        let m = pca_fit(&x, 2).unwrap();
        let wtw = m.loadings.t_matmul(&m.loadings).unwrap();
        assert!((wtw[(0, 0)] - 1.0).abs() < 1e-5 && wtw[(0, 1)].abs() < 1e-5);
    }

    #[test]
    fn canonical_correlation_of_rotated_space_is_one() {
        let a = gaussian(50, 2, 11);
        let rot = Matrix::from_rows(&[vec![0.6, 0.8], vec![-0.8, 0.6]]).unwrap();
        let b = a.matmul(&rot).unwrap().scale(3.0);
        let cc = canonical_correlations(&a, &b).unwrap();
        assert!(cc.iter().all(|&c| (c - 1.0).abs() < 1e-10));
    }

    #[test]
    fn dfm_rank_errors() {
        let x = gaussian(50, 4, 1);
        assert!(matches!(dfm_fit(&x, 0, &EmConfig::default()), Err(Error::Rank(_))));
        assert!(matches!(dfm_fit(&x, 5, &EmConfig::default()), Err(Error::Rank(_))));
        assert!(matches!(dfm_fit(&gaussian(15, 4, 1), 2, &EmConfig::default()), Err(Error::Length(_))));
    }

    #[test]
    fn single_observation_filter_equals_smoother() {
        let x = gaussian(80, 6, 21);
        let m = dfm_fit(&x, 2, &EmConfig { max_iter: 20, ..EmConfig::default() }).unwrap();
        let one = x.select_rows(0..1);
        let s = dfm_smooth(&m, &one).unwrap();
        let f = dfm_filter(&m, &one).unwrap();
        assert_eq!(s.values, f.values);
        assert!(matches!(dfm_smooth(&m, &gaussian(3, 5, 1)), Err(Error::Shape(_))));
    }

    #[test]
    fn em_is_monotone_with_and_without_ridge() {
        let x = gaussian(120, 8, 4);
        for ridge in [0.0, 1.2] {
            let m = dfm_fit(&x, 2, &EmConfig { max_iter: 60, tol: 0.0, series_length: ridge }).unwrap();
            let h = &m.diagnostics.objective_history;
            assert!(h.len() > 10);
            for w in h.windows(2) {
                assert!(w[1] >= w[0] - 1e-8 * w[0].abs(), "{} -> {}", w[0], w[1]);
            }
            assert!(m.idiosyncratic.iter().all(|&r| r > 0.0));
        }
    }

    #[test]
    fn max_iter_records_warning() {
        let x = gaussian(60, 5, 8);
        let m = dfm_fit(&x, 1, &EmConfig { max_iter: 2, tol: 0.0, series_length: 0.0 }).unwrap();
        assert!(!m.diagnostics.converged);
        assert!(m.warnings().iter().any(|w| w.contains("ConvergenceWarning")));
    }

    #[test]
    fn dfm_artifact_round_trip_is_exact() {
        let x = gaussian(60, 5, 8);
        let m = dfm_fit(&x, 2, &EmConfig { max_iter: 5, ..EmConfig::default() }).unwrap();
        let back: DfmModel<f64> = artifact::from_json(&artifact::to_json(&m).unwrap()).unwrap();
        assert_eq!(m, back);
    }
}
