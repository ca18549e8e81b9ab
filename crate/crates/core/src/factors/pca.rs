use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::factors::FactorSeries;
use crate::linalg::{right_singular, Matrix};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PcaBasis {
    /// Eigenvectors of the correlation matrix (columns scaled to unit variance).
    #[default]
    Correlation,
    /// Eigenvectors of the raw covariance matrix.
    Covariance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct PcaModel<T: Real> {
    /// N×k, columns ordered by descending eigenvalue.
    pub loadings: Matrix<T>,
    pub eigenvalues: Vec<T>,
    pub means: Vec<T>,
    /// Column scales applied before projection (all ones for the covariance basis).
    pub scales: Vec<T>,
    /// Trace of the covariance (or correlation) matrix.
    pub total_variance: T,
    pub basis: PcaBasis,
    pub k: usize,
}

impl<T: Real> Artifact for PcaModel<T> {
    const KIND: &'static str = "pca";
}

impl<T: Real> PcaModel<T> {
    /// Share of total variance carried by each retained component.
    pub fn explained_variance_ratio(&self) -> Vec<T> {
        if self.total_variance <= T::zero() {
            return vec![T::zero(); self.k];
        }
        self.eigenvalues.iter().map(|&l| l / self.total_variance).collect()
    }

    pub fn width(&self) -> usize {
        self.means.len()
    }
}

/// Fits a `k`-component PCA on the correlation basis.
pub fn pca_fit<T: Real>(features: &Matrix<T>, k: usize) -> Result<PcaModel<T>> {
    pca_fit_with(features, k, PcaBasis::Correlation)
}

pub fn pca_fit_with<T: Real>(features: &Matrix<T>, k: usize, basis: PcaBasis) -> Result<PcaModel<T>> {
    let (t, n) = features.shape();
    if k == 0 || t < 2 || k > (t - 1).min(n) {
        return Err(Error::Rank(format!(
            "component count {k} outside 1..={} for a {t}x{n} panel",
            t.saturating_sub(1).min(n)
        )));
    }
    if !features.is_finite() {
        return Err(Error::numeric("non-finite feature value"));
    }
    let means: Vec<T> = (0..n).map(|c| crate::scalar::mean(&features.column(c))).collect();
    let scales: Vec<T> = match basis {
        PcaBasis::Covariance => vec![T::one(); n],
        PcaBasis::Correlation => (0..n)
            .map(|c| {
                let sd = crate::scalar::sample_variance(&features.column(c)).sqrt();
                if sd > T::zero() { sd } else { T::one() }
            })
            .collect(),
    };
    let z = standardize(features, &means, &scales);
    // Right singular vectors of the centered data are the covariance eigenvectors.
    let (sigma, v) = right_singular(&z)?;
    let denom = T::of_usize(t - 1);
    let all: Vec<T> = sigma.iter().map(|&s| s * s / denom).collect();
    let total_variance = all.iter().copied().sum();
    let mut loadings = v.select_columns(&(0..k).collect::<Vec<_>>());
    for j in 0..k {
        let col = loadings.column(j);
        let mut pivot = 0;
        for i in 1..n {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        if col[pivot] < T::zero() {
            let flipped: Vec<T> = col.iter().map(|&x| -x).collect();
            loadings.set_column(j, &flipped);
        }
    }
    Ok(PcaModel {
        loadings,
        eigenvalues: all[..k].to_vec(),
        means,
        scales,
        total_variance,
        basis,
        k,
    })
}

fn standardize<T: Real>(x: &Matrix<T>, means: &[T], scales: &[T]) -> Matrix<T> {
    Matrix::from_fn(x.rows(), x.cols(), |r, c| (x[(r, c)] - means[c]) / scales[c])
}

/// Scores `Z = ((X - means) / scales) W`.
pub fn pca_transform<T: Real>(model: &PcaModel<T>, features: &Matrix<T>) -> Result<FactorSeries<T>> {
    if features.cols() != model.width() {
        return Err(Error::shape(format!(
            "model expects {} features, got {}",
            model.width(),
            features.cols()
        )));
    }
    let z = standardize(features, &model.means, &model.scales);
    Ok(FactorSeries {
        values: z.matmul(&model.loadings)?,
        span: None,
    })
}
