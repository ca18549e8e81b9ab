use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::factors::pca::{pca_fit_with, PcaBasis};
use crate::factors::FactorSeries;
use crate::linalg::{spectral_radius, Cholesky, Matrix};
use crate::scalar::Real;

/// EM settings.
///
/// `series_length` is a ridge weight on the loading and transition
/// regressions of the M-step (0 disables it). It enters as a conjugate
/// Gaussian prior, so EM still ascends the penalized likelihood.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop when the relative objective change falls below this.
    pub tol: f64,
    pub series_length: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            max_iter: 500,
            tol: 1e-6,
            series_length: 0.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DfmDiagnostics<T: Real> {
    pub iterations: usize,
    pub converged: bool,
    /// Gaussian log-likelihood at the returned parameters.
    pub loglik: T,
    /// One entry per E-step, starting from the initialization.
    pub loglik_history: Vec<T>,
    /// Log-likelihood plus log-prior; equals `loglik_history` when the ridge is off.
    pub objective_history: Vec<T>,
    pub warnings: Vec<String>,
}

/// `x_t = Λ f_t + ε_t`, `f_t = A f_{t-1} + u_t`, `ε ~ N(0, diag R)`, `u ~ N(0, Q)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct DfmModel<T: Real> {
    /// N×r.
    pub loadings: Matrix<T>,
    /// r×r.
    pub transition: Matrix<T>,
    /// r×r.
    pub factor_noise: Matrix<T>,
    /// Idiosyncratic variances, length N.
    pub idiosyncratic: Vec<T>,
    pub means: Vec<T>,
    /// Covariance of `f_1` (zero mean), fixed at initialization.
    pub initial_covariance: Matrix<T>,
    pub r: usize,
    pub series_length: f64,
    pub diagnostics: DfmDiagnostics<T>,
}

impl<T: Real> Artifact for DfmModel<T> {
    const KIND: &'static str = "dfm";
}

impl<T: Real> DfmModel<T> {
    pub fn width(&self) -> usize {
        self.means.len()
    }

    pub fn warnings(&self) -> &[String] {
        &self.diagnostics.warnings
    }

    /// Builds a model from known parameters, with `f_1` drawn from the stationary distribution.
    pub fn from_parameters(
        loadings: Matrix<T>,
        transition: Matrix<T>,
        factor_noise: Matrix<T>,
        idiosyncratic: Vec<T>,
        means: Vec<T>,
    ) -> Result<Self> {
        let (n, r) = loadings.shape();
        if transition.shape() != (r, r) || factor_noise.shape() != (r, r) || idiosyncratic.len() != n || means.len() != n {
            return Err(Error::shape("inconsistent DFM parameter shapes"));
        }
        if idiosyncratic.iter().any(|&v| !(v > T::zero())) {
            return Err(Error::numeric("idiosyncratic variances must be positive"));
        }
        let initial_covariance = stationary_covariance(&transition, &factor_noise)?;
        Ok(DfmModel {
            loadings,
            transition,
            factor_noise,
            idiosyncratic,
            means,
            initial_covariance,
            r,
            series_length: 0.0,
            diagnostics: DfmDiagnostics::default(),
        })
    }
}

/// Solves `P = A P A' + Q` by the doubling iteration.
fn stationary_covariance<T: Real>(a: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    if spectral_radius(a) >= T::one() {
        return Err(Error::numeric("factor transition is not stationary"));
    }
    let mut p = q.clone();
    let mut ak = a.clone();
    for _ in 0..64 {
        let step = ak.matmul(&p)?.matmul(&ak.transpose())?;
        p = p.add(&step)?;
        ak = ak.matmul(&ak)?;
        if step.max_abs() <= T::epsilon() * p.max_abs() {
            break;
        }
    }
    p.symmetrize();
    Ok(p)
}

struct Smoothed<T: Real> {
    means: Matrix<T>,
    covs: Vec<Matrix<T>>,
    /// `lag_covs[t] = Cov(f_t, f_{t-1} | all data)` for `t >= 1`; entry 0 unused.
    lag_covs: Vec<Matrix<T>>,
    loglik: T,
}

struct Params<'a, T: Real> {
    lambda: &'a Matrix<T>,
    a: &'a Matrix<T>,
    q: &'a Matrix<T>,
    r: &'a [T],
    p0: &'a Matrix<T>,
}

fn chol<T: Real>(m: &Matrix<T>, what: &str) -> Result<Cholesky<T>> {
    Cholesky::new(m).map_err(|_| Error::numeric(format!("{what} is not positive definite")))
}

/// Kalman filter in information form (cheap when N ≫ r) and RTS smoother.
fn kalman_smooth<T: Real>(p: &Params<'_, T>, xc: &Matrix<T>) -> Result<Smoothed<T>> {
    let (t_len, n) = xc.shape();
    let r = p.a.rows();
    // Λ' R^{-1}, r×N
    let lt_rinv = Matrix::from_fn(r, n, |i, j| p.lambda[(j, i)] / p.r[j]);
    let h = lt_rinv.matmul(p.lambda)?;
    let log_det_r: T = p.r.iter().map(|v| v.ln()).sum();
    let two_pi = T::of(2.0 * std::f64::consts::PI);
    let half = T::of(0.5);

    let mut f_pred: Vec<Vec<T>> = Vec::with_capacity(t_len);
    let mut p_pred: Vec<Matrix<T>> = Vec::with_capacity(t_len);
    let mut p_pred_chol: Vec<Cholesky<T>> = Vec::with_capacity(t_len);
    let mut f_filt: Vec<Vec<T>> = Vec::with_capacity(t_len);
    let mut p_filt: Vec<Matrix<T>> = Vec::with_capacity(t_len);
    let mut loglik = T::zero();
    let at = p.a.transpose();
    for t in 0..t_len {
        let (fp, mut pp) = if t == 0 {
            (vec![T::zero(); r], p.p0.clone())
        } else {
            let fp = p.a.matvec(&f_filt[t - 1])?;
            let pp = p.a.matmul(&p_filt[t - 1])?.matmul(&at)?.add(p.q)?;
            (fp, pp)
        };
        pp.symmetrize();
        let pp_chol = chol(&pp, "predicted factor covariance")?;
        let mut info = pp_chol.inverse().add(&h)?;
        info.symmetrize();
        let info_chol = chol(&info, "filter information matrix")?;
        let mut pf = info_chol.inverse();
        pf.symmetrize();
        let x = xc.row(t);
        let fit = p.lambda.matvec(&fp)?;
        let e: Vec<T> = x.iter().zip(&fit).map(|(&a, &b)| a - b).collect();
        let b = lt_rinv.matvec(&e)?;
        let gain = pf.matvec(&b)?;
        let ff: Vec<T> = fp.iter().zip(&gain).map(|(&a, &g)| a + g).collect();
        let quad: T = e.iter().zip(p.r).map(|(&v, &s)| v * v / s).sum::<T>()
            - b.iter().zip(&gain).map(|(&u, &v)| u * v).sum::<T>();
        let log_det = log_det_r + pp_chol.log_det() + info_chol.log_det();
        loglik = loglik - half * (T::of_usize(n) * two_pi.ln() + log_det + quad);
        f_pred.push(fp);
        p_pred.push(pp);
        p_pred_chol.push(pp_chol);
        f_filt.push(ff);
        p_filt.push(pf);
    }
    if !loglik.is_finite() {
        return Err(Error::numeric("non-finite log-likelihood"));
    }

    let mut means = Matrix::zeros(t_len, r);
    let mut covs = vec![Matrix::zeros(r, r); t_len];
    let mut lag_covs = vec![Matrix::zeros(r, r); t_len];
    let last = t_len - 1;
    means.row_mut(last).copy_from_slice(&f_filt[last]);
    covs[last] = p_filt[last].clone();
    for t in (0..last).rev() {
        // J = P_{t|t} A' P_{t+1|t}^{-1}
        let j = p_pred_chol[t + 1].solve(&p.a.matmul(&p_filt[t])?).transpose();
        let ahead: Vec<T> = means
            .row(t + 1)
            .iter()
            .zip(&f_pred[t + 1])
            .map(|(&s, &f)| s - f)
            .collect();
        let corr = j.matvec(&ahead)?;
        for (i, c) in corr.iter().enumerate() {
            means[(t, i)] = f_filt[t][i] + *c;
        }
        let dp = covs[t + 1].sub(&p_pred[t + 1])?;
        let mut ps = p_filt[t].add(&j.matmul(&dp)?.matmul(&j.transpose())?)?;
        ps.symmetrize();
        lag_covs[t + 1] = covs[t + 1].matmul(&j.transpose())?;
        covs[t] = ps;
    }
    Ok(Smoothed {
        means,
        covs,
        lag_covs,
        loglik,
    })
}

fn center<T: Real>(x: &Matrix<T>, means: &[T]) -> Matrix<T> {
    Matrix::from_fn(x.rows(), x.cols(), |r, c| x[(r, c)] - means[c])
}

fn outer_add<T: Real>(acc: &mut Matrix<T>, a: &[T], b: &[T]) {
    for i in 0..a.len() {
        for j in 0..b.len() {
            acc[(i, j)] = acc[(i, j)] + a[i] * b[j];
        }
    }
}

fn log_prior<T: Real>(lambda: &Matrix<T>, r_diag: &[T], a: &Matrix<T>, q: &Matrix<T>, ridge: T) -> Result<T> {
    if ridge <= T::zero() {
        return Ok(T::zero());
    }
    let k = T::of_usize(a.rows());
    let ln2pi = T::of(2.0 * std::f64::consts::PI).ln();
    let half = T::of(0.5);
    let mut lp = T::zero();
    // Λ_i ~ N(0, R_i/ridge · I)
    for (i, &ri) in r_diag.iter().enumerate() {
        let ss: T = lambda.row(i).iter().map(|&v| v * v).sum();
        lp = lp - half * k * (ln2pi + (ri / ridge).ln()) - half * ridge * ss / ri;
    }
    // vec(A) ~ N(0, I/ridge ⊗ Q)
    let qc = chol(q, "factor noise covariance")?;
    let quad = qc.solve(&a.matmul(&a.transpose())?).trace();
    lp = lp - half * k * k * ln2pi - half * k * qc.log_det() + half * k * k * ridge.ln() - half * ridge * quad;
    Ok(lp)
}

/// Fits an `r`-factor DFM by EM, initialized from principal components.
pub fn dfm_fit<T: Real>(features: &Matrix<T>, r: usize, config: &EmConfig) -> Result<DfmModel<T>> {
    let (t_len, n) = features.shape();
    if r == 0 || r > n {
        return Err(Error::Rank(format!("factor count {r} outside 1..={n}")));
    }
    if t_len < 10 * r {
        return Err(Error::Length(format!(
            "{t_len} observations is fewer than 10 per factor ({r} factors)"
        )));
    }
    if !features.is_finite() {
        return Err(Error::numeric("non-finite feature value"));
    }
    let ridge = T::of(config.series_length.max(0.0));
    let prior_on = ridge > T::zero();
    let means: Vec<T> = (0..n).map(|c| crate::scalar::mean(&features.column(c))).collect();
    let xc = center(features, &means);
    let col_var: Vec<T> = (0..n)
        .map(|c| xc.column(c).iter().map(|&v| v * v).sum::<T>() / T::of_usize(t_len))
        .collect();
    let mean_var = crate::scalar::mean(&col_var);
    let r_floor = (T::of(1e-8) * mean_var).max(T::min_positive_value().sqrt());

    // Initialization from PCA scores.
    let pca = pca_fit_with(features, r.min(t_len - 1), PcaBasis::Covariance)?;
    let mut lambda = pca.loadings.clone();
    let scores = xc.matmul(&lambda)?;
    let fitted = scores.matmul(&lambda.transpose())?;
    let mut r_diag: Vec<T> = (0..n)
        .map(|c| {
            let rv = (0..t_len)
                .map(|t| {
                    let e = xc[(t, c)] - fitted[(t, c)];
                    e * e
                })
                .sum::<T>()
                / T::of_usize(t_len);
            rv.max(T::of(1e-4) * col_var[c]).max(r_floor)
        })
        .collect();
    let lagged = scores.select_rows(0..t_len - 1);
    let current = scores.select_rows(1..t_len);
    let s00 = lagged.t_matmul(&lagged)?;
    let s10 = current.t_matmul(&lagged)?;
    let mut a = chol(&s00, "initial factor Gram matrix")?.solve(&s10.transpose()).transpose();
    let rho = spectral_radius(&a);
    if rho >= T::of(0.98) {
        a = a.scale(T::of(0.95) / rho);
    }
    let resid = current.sub(&lagged.matmul(&a.transpose())?)?;
    let mut q = resid.t_matmul(&resid)?.scale(T::one() / T::of_usize(t_len - 1));
    q.symmetrize();
    for i in 0..r {
        q[(i, i)] = q[(i, i)].max(T::of(1e-6) * pca.eigenvalues[0].max(T::one()));
    }
    let p0 = stationary_covariance(&a, &q)?;

    let mut diagnostics = DfmDiagnostics::default();
    let mut prev: Option<T> = None;
    let mut iterations = 0;
    loop {
        let sm = kalman_smooth(
            &Params {
                lambda: &lambda,
                a: &a,
                q: &q,
                r: &r_diag,
                p0: &p0,
            },
            &xc,
        )?;
        let objective = sm.loglik + log_prior(&lambda, &r_diag, &a, &q, ridge)?;
        diagnostics.loglik = sm.loglik;
        diagnostics.loglik_history.push(sm.loglik);
        diagnostics.objective_history.push(objective);
        if let Some(p) = prev {
            let change = (objective - p).abs() / p.abs().max(T::one());
            if change < T::of(config.tol) {
                diagnostics.converged = true;
                break;
            }
        }
        if iterations >= config.max_iter {
            break;
        }
        prev = Some(objective);
        iterations += 1;

        // M-step
        let mut s_ff = Matrix::zeros(r, r);
        let mut s_xf = Matrix::zeros(n, r);
        let mut s00 = Matrix::zeros(r, r);
        let mut s10 = Matrix::zeros(r, r);
        let mut s11 = Matrix::zeros(r, r);
        for t in 0..t_len {
            let f = sm.means.row(t);
            outer_add(&mut s_ff, f, f);
            s_ff = s_ff.add(&sm.covs[t])?;
            outer_add(&mut s_xf, xc.row(t), f);
            if t >= 1 {
                let fl = sm.means.row(t - 1);
                outer_add(&mut s00, fl, fl);
                s00 = s00.add(&sm.covs[t - 1])?;
                outer_add(&mut s10, f, fl);
                s10 = s10.add(&sm.lag_covs[t])?;
                outer_add(&mut s11, f, f);
                s11 = s11.add(&sm.covs[t])?;
            }
        }
        let ridge_eye = Matrix::identity(r).scale(ridge);
        let ff_chol = chol(&s_ff.add(&ridge_eye)?, "factor second-moment matrix")?;
        lambda = ff_chol.solve(&s_xf.transpose()).transpose();
        let extra = if prior_on { T::of_usize(r) } else { T::zero() };
        for i in 0..n {
            let sxx: T = xc.column(i).iter().map(|&v| v * v).sum();
            let fit: T = lambda.row(i).iter().zip(s_xf.row(i)).map(|(&l, &s)| l * s).sum();
            r_diag[i] = ((sxx - fit) / (T::of_usize(t_len) + extra)).max(r_floor);
        }
        let s00_chol = chol(&s00.add(&ridge_eye)?, "lagged factor second-moment matrix")?;
        a = s00_chol.solve(&s10.transpose()).transpose();
        q = s11
            .sub(&a.matmul(&s10.transpose())?)?
            .scale(T::one() / (T::of_usize(t_len - 1) + extra));
        q.symmetrize();
    }
    diagnostics.iterations = iterations;
    if !diagnostics.converged {
        diagnostics.warnings.push(format!(
            "ConvergenceWarning: EM stopped at max_iter={} before reaching tol={}",
            config.max_iter, config.tol
        ));
    }
    let rho = spectral_radius(&a);
    if rho >= T::one() {
        a = a.scale(T::of(0.999) / rho);
        diagnostics.warnings.push(format!(
            "transition spectral radius {:.6} shrunk to 0.999 for stationarity",
            rho.as_f64()
        ));
    }
    Ok(DfmModel {
        loadings: lambda,
        transition: a,
        factor_noise: q,
        idiosyncratic: r_diag,
        means,
        initial_covariance: p0,
        r,
        series_length: config.series_length,
        diagnostics,
    })
}

/// Smoothed factor means `E[f_t | x_1..x_T]` for every `t`.
pub fn dfm_smooth<T: Real>(model: &DfmModel<T>, features: &Matrix<T>) -> Result<FactorSeries<T>> {
    if features.cols() != model.width() {
        return Err(Error::shape(format!(
            "model expects {} features, got {}",
            model.width(),
            features.cols()
        )));
    }
    if features.rows() == 0 {
        return Err(Error::Length("no observations to smooth".into()));
    }
    let xc = center(features, &model.means);
    let sm = kalman_smooth(
        &Params {
            lambda: &model.loadings,
            a: &model.transition,
            q: &model.factor_noise,
            r: &model.idiosyncratic,
            p0: &model.initial_covariance,
        },
        &xc,
    )?;
    Ok(FactorSeries {
        values: sm.means,
        span: None,
    })
}

/// Filtered means `E[f_t | x_1..x_t]`; used to check the smoother.
pub fn dfm_filter<T: Real>(model: &DfmModel<T>, features: &Matrix<T>) -> Result<FactorSeries<T>> {
    let mut values = Matrix::zeros(features.rows(), model.r);
    for t in 0..features.rows() {
        let head = features.select_rows(0..t + 1);
        let sm = dfm_smooth(model, &head)?;
        values.row_mut(t).copy_from_slice(sm.values.row(t));
    }
    Ok(FactorSeries { values, span: None })
}

/// Log-likelihood of `features` under `model`.
pub fn dfm_loglik<T: Real>(model: &DfmModel<T>, features: &Matrix<T>) -> Result<T> {
    if features.cols() != model.width() {
        return Err(Error::shape("feature width differs from model"));
    }
    let xc = center(features, &model.means);
    Ok(kalman_smooth(
        &Params {
            lambda: &model.loadings,
            a: &model.transition,
            q: &model.factor_noise,
            r: &model.idiosyncratic,
            p0: &model.initial_covariance,
        },
        &xc,
    )?
    .loglik)
}
