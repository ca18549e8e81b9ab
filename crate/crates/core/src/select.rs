//! Variable selection: least squares, stepwise search and spike-and-slab ranking.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::Artifact;
use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix, Qr};
use crate::rng::{rng_from_seed, split_index, split_seed};
use crate::scalar::{mean, Real};

pub const INTERCEPT: &str = "(intercept)";

/// Ordinary least squares fit with an intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct OlsModel<T: Real> {
    /// Intercept first, then one coefficient per entry of `names`.
    pub coefficients: Vec<T>,
    pub names: Vec<String>,
    pub residual_variance: T,
    pub r_squared: T,
    pub rss: T,
    pub n_obs: usize,
}

impl<T: Real> Artifact for OlsModel<T> {
    const KIND: &'static str = "ols";
}

impl<T: Real> OlsModel<T> {
    pub fn intercept(&self) -> T {
        self.coefficients[0]
    }

    pub fn slope(&self, name: &str) -> Option<T> {
        self.names.iter().position(|n| n == name).map(|i| self.coefficients[i + 1])
    }

    pub fn predict_row(&self, row: &[T]) -> T {
        self.coefficients[1..]
            .iter()
            .zip(row)
            .fold(self.coefficients[0], |acc, (b, x)| acc + *b * *x)
    }

    /// Predictions for a matrix whose columns are the included regressors in order.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<T>> {
        if x.cols() != self.names.len() {
            return Err(Error::shape(format!(
                "model has {} regressors, matrix has {} columns",
                self.names.len(),
                x.cols()
            )));
        }
        Ok((0..x.rows()).map(|r| self.predict_row(x.row(r))).collect())
    }
}

/// Default regressor names `x1..xp`.
pub fn default_names(p: usize) -> Vec<String> {
    (1..=p).map(|i| format!("x{i}")).collect()
}

fn with_intercept<T: Real>(x: &Matrix<T>, cols: &[usize]) -> Matrix<T> {
    Matrix::from_fn(x.rows(), cols.len() + 1, |r, c| if c == 0 { T::one() } else { x[(r, cols[c - 1])] })
}

fn rank_tolerance<T: Real>(rows: usize) -> T {
    T::epsilon() * T::of_usize(rows.max(1)) * T::of(100.0)
}

/// Names of the design columns that make column `k` linearly dependent.
fn collinear_with<T: Real>(z: &Matrix<T>, k: usize, retained: &[usize], names: &[String]) -> Vec<String> {
    let zk = z.column(k);
    let zk_norm = crate::linalg::norm(&zk);
    let mut out = Vec::new();
    if zk_norm > T::zero() && !retained.is_empty() {
        let basis = z.select_columns(retained);
        if let Ok(qr) = Qr::new(&basis) {
            let c = qr.solve_upper(&qr.qt_mul(&zk), retained.len());
            for (ci, &j) in c.iter().zip(retained) {
                if ci.abs() * qr.column_norm(retained.iter().position(|&r| r == j).unwrap()) > T::of(1e-6) * zk_norm {
                    out.push(names[j].clone());
                }
            }
        }
    }
    out.push(names[k].clone());
    out
}

/// Least squares of `y` on `[1, x]` through a Householder QR factorization.
///
/// Rank deficiency is reported as [`Error::Singular`] naming the columns
/// involved (the intercept appears as `(intercept)`).
pub fn ols_fit_named<T: Real>(x: &Matrix<T>, y: &[T], names: &[String]) -> Result<OlsModel<T>> {
    let (n, p) = x.shape();
    if y.len() != n {
        return Err(Error::shape(format!("{n} rows but {} targets", y.len())));
    }
    if names.len() != p {
        return Err(Error::shape(format!("{p} columns but {} names", names.len())));
    }
    if n <= p + 1 {
        return Err(Error::Length(format!("need more than {} observations, got {n}", p + 1)));
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite value in regression data"));
    }
    let cols: Vec<usize> = (0..p).collect();
    let z = with_intercept(x, &cols);
    let qr = Qr::new(&z)?;
    let tol = rank_tolerance::<T>(n);
    let mut design_names = vec![INTERCEPT.to_string()];
    design_names.extend(names.iter().cloned());
    let mut retained = Vec::new();
    for k in 0..=p {
        let scale = qr.column_norm(k);
        if scale == T::zero() || qr.r_diag(k).abs() <= tol * scale {
            let columns = collinear_with(&z, k, &retained, &design_names);
            return Err(Error::Singular { columns });
        }
        retained.push(k);
    }
    let qty = qr.qt_mul(y);
    let coefficients = qr.solve_upper(&qty, p + 1);
    let rss: T = (0..n)
        .map(|r| {
            let fit = coefficients[1..]
                .iter()
                .zip(x.row(r))
                .fold(coefficients[0], |a, (b, v)| a + *b * *v);
            (y[r] - fit) * (y[r] - fit)
        })
        .sum();
    let ybar = mean(y);
    let tss: T = y.iter().map(|&v| (v - ybar) * (v - ybar)).sum();
    let r_squared = if tss > T::zero() { T::one() - rss / tss } else { T::one() };
    Ok(OlsModel {
        coefficients,
        names: names.to_vec(),
        residual_variance: rss / T::of_usize(n - p - 1),
        r_squared,
        rss,
        n_obs: n,
    })
}

/// [`ols_fit_named`] with default names `x1..xp`.
pub fn ols_fit<T: Real>(x: &Matrix<T>, y: &[T]) -> Result<OlsModel<T>> {
    ols_fit_named(x, y, &default_names(x.cols()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    #[default]
    Forward,
    Backward,
    Bidirectional,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Criterion {
    Aic,
    #[default]
    Bic,
    /// Mean squared error over contiguous held-out blocks.
    MseCv,
}

/// Number of contiguous blocks used by [`Criterion::MseCv`].
pub const CV_FOLDS: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Add,
    Remove,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct Step<T: Real> {
    pub action: Action,
    pub variable: String,
    /// Criterion value after the step.
    pub criterion: T,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct SelectionTrace<T: Real> {
    pub direction: Direction,
    pub criterion: Criterion,
    /// Variables included before the first step.
    pub initial: Vec<String>,
    pub initial_criterion: T,
    pub steps: Vec<Step<T>>,
    #[serde(rename = "final")]
    pub final_model: OlsModel<T>,
}

impl<T: Real> Artifact for SelectionTrace<T> {
    const KIND: &'static str = "selection-trace";
}

impl<T: Real> SelectionTrace<T> {
    pub fn selected(&self) -> &[String] {
        &self.final_model.names
    }

    /// Applies the recorded steps to the initial set and refits.
    pub fn replay(&self, x: &Matrix<T>, y: &[T], names: &[String]) -> Result<OlsModel<T>> {
        let index = |v: &str| {
            names
                .iter()
                .position(|n| n == v)
                .ok_or_else(|| Error::Config(format!("unknown variable '{v}' in trace")))
        };
        let mut set = self.initial.iter().map(|v| index(v)).collect::<Result<Vec<_>>>()?;
        for step in &self.steps {
            let j = index(&step.variable)?;
            match step.action {
                Action::Add => set.push(j),
                Action::Remove => set.retain(|&c| c != j),
            }
        }
        set.sort_unstable();
        fit_subset(x, y, names, &set)
    }

    /// Human-readable step table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,action,variable,criterion\n");
        out.push_str(&format!("0,start,{},{}\n", self.initial.join(" "), self.initial_criterion));
        for (i, s) in self.steps.iter().enumerate() {
            let action = match s.action {
                Action::Add => "add",
                Action::Remove => "remove",
            };
            out.push_str(&format!("{},{action},{},{}\n", i + 1, s.variable, s.criterion));
        }
        out
    }
}

fn fit_subset<T: Real>(x: &Matrix<T>, y: &[T], names: &[String], set: &[usize]) -> Result<OlsModel<T>> {
    let sub_names: Vec<String> = set.iter().map(|&j| names[j].clone()).collect();
    ols_fit_named(&x.select_columns(set), y, &sub_names)
}

/// Contiguous near-equal blocks; earlier blocks take the remainder.
pub(crate) fn contiguous_blocks(n: usize, k: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn cv_mse<T: Real>(x: &Matrix<T>, y: &[T], set: &[usize]) -> T {
    let n = y.len();
    let sub = x.select_columns(set);
    let names = default_names(set.len());
    let mut total = T::zero();
    for block in contiguous_blocks(n, CV_FOLDS) {
        let keep: Vec<usize> = (0..n).filter(|r| !block.contains(r)).collect();
        let xt = sub.select_row_indices(&keep);
        let yt: Vec<T> = keep.iter().map(|&r| y[r]).collect();
        let Ok(model) = ols_fit_named(&xt, &yt, &names) else {
            return T::infinity();
        };
        for r in block {
            let e = y[r] - model.predict_row(sub.row(r));
            total = total + e * e;
        }
    }
    total / T::of_usize(n)
}

fn score<T: Real>(x: &Matrix<T>, y: &[T], names: &[String], set: &[usize], criterion: Criterion) -> Option<T> {
    let n = T::of_usize(y.len());
    let k = T::of_usize(set.len() + 1);
    match criterion {
        Criterion::MseCv => {
            fit_subset(x, y, names, set).ok()?;
            Some(cv_mse(x, y, set))
        }
        Criterion::Aic | Criterion::Bic => {
            let model = fit_subset(x, y, names, set).ok()?;
            let rss = model.rss.max(T::min_positive_value());
            let penalty = if criterion == Criterion::Aic { T::of(2.0) } else { n.ln() };
            Some(n * (rss / n).ln() + penalty * k)
        }
    }
}

/// Greedy stepwise search; every step strictly improves the criterion.
///
/// Forward and bidirectional searches start from the intercept-only model,
/// backward from the full model. Among equally good moves the lowest column
/// index wins. Candidate subsets that are rank deficient are skipped.
pub fn stepwise_select<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    names: &[String],
    direction: Direction,
    criterion: Criterion,
) -> Result<SelectionTrace<T>> {
    let (n, p) = x.shape();
    if p == 0 {
        return Err(Error::shape("stepwise selection needs at least one candidate"));
    }
    if n <= 3 {
        return Err(Error::Length(format!("need more than 3 observations, got {n}")));
    }
    if names.len() != p || y.len() != n {
        return Err(Error::shape("names, columns and targets disagree"));
    }
    let mut set: Vec<usize> = match direction {
        Direction::Backward => (0..p).collect(),
        _ => Vec::new(),
    };
    // Full model errors (e.g. singular) propagate; intercept-only always fits.
    fit_subset(x, y, names, &set)?;
    let initial: Vec<String> = set.iter().map(|&j| names[j].clone()).collect();
    let initial_criterion = score(x, y, names, &set, criterion).unwrap_or(T::infinity());
    let mut current = initial_criterion;
    let mut steps = Vec::new();
    loop {
        let mut best: Option<(usize, T)> = None;
        for j in 0..p {
            let included = set.contains(&j);
            let allowed = match direction {
                Direction::Forward => !included,
                Direction::Backward => included,
                Direction::Bidirectional => true,
            };
            if !allowed || (!included && set.len() + 2 >= n) {
                continue;
            }
            let mut cand = set.clone();
            if included {
                cand.retain(|&c| c != j);
            } else {
                cand.push(j);
                cand.sort_unstable();
            }
            if let Some(v) = score(x, y, names, &cand, criterion) {
                if v < current && best.is_none_or(|(_, b)| v < b) {
                    best = Some((j, v));
                }
            }
        }
        let Some((j, v)) = best else { break };
        let action = if set.contains(&j) {
            set.retain(|&c| c != j);
            Action::Remove
        } else {
            set.push(j);
            set.sort_unstable();
            Action::Add
        };
        steps.push(Step {
            action,
            variable: names[j].clone(),
            criterion: v,
        });
        current = v;
    }
    let final_model = fit_subset(x, y, names, &set)?;
    Ok(SelectionTrace {
        direction,
        criterion,
        initial,
        initial_criterion,
        steps,
        final_model,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpikeSlabConfig {
    /// Retained draws per chain.
    pub draws: usize,
    pub burn_in: usize,
    /// Prior inclusion probability; `None` means `1/p`.
    pub prior_inclusion: Option<f64>,
    /// Slab variance in units of σ² on standardized regressors.
    pub slab_variance: f64,
    pub chains: usize,
}

impl Default for SpikeSlabConfig {
    fn default() -> Self {
        SpikeSlabConfig {
            draws: 2000,
            burn_in: 500,
            prior_inclusion: None,
            slab_variance: 1.0,
            chains: 4,
        }
    }
}

pub const MIN_DRAWS: usize = 1000;
pub const RHAT_LIMIT: f64 = 1.2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InclusionRanking {
    pub names: Vec<String>,
    /// Posterior inclusion frequency per variable, in column order.
    pub probabilities: Vec<f64>,
    /// Total retained draws across chains.
    pub draws: usize,
    pub seed: u64,
    pub warnings: Vec<String>,
}

impl Artifact for InclusionRanking {
    const KIND: &'static str = "inclusion-ranking";
}

impl InclusionRanking {
    /// Variables by decreasing inclusion; ties keep column order.
    pub fn ranked(&self) -> Vec<(String, f64)> {
        let mut idx: Vec<usize> = (0..self.names.len()).collect();
        idx.sort_by(|&a, &b| self.probabilities[b].total_cmp(&self.probabilities[a]));
        idx.into_iter().map(|i| (self.names[i].clone(), self.probabilities[i])).collect()
    }

    pub fn probability(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.probabilities[i])
    }

    pub fn selected(&self, threshold: f64) -> Vec<String> {
        self.ranked().into_iter().filter(|(_, p)| *p > threshold).map(|(n, _)| n).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,variable,inclusion\n");
        for (i, (n, p)) in self.ranked().iter().enumerate() {
            out.push_str(&format!("{},{n},{p}\n", i + 1));
        }
        out
    }
}

/// Sufficient statistics of the standardized regression.
struct Gram {
    xtx: Vec<Vec<f64>>,
    xty: Vec<f64>,
    yty: f64,
    n: usize,
}

impl Gram {
    /// Posterior pieces for the included set: Cholesky of `X'X + I/v` and the fitted quadratic form.
    fn posterior(&self, set: &[usize], v: f64) -> Option<(Cholesky<f64>, Vec<f64>, f64)> {
        let k = set.len();
        let a = Matrix::from_fn(k, k, |i, j| {
            self.xtx[set[i]][set[j]] + if i == j { 1.0 / v } else { 0.0 }
        });
        let chol = Cholesky::new(&a).ok()?;
        let b: Vec<f64> = set.iter().map(|&j| self.xty[j]).collect();
        let mean = chol.solve_vec(&b);
        let fit: f64 = b.iter().zip(&mean).map(|(u, w)| u * w).sum();
        Some((chol, mean, fit))
    }

    /// Log marginal likelihood up to a constant (β and σ² integrated out).
    fn log_marginal(&self, set: &[usize], v: f64) -> f64 {
        if set.is_empty() {
            return -0.5 * (self.n as f64 - 1.0) * self.yty.ln();
        }
        let Some((chol, _, fit)) = self.posterior(set, v) else {
            return f64::NEG_INFINITY;
        };
        let s = (self.yty - fit).max(1e-300);
        -0.5 * set.len() as f64 * v.ln() - 0.5 * chol.log_det() - 0.5 * (self.n as f64 - 1.0) * s.ln()
    }
}

/// Split-R̂ over equal-length chains of one scalar draw.
fn split_rhat(chains: &[Vec<f64>]) -> Option<f64> {
    let half = chains.first()?.len() / 2;
    if half < 2 {
        return None;
    }
    let seqs: Vec<&[f64]> = chains.iter().flat_map(|c| [&c[..half], &c[half..2 * half]]).collect();
    let m = seqs.len() as f64;
    let n = half as f64;
    let means: Vec<f64> = seqs.iter().map(|s| s.iter().sum::<f64>() / n).collect();
    let grand = means.iter().sum::<f64>() / m;
    let b = n / (m - 1.0) * means.iter().map(|x| (x - grand).powi(2)).sum::<f64>();
    let w = seqs
        .iter()
        .zip(&means)
        .map(|(s, mu)| s.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / (n - 1.0))
        .sum::<f64>()
        / m;
    if w <= 0.0 {
        return None;
    }
    Some((((n - 1.0) / n * w + b / n) / w).sqrt())
}

struct ChainOutput {
    inclusion_counts: Vec<usize>,
    /// Coefficient draws per variable (zero when excluded).
    coefficients: Vec<Vec<f64>>,
}

fn run_chain(gram: &Gram, cfg: &SpikeSlabConfig, prior: f64, seed: u64) -> ChainOutput {
    let p = gram.xty.len();
    let mut rng = rng_from_seed(seed);
    let prior_odds = (prior / (1.0 - prior)).ln();
    let mut gamma: Vec<bool> = (0..p).map(|_| rng.random_bool(0.5)).collect();
    if prior <= 0.0 {
        gamma.iter_mut().for_each(|g| *g = false);
    } else if prior >= 1.0 {
        gamma.iter_mut().for_each(|g| *g = true);
    }
    let set_of = |g: &[bool]| -> Vec<usize> { (0..p).filter(|&j| g[j]).collect() };
    let mut out = ChainOutput {
        inclusion_counts: vec![0; p],
        coefficients: vec![Vec::with_capacity(cfg.draws); p],
    };
    let shape = 0.5 * (gram.n as f64 - 1.0);
    for sweep in 0..cfg.burn_in + cfg.draws {
        if prior > 0.0 && prior < 1.0 {
            for j in 0..p {
                gamma[j] = true;
                let with = gram.log_marginal(&set_of(&gamma), cfg.slab_variance);
                gamma[j] = false;
                let without = gram.log_marginal(&set_of(&gamma), cfg.slab_variance);
                let log_odds = with - without + prior_odds;
                let prob = if log_odds > 0.0 {
                    1.0 / (1.0 + (-log_odds).exp())
                } else {
                    let e = log_odds.exp();
                    e / (1.0 + e)
                };
                gamma[j] = rng.random::<f64>() < prob;
            }
        }
        if sweep < cfg.burn_in {
            continue;
        }
        let set = set_of(&gamma);
        let mut beta = vec![0.0; p];
        if let Some((chol, mean, fit)) = gram.posterior(&set, cfg.slab_variance) {
            let s = (gram.yty - fit).max(1e-300);
            let precision: f64 = Gamma::new(shape, 2.0 / s).map(|g| g.sample(&mut rng)).unwrap_or(1.0 / s);
            let sigma = (1.0 / precision).sqrt();
            // β = mean + σ L⁻ᵀ z has covariance σ² (LLᵀ)⁻¹.
            let z: Vec<f64> = (0..set.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let l = chol.lower();
            let mut u = vec![0.0; set.len()];
            for i in (0..set.len()).rev() {
                let mut acc = z[i];
                for k in i + 1..set.len() {
                    acc -= l[(k, i)] * u[k];
                }
                u[i] = acc / l[(i, i)];
            }
            for (t, &j) in set.iter().enumerate() {
                beta[j] = mean[t] + sigma * u[t];
            }
        }
        for j in 0..p {
            if gamma[j] {
                out.inclusion_counts[j] += 1;
            }
            out.coefficients[j].push(beta[j]);
        }
    }
    out
}

/// Posterior inclusion frequencies from a collapsed Gibbs sampler over a
/// point-mass spike and conjugate normal slab.
///
/// Regressors are standardized and the target centered; the slab is
/// `β_j ~ N(0, σ² v)` and `p(σ²) ∝ 1/σ²`. Chains run in parallel on
/// independent sub-seeds of `seed`.
pub fn spike_slab_rank<T: Real>(
    x: &Matrix<T>,
    y: &[T],
    names: &[String],
    config: &SpikeSlabConfig,
    seed: u64,
) -> Result<InclusionRanking> {
    let (n, p) = x.shape();
    if config.draws < MIN_DRAWS {
        return Err(Error::Config(format!("draws must be at least {MIN_DRAWS}, got {}", config.draws)));
    }
    if config.chains == 0 || !(config.slab_variance > 0.0) {
        return Err(Error::Config("chains must be positive and slab_variance > 0".into()));
    }
    if names.len() != p || y.len() != n {
        return Err(Error::shape("names, columns and targets disagree"));
    }
    if n < 3 || p == 0 {
        return Err(Error::Length("spike-and-slab needs at least 3 rows and 1 column".into()));
    }
    let prior = config.prior_inclusion.unwrap_or(1.0 / p as f64);
    if !(0.0..=1.0).contains(&prior) {
        return Err(Error::Config(format!("prior_inclusion must lie in [0, 1], got {prior}")));
    }
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let c: Vec<f64> = x.column(j).iter().map(|v| v.as_f64()).collect();
            let mu = c.iter().sum::<f64>() / n as f64;
            let sd = (c.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
            if sd > 0.0 {
                c.iter().map(|v| (v - mu) / sd).collect()
            } else {
                vec![0.0; n]
            }
        })
        .collect();
    if let Some(j) = cols.iter().position(|c| c.iter().all(|v| *v == 0.0)) {
        return Err(Error::DegenerateSeries {
            name: Some(names[j].clone()),
            reason: "constant regressor".into(),
        });
    }
    let ybar = y.iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let yc: Vec<f64> = y.iter().map(|v| v.as_f64() - ybar).collect();
    let gram = Gram {
        xtx: (0..p)
            .map(|a| (0..p).map(|b| cols[a].iter().zip(&cols[b]).map(|(u, v)| u * v).sum()).collect())
            .collect(),
        xty: cols.iter().map(|c| c.iter().zip(&yc).map(|(u, v)| u * v).sum()).collect(),
        yty: yc.iter().map(|v| v * v).sum(),
        n,
    };
    if gram.yty <= 0.0 {
        return Err(Error::DegenerateSeries {
            name: None,
            reason: "constant target".into(),
        });
    }
    let root = split_seed(seed, "spike-slab");
    let chains: Vec<ChainOutput> = (0..config.chains)
        .into_par_iter()
        .map(|c| run_chain(&gram, config, prior, split_index(root, c as u64)))
        .collect();
    let total = config.draws * config.chains;
    let probabilities = (0..p)
        .map(|j| chains.iter().map(|c| c.inclusion_counts[j]).sum::<usize>() as f64 / total as f64)
        .collect();
    let mut warnings = Vec::new();
    if config.chains > 1 {
        for j in 0..p {
            let draws: Vec<Vec<f64>> = chains.iter().map(|c| c.coefficients[j].clone()).collect();
            if let Some(r) = split_rhat(&draws) {
                if r > RHAT_LIMIT {
                    warnings.push(format!(
                        "ConvergenceWarning: split-R-hat {r:.3} > {RHAT_LIMIT} for '{}'",
                        names[j]
                    ));
                }
            }
        }
    }
    Ok(InclusionRanking {
        names: names.to_vec(),
        probabilities,
        draws: total,
        seed,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x = Matrix::from_vec(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let y: Vec<f64> = (0..5).map(|i| 2.0 * i as f64 + 1.0).collect();
        let m = ols_fit(&x, &y).unwrap();
        assert!((m.coefficients[0] - 1.0).abs() < 1e-12);
        assert!((m.coefficients[1] - 2.0).abs() < 1e-12);
        assert!((m.r_squared - 1.0).abs() < 1e-10);
    }

    #[test]
    fn orthogonal_target_has_zero_slope() {
        let x = Matrix::<f64>::from_vec(4, 1, vec![1.0, -1.0, 1.0, -1.0]).unwrap();
        let y = [1.0, 1.0, -1.0, -1.0];
        let m = ols_fit(&x, &y).unwrap();
        assert!(m.coefficients[1].abs() < 1e-10);
    }

    #[test]
    fn duplicated_column_names_both() {
        let x = Matrix::from_fn(10, 3, |r, c| if c == 1 { ((r * r) % 7) as f64 } else { r as f64 });
        let names: Vec<String> = ["a", "b", "a_copy"].iter().map(|s| s.to_string()).collect();
        match ols_fit_named(&x, &[0.0; 10], &names) {
            Err(Error::Singular { columns }) => assert_eq!(columns, vec!["a", "a_copy"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_column_is_collinear_with_intercept() {
        let x = Matrix::from_fn(8, 2, |r, c| if c == 0 { r as f64 } else { 3.0 });
        match ols_fit(&x, &[1.0; 8]) {
            Err(Error::Singular { columns }) => assert_eq!(columns, vec![INTERCEPT, "x2"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn blocks_tile() {
        let b = contiguous_blocks(11, 3);
        assert_eq!(b, vec![0..4, 4..8, 8..11]);
    }

    #[test]
    fn rhat_of_identical_chains_is_near_one() {
        let c: Vec<f64> = (0..200).map(|i| ((i * 37) % 11) as f64).collect();
        let r = split_rhat(&[c.clone(), c]).unwrap();
        assert!(r < 1.05);
        let drift: Vec<f64> = (0..200).map(|i| i as f64).collect();
        assert!(split_rhat(&[drift.clone(), drift]).unwrap() > 1.2);
    }
}
