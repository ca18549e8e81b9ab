//! Forecast accuracy: loss metrics, predictive-ability tests, dated fold
//! plans and cross-validated hyperparameter search.

use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};
use crate::factors::{dfm_fit, pca_fit_with, EmConfig, PcaBasis};
use crate::linalg::{Cholesky, Matrix};
use crate::neural::{ann_train_rows, predict_rows, rnn_train_rows, AnnConfig, RnnConfig};
use crate::rng::split_seed;
use crate::scalar::Real;
use crate::select::contiguous_blocks;
use crate::series::{Month, MonthRange};
use crate::transform::AlignedDataset;

fn check_pair<T: Real>(actual: &[T], predicted: &[T]) -> Result<()> {
    if actual.len() != predicted.len() {
        return Err(Error::shape(format!(
            "{} actual values but {} predictions",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Length("no observations".into()));
    }
    Ok(())
}

pub fn mse<T: Real>(actual: &[T], predicted: &[T]) -> Result<T> {
    check_pair(actual, predicted)?;
    let s: T = actual.iter().zip(predicted).map(|(&a, &p)| (a - p) * (a - p)).sum();
    Ok(s / T::of_usize(actual.len()))
}

pub fn rmse<T: Real>(actual: &[T], predicted: &[T]) -> Result<T> {
    Ok(mse(actual, predicted)?.sqrt())
}

/// Per-period forecast losses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct LossSeries<T: Real> {
    pub losses: Vec<T>,
    pub span: Option<MonthRange>,
}

impl<T: Real> LossSeries<T> {
    pub fn new(losses: Vec<T>, span: Option<MonthRange>) -> Result<Self> {
        if let Some(s) = &span {
            if s.len() != losses.len() {
                return Err(Error::shape(format!("span {s} has {} months, {} losses", s.len(), losses.len())));
            }
        }
        Ok(LossSeries { losses, span })
    }

    pub fn squared(actual: &[T], predicted: &[T], span: Option<MonthRange>) -> Result<Self> {
        check_pair(actual, predicted)?;
        Self::new(
            actual.iter().zip(predicted).map(|(&a, &p)| (a - p) * (a - p)).collect(),
            span,
        )
    }

    pub fn absolute(actual: &[T], predicted: &[T], span: Option<MonthRange>) -> Result<Self> {
        check_pair(actual, predicted)?;
        Self::new(actual.iter().zip(predicted).map(|(&a, &p)| (a - p).abs()).collect(), span)
    }

    pub fn len(&self) -> usize {
        self.losses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.losses.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correction {
    #[default]
    None,
    Harvey,
}

/// Alternative hypothesis, stated for the first loss series against the second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Alternative {
    #[default]
    TwoSided,
    /// The first model has smaller expected loss.
    FirstBetter,
    SecondBetter,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub correction: Correction,
    pub alternative: Alternative,
    /// Reference distribution, e.g. `normal`, `t(99)`, `chi2(2)`.
    pub reference: String,
}

fn differential<T: Real>(a: &LossSeries<T>, b: &LossSeries<T>, min: usize) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::shape(format!("loss series lengths {} and {}", a.len(), b.len())));
    }
    if let (Some(sa), Some(sb)) = (&a.span, &b.span) {
        if sa != sb {
            return Err(Error::shape(format!("loss spans differ: {sa} vs {sb}")));
        }
    }
    if a.len() < min {
        return Err(Error::Length(format!("need at least {min} losses, got {}", a.len())));
    }
    let d: Vec<f64> = a.losses.iter().zip(&b.losses).map(|(x, y)| x.as_f64() - y.as_f64()).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite loss"));
    }
    Ok(d)
}

/// Newey–West long-run variance with Bartlett weights up to `lag`.
pub fn newey_west(d: &[f64], lag: usize) -> f64 {
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let gamma = |k: usize| d[k..].iter().zip(d).map(|(x, y)| (x - m) * (y - m)).sum::<f64>() / n;
    let mut v = gamma(0);
    for k in 1..=lag.min(d.len() - 1) {
        v += 2.0 * (1.0 - k as f64 / (lag as f64 + 1.0)) * gamma(k);
    }
    v
}

fn p_value(cdf: impl Fn(f64) -> f64, stat: f64, alternative: Alternative) -> f64 {
    let p = match alternative {
        Alternative::TwoSided => 2.0 * cdf(-stat.abs()),
        // d = loss_a − loss_b is negative when the first model is better.
        Alternative::FirstBetter => cdf(stat),
        Alternative::SecondBetter => 1.0 - cdf(stat),
    };
    p.clamp(0.0, 1.0)
}

/// Diebold–Mariano test with a two-sided alternative.
pub fn dm_test<T: Real>(a: &LossSeries<T>, b: &LossSeries<T>, horizon: usize, correction: Correction) -> Result<TestResult> {
    dm_test_with(a, b, horizon, correction, Alternative::TwoSided)
}

/// Diebold–Mariano test on `d_t = a_t − b_t`.
///
/// The long-run variance is Newey–West with `horizon − 1` lags. The Harvey
/// correction rescales the statistic by `√((T+1−2h+h(h−1)/T)/T)` and uses a
/// Student t reference with `T − 1` degrees of freedom.
pub fn dm_test_with<T: Real>(
    a: &LossSeries<T>,
    b: &LossSeries<T>,
    horizon: usize,
    correction: Correction,
    alternative: Alternative,
) -> Result<TestResult> {
    if horizon == 0 {
        return Err(Error::Config("forecast horizon must be at least 1".into()));
    }
    let d = differential(a, b, 10)?;
    let n = d.len();
    let nf = n as f64;
    let mean = d.iter().sum::<f64>() / nf;
    let lrv = newey_west(&d, horizon - 1);
    if !(lrv > 1e-300) || d.iter().all(|&x| x == d[0]) {
        return Err(Error::DegenerateTest("loss differential has zero variance".into()));
    }
    let mut stat = mean / (lrv / nf).sqrt();
    let (p, reference) = match correction {
        Correction::None => {
            let z = Normal::standard();
            (p_value(|x| z.cdf(x), stat, alternative), "normal".to_string())
        }
        Correction::Harvey => {
            let h = horizon as f64;
            stat *= ((nf + 1.0 - 2.0 * h + h * (h - 1.0) / nf) / nf).sqrt();
            let t = StudentsT::new(0.0, 1.0, nf - 1.0).map_err(|e| Error::numeric(e.to_string()))?;
            (p_value(|x| t.cdf(x), stat, alternative), format!("t({})", n - 1))
        }
    };
    Ok(TestResult {
        statistic: stat,
        p_value: p,
        n,
        correction,
        alternative,
        reference,
    })
}

/// Giacomini–White conditional predictive ability test (one-step).
///
/// Instruments are a constant and `window` lags of the loss differential;
/// the statistic `n·Z̄'Ω⁻¹Z̄` with `Z_t = h_{t−1} d_t` is compared with a
/// chi-square on as many degrees of freedom as instruments. `n` counts the
/// periods with a full set of lags.
pub fn gw_test<T: Real>(a: &LossSeries<T>, b: &LossSeries<T>, window: usize) -> Result<TestResult> {
    let d = differential(a, b, 20 + window)?;
    if d.iter().all(|&x| x == d[0]) {
        return Err(Error::DegenerateTest("identical loss differential".into()));
    }
    let q = window + 1;
    let n = d.len() - window;
    let z: Vec<Vec<f64>> = (window..d.len())
        .map(|t| {
            let mut h = vec![1.0];
            h.extend((1..=window).map(|k| d[t - k]));
            h.iter().map(|v| v * d[t]).collect()
        })
        .collect();
    let nf = n as f64;
    let zbar: Vec<f64> = (0..q).map(|i| z.iter().map(|r| r[i]).sum::<f64>() / nf).collect();
    let omega = Matrix::from_fn(q, q, |i, j| z.iter().map(|r| r[i] * r[j]).sum::<f64>() / nf);
    let chol = Cholesky::new(&omega).map_err(|_| Error::numeric("instrument covariance is singular"))?;
    let sol = chol.solve_vec(&zbar);
    let stat = nf * zbar.iter().zip(&sol).map(|(a, b)| a * b).sum::<f64>();
    if !stat.is_finite() {
        return Err(Error::numeric("non-finite GW statistic"));
    }
    let chi = ChiSquared::new(q as f64).map_err(|e| Error::numeric(e.to_string()))?;
    Ok(TestResult {
        statistic: stat,
        p_value: (1.0 - chi.cdf(stat)).clamp(0.0, 1.0),
        n,
        correction: Correction::None,
        alternative: Alternative::TwoSided,
        reference: format!("chi2({q})"),
    })
}

/// Boundaries of a dated sample split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    /// Last training month.
    pub train_end: Month,
    /// Last validation month; testing runs from the next month to the span end.
    pub validation_end: Month,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub training: MonthRange,
    pub folds: Vec<MonthRange>,
    pub validation: MonthRange,
    pub testing: MonthRange,
    pub k: usize,
}

impl FoldPlan {
    /// Training plus validation.
    pub fn estimation(&self) -> MonthRange {
        MonthRange {
            start: self.training.start,
            end: self.validation.end,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("part,start,end,months\n");
        for (i, f) in self.folds.iter().enumerate() {
            out.push_str(&format!("fold_{},{},{},{}\n", i + 1, f.start, f.end, f.len()));
        }
        for (name, r) in [("validation", &self.validation), ("testing", &self.testing)] {
            out.push_str(&format!("{name},{},{},{}\n", r.start, r.end, r.len()));
        }
        out
    }
}

/// Splits `span` into training (cut into `k` contiguous folds), validation and testing.
pub fn make_folds(span: &MonthRange, plan: &PlanSpec) -> Result<FoldPlan> {
    if plan.k == 0 {
        return Err(Error::Plan("at least one fold is required".into()));
    }
    if !(span.start <= plan.train_end && plan.train_end < plan.validation_end && plan.validation_end < span.end) {
        return Err(Error::Plan(format!(
            "need {} <= train end {} < validation end {} < {}",
            span.start, plan.train_end, plan.validation_end, span.end
        )));
    }
    let training = MonthRange::new(span.start, plan.train_end)?;
    if plan.k > training.len() {
        return Err(Error::Plan(format!("{} folds for {} training months", plan.k, training.len())));
    }
    let folds = contiguous_blocks(training.len(), plan.k)
        .into_iter()
        .map(|b| MonthRange::new(training.start.offset(b.start as i32), training.start.offset(b.end as i32 - 1)))
        .collect::<Result<Vec<_>>>()?;
    Ok(FoldPlan {
        training,
        folds,
        validation: MonthRange::new(plan.train_end.succ(), plan.validation_end)?,
        testing: MonthRange::new(plan.validation_end.succ(), span.end)?,
        k: plan.k,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Linear,
    /// Bounds are exponents; values are `2^e` rounded to integers.
    Log2,
    Integer,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridAxis {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub scale: Scale,
    /// Number of evenly spaced points. Defaults: every integer (integer
    /// scale), unit exponent steps (log2), five points (linear).
    #[serde(default)]
    pub steps: Option<usize>,
}

impl GridAxis {
    pub fn new(name: &str, lower: f64, upper: f64, scale: Scale) -> Self {
        GridAxis {
            name: name.to_string(),
            lower,
            upper,
            scale,
            steps: None,
        }
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = Some(steps);
        self
    }

    fn even(&self, n: usize) -> Vec<f64> {
        if n == 1 {
            return vec![self.lower];
        }
        (0..n)
            .map(|i| self.lower + (self.upper - self.lower) * i as f64 / (n - 1) as f64)
            .collect()
    }

    pub fn values(&self) -> Result<Vec<f64>> {
        if !(self.lower.is_finite() && self.upper.is_finite() && self.lower < self.upper) {
            return Err(Error::Grid(format!(
                "axis '{}' needs finite lower < upper, got {}..{}",
                self.name, self.lower, self.upper
            )));
        }
        if self.steps == Some(0) {
            return Err(Error::Grid(format!("axis '{}' has zero steps", self.name)));
        }
        let mut v: Vec<f64> = match self.scale {
            Scale::Linear => self.even(self.steps.unwrap_or(5)),
            Scale::Integer => match self.steps {
                Some(n) => self.even(n).into_iter().map(f64::round).collect(),
                None => {
                    let (lo, hi) = (self.lower.ceil() as i64, self.upper.floor() as i64);
                    (lo..=hi).map(|i| i as f64).collect()
                }
            },
            Scale::Log2 => {
                let exps = match self.steps {
                    Some(n) => self.even(n),
                    None => {
                        let count = (self.upper - self.lower).floor() as usize + 1;
                        (0..count).map(|i| self.lower + i as f64).collect()
                    }
                };
                exps.into_iter().map(|e| 2f64.powf(e).round()).collect()
            }
        };
        v.dedup();
        if v.is_empty() {
            return Err(Error::Grid(format!("axis '{}' contains no admissible values", self.name)));
        }
        Ok(v)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelFamily {
    Pca,
    Dfm,
    Ann,
    Rnn,
}

impl ModelFamily {
    fn axes(self) -> &'static [&'static str] {
        match self {
            ModelFamily::Pca => &["components"],
            ModelFamily::Dfm => &["factors", "series_length"],
            ModelFamily::Ann => &["hidden_layers", "neurons", "learning_rate", "batch_size", "epochs"],
            ModelFamily::Rnn => &["hidden_layers", "neurons", "learning_rate", "batch_size", "epochs", "window"],
        }
    }
}

impl std::fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelFamily::Pca => "pca",
            ModelFamily::Dfm => "dfm",
            ModelFamily::Ann => "ann",
            ModelFamily::Rnn => "rnn",
        })
    }
}

impl std::str::FromStr for ModelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "pca" => Ok(ModelFamily::Pca),
            "dfm" => Ok(ModelFamily::Dfm),
            "ann" | "rna" | "mlp" => Ok(ModelFamily::Ann),
            "rnn" | "lstm" => Ok(ModelFamily::Rnn),
            other => Err(Error::Config(format!("unknown method '{other}'"))),
        }
    }
}

pub type GridPoint = Vec<(String, f64)>;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub axes: Vec<GridAxis>,
}

impl GridSpec {
    pub fn new(axes: Vec<GridAxis>) -> Self {
        GridSpec { axes }
    }

    /// Search ranges of the published tuning table. Network axes are
    /// subsampled to five points each; the full integer ranges are available
    /// by clearing `steps`.
    pub fn published(family: ModelFamily) -> Self {
        let axes = match family {
            ModelFamily::Pca => vec![GridAxis::new("components", 2.0, 12.0, Scale::Integer)],
            ModelFamily::Dfm => vec![
                GridAxis::new("factors", 2.0, 10.0, Scale::Integer),
                GridAxis::new("series_length", 0.01, 2.5, Scale::Linear),
            ],
            ModelFamily::Ann => vec![
                GridAxis::new("hidden_layers", 2.0, 64.0, Scale::Integer).with_steps(5),
                GridAxis::new("neurons", 6.0, 256.0, Scale::Integer).with_steps(5),
            ],
            ModelFamily::Rnn => vec![
                GridAxis::new("hidden_layers", 2.0, 48.0, Scale::Integer).with_steps(5),
                GridAxis::new("neurons", 6.0, 256.0, Scale::Integer).with_steps(5),
                GridAxis::new("batch_size", 2.5, 6.5, Scale::Log2),
            ],
        };
        GridSpec { axes }
    }

    /// Cartesian product in axis order, first axis varying slowest.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.axes.is_empty() {
            return Err(Error::Grid("grid has no axes".into()));
        }
        let mut points: Vec<GridPoint> = vec![Vec::new()];
        for axis in &self.axes {
            let values = axis.values()?;
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.push((axis.name.clone(), v));
                        q
                    })
                })
                .collect();
        }
        Ok(points)
    }

    pub fn validate_for(&self, family: ModelFamily) -> Result<()> {
        let allowed = family.axes();
        for axis in &self.axes {
            if !allowed.contains(&axis.name.as_str()) {
                return Err(Error::Grid(format!(
                    "'{}' is not a {family} hyperparameter (expected one of {})",
                    axis.name,
                    allowed.join(", ")
                )));
            }
        }
        Ok(())
    }
}

/// Dataset access used by the search, so callers can observe what is read.
pub trait SampleSource<T: Real>: Sync {
    /// Rows whose months fall in `range`.
    fn window(&self, range: &MonthRange) -> Result<AlignedDataset<T>>;
}

impl<T: Real> SampleSource<T> for AlignedDataset<T> {
    fn window(&self, range: &MonthRange) -> Result<AlignedDataset<T>> {
        self.slice(range)
    }
}

/// Wraps a source and records every range requested from it.
pub struct TracingSource<'a, T: Real> {
    inner: &'a dyn SampleSource<T>,
    log: Mutex<Vec<MonthRange>>,
}

impl<'a, T: Real> TracingSource<'a, T> {
    pub fn new(inner: &'a dyn SampleSource<T>) -> Self {
        TracingSource {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<MonthRange> {
        self.log.lock().expect("trace lock").clone()
    }
}

impl<T: Real> SampleSource<T> for TracingSource<'_, T> {
    fn window(&self, range: &MonthRange) -> Result<AlignedDataset<T>> {
        self.log.lock().expect("trace lock").push(*range);
        self.inner.window(range)
    }
}

/// Fixed settings that grid points override.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchBase {
    pub pca_basis: PcaBasis,
    pub em: EmConfig,
    pub ann: AnnConfig,
    pub rnn: RnnConfig,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for SearchBase {
    fn default() -> Self {
        SearchBase {
            pca_basis: PcaBasis::Correlation,
            em: EmConfig {
                max_iter: 100,
                ..EmConfig::default()
            },
            ann: AnnConfig {
                epochs: 200,
                ..AnnConfig::default()
            },
            rnn: RnnConfig {
                epochs: 200,
                ..RnnConfig::default()
            },
            threads: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LeaderboardRow {
    pub point: GridPoint,
    pub parameters: usize,
    /// Mean held-out MSE over folds; `None` when the point failed.
    pub mean_mse: Option<f64>,
    pub fold_mse: Vec<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub family: ModelFamily,
    pub best: GridPoint,
    pub best_mse: f64,
    /// Every grid point in grid order.
    pub leaderboard: Vec<LeaderboardRow>,
}

impl SearchResult {
    pub fn best_value(&self, name: &str) -> Option<f64> {
        self.best.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }

    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = self
            .leaderboard
            .first()
            .map(|r| r.point.iter().map(|(n, _)| n.as_str()).collect())
            .unwrap_or_default();
        let folds = self.leaderboard.iter().map(|r| r.fold_mse.len()).max().unwrap_or(0);
        let mut out = names.join(",");
        out.push_str(",parameters,mean_mse");
        for i in 1..=folds {
            out.push_str(&format!(",fold_{i}"));
        }
        out.push_str(",status\n");
        for row in &self.leaderboard {
            let vals: Vec<String> = row.point.iter().map(|(_, v)| v.to_string()).collect();
            out.push_str(&vals.join(","));
            out.push_str(&format!(
                ",{},{}",
                row.parameters,
                row.mean_mse.map(|m| m.to_string()).unwrap_or_default()
            ));
            for i in 0..folds {
                out.push(',');
                if let Some(f) = row.fold_mse.get(i) {
                    out.push_str(&f.to_string());
                }
            }
            let status = row.error.as_deref().unwrap_or("ok").replace([',', '\n'], ";");
            out.push_str(&format!(",{status}\n"));
        }
        out
    }
}

fn value(point: &GridPoint, name: &str) -> Option<f64> {
    point.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
}

fn count(point: &GridPoint, name: &str, default: usize) -> usize {
    value(point, name).map(|v| v.round().max(0.0) as usize).unwrap_or(default)
}

/// Held-out error of predicting each column from the others with a linear
/// factor model, normalized by the column's training variance.
///
/// `project(x_rest, rest)` returns the factor estimate from the other columns.
fn leave_one_column_out<T: Real>(
    x: &Matrix<T>,
    rows: &[usize],
    means: &[f64],
    variances: &[f64],
    loadings: &Matrix<f64>,
    project: &dyn Fn(&[f64], &[usize]) -> Option<Vec<f64>>,
) -> Option<f64> {
    let n = x.cols();
    let mut total = 0.0;
    for &r in rows {
        let z: Vec<f64> = (0..n).map(|j| x[(r, j)].as_f64() - means[j]).collect();
        for j in 0..n {
            let rest: Vec<usize> = (0..n).filter(|&i| i != j).collect();
            let zr: Vec<f64> = rest.iter().map(|&i| z[i]).collect();
            let f = project(&zr, &rest)?;
            let pred: f64 = (0..loadings.cols()).map(|c| loadings[(j, c)] * f[c]).sum();
            total += (z[j] - pred).powi(2) / variances[j].max(1e-300);
        }
    }
    Some(total / (rows.len() * n) as f64)
}

fn column_moments<T: Real>(x: &Matrix<T>, rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let n = rows.len() as f64;
    (0..x.cols())
        .map(|j| {
            let m = rows.iter().map(|&r| x[(r, j)].as_f64()).sum::<f64>() / n;
            let v = rows.iter().map(|&r| (x[(r, j)].as_f64() - m).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
            (m, v)
        })
        .unzip()
}

fn sub_solve(loadings: &Matrix<f64>, rest: &[usize], weights: &[f64], prior: Option<&Matrix<f64>>, z: &[f64]) -> Option<Vec<f64>> {
    let k = loadings.cols();
    let mut a = Matrix::from_fn(k, k, |p, q| {
        rest.iter()
            .map(|&i| loadings[(i, p)] * loadings[(i, q)] * weights[i])
            .sum::<f64>()
    });
    if let Some(p0) = prior {
        a = a.add(p0).ok()?;
    }
    let b: Vec<f64> = (0..k)
        .map(|p| rest.iter().zip(z).map(|(&i, v)| loadings[(i, p)] * weights[i] * v).sum())
        .collect();
    Some(Cholesky::new(&a).ok()?.solve_vec(&b))
}

/// Cross-validated score of one grid point; returns (fold scores, parameter count).
fn evaluate_point<T: Real>(
    family: ModelFamily,
    point: &GridPoint,
    data: &AlignedDataset<T>,
    folds: &[Vec<usize>],
    base: &SearchBase,
    seed: u64,
) -> (usize, Result<Vec<f64>>) {
    let width = data.width();
    let mut params = 0;
    let mut scores = Vec::with_capacity(folds.len());
    for (i, held) in folds.iter().enumerate() {
        let train: Vec<usize> = folds
            .iter()
            .enumerate()
            .filter(|(j, _)| *j != i)
            .flat_map(|(_, f)| f.iter().copied())
            .collect();
        let score = match family {
            ModelFamily::Pca => {
                let k = count(point, "components", 1);
                params = k * width;
                let x = data.features.select_row_indices(&train);
                pca_fit_with(&x, k, base.pca_basis).and_then(|model| {
                    let (means, variances) = column_moments(&data.features, &train);
                    // Work in the model's scaled coordinates, back in column units.
                    let l = Matrix::from_fn(width, k, |r, c| {
                        model.loadings[(r, c)].as_f64() * model.scales[r].as_f64()
                    });
                    let w: Vec<f64> = model.scales.iter().map(|s| 1.0 / (s.as_f64() * s.as_f64())).collect();
                    leave_one_column_out(&data.features, held, &means, &variances, &l, &|z, rest| {
                        sub_solve(&l, rest, &w, None, z)
                    })
                    .ok_or_else(|| Error::numeric("factor projection is singular"))
                })
            }
            ModelFamily::Dfm => {
                let r = count(point, "factors", 1);
                params = r * width + r * r + width;
                let cfg = EmConfig {
                    series_length: value(point, "series_length").unwrap_or(base.em.series_length),
                    ..base.em.clone()
                };
                let x = data.features.select_row_indices(&train);
                dfm_fit(&x, r, &cfg).and_then(|model| {
                    let (_, variances) = column_moments(&data.features, &train);
                    let means: Vec<f64> = model.means.iter().map(|m| m.as_f64()).collect();
                    let l = model.loadings.cast::<f64>();
                    let w: Vec<f64> = model.idiosyncratic.iter().map(|v| 1.0 / v.as_f64()).collect();
                    let p0 = Cholesky::new(&model.initial_covariance.cast::<f64>())?.inverse();
                    leave_one_column_out(&data.features, held, &means, &variances, &l, &|z, rest| {
                        sub_solve(&l, rest, &w, Some(&p0), z)
                    })
                    .ok_or_else(|| Error::numeric("factor projection is singular"))
                })
            }
            ModelFamily::Ann => {
                let cfg = AnnConfig {
                    hidden_layers: count(point, "hidden_layers", base.ann.hidden_layers),
                    neurons: count(point, "neurons", base.ann.neurons),
                    learning_rate: value(point, "learning_rate").unwrap_or(base.ann.learning_rate),
                    batch_size: count(point, "batch_size", base.ann.batch_size),
                    epochs: count(point, "epochs", base.ann.epochs),
                    seed: split_seed(seed, "grid"),
                    ..base.ann.clone()
                };
                if cfg.validate().is_ok() {
                    params = cfg.parameter_count(width);
                }
                ann_train_rows(data, &train, &[], &cfg).and_then(|art| held_out_mse(&art, data, held))
            }
            ModelFamily::Rnn => {
                let cfg = RnnConfig {
                    hidden_layers: count(point, "hidden_layers", base.rnn.hidden_layers),
                    neurons: count(point, "neurons", base.rnn.neurons),
                    learning_rate: value(point, "learning_rate").unwrap_or(base.rnn.learning_rate),
                    batch_size: count(point, "batch_size", base.rnn.batch_size),
                    epochs: count(point, "epochs", base.rnn.epochs),
                    window: count(point, "window", base.rnn.window),
                    seed: split_seed(seed, "grid"),
                    ..base.rnn.clone()
                };
                if cfg.validate().is_ok() {
                    params = cfg.parameter_count(width);
                }
                let w = cfg.window;
                let train: Vec<usize> = train.into_iter().filter(|&r| r >= w).collect();
                let held: Vec<usize> = held.iter().copied().filter(|&r| r >= w).collect();
                rnn_train_rows(data, &train, &[], &cfg).and_then(|art| held_out_mse(&art, data, &held))
            }
        };
        match score {
            Ok(s) if s.is_finite() => scores.push(s),
            Ok(_) => return (params, Err(Error::numeric("non-finite fold score"))),
            Err(e) => return (params, Err(e)),
        }
    }
    (params, Ok(scores))
}

fn held_out_mse<T: Real>(art: &crate::neural::ModelArtifact<T>, data: &AlignedDataset<T>, rows: &[usize]) -> Result<f64> {
    if rows.is_empty() {
        return Err(Error::Length("held-out fold has no complete samples".into()));
    }
    let pred = predict_rows(art, data, rows)?;
    let actual: Vec<T> = rows.iter().map(|&r| data.target[r]).collect();
    Ok(mse(&actual, &pred)?.as_f64())
}

/// Cross-validated grid search over the training folds of `folds`.
///
/// Only the training range is ever requested from `source`. Each point is
/// trained on K−1 folds and scored on the remaining one: networks by target
/// MSE, factor models by leave-one-column-out reconstruction error of the
/// held-out months. The lowest mean wins; ties go to the model with fewer
/// parameters, then to grid order. Points that fail are recorded and skipped.
pub fn grid_search<T: Real>(
    family: ModelFamily,
    grid: &GridSpec,
    folds: &FoldPlan,
    source: &dyn SampleSource<T>,
    base: &SearchBase,
    seed: u64,
) -> Result<SearchResult> {
    grid.validate_for(family)?;
    let points = grid.points()?;
    let data = source.window(&folds.training)?;
    let fold_rows: Vec<Vec<usize>> = folds
        .folds
        .iter()
        .map(|f| data.rows_of(f).map(|r| r.collect()))
        .collect::<Result<_>>()?;
    let run = || -> Vec<(usize, Result<Vec<f64>>)> {
        points
            .par_iter()
            .map(|p| evaluate_point(family, p, &data, &fold_rows, base, seed))
            .collect()
    };
    let outcomes = match base.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Config(e.to_string()))?
            .install(run),
        None => run(),
    };
    let mut leaderboard = Vec::with_capacity(points.len());
    let mut best: Option<(usize, f64, usize)> = None;
    for (i, (point, (params, outcome))) in points.into_iter().zip(outcomes).enumerate() {
        let row = match outcome {
            Ok(scores) => {
                let m = scores.iter().sum::<f64>() / scores.len() as f64;
                let better = match best {
                    None => true,
                    Some((_, bm, bp)) => {
                        let tie = (m - bm).abs() <= 1e-12 * bm.abs().max(1e-300);
                        (!tie && m < bm) || (tie && params < bp)
                    }
                };
                if better {
                    best = Some((i, m, params));
                }
                LeaderboardRow {
                    point,
                    parameters: params,
                    mean_mse: Some(m),
                    fold_mse: scores,
                    error: None,
                }
            }
            Err(e) => LeaderboardRow {
                point,
                parameters: params,
                mean_mse: None,
                fold_mse: Vec::new(),
                error: Some(e.to_string()),
            },
        };
        leaderboard.push(row);
    }
    let (i, m, _) = best.ok_or(Error::SearchFailed)?;
    Ok(SearchResult {
        family,
        best: leaderboard[i].point.clone(),
        best_mse: m,
        leaderboard,
    })
}
