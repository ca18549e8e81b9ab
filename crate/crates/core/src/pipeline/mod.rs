//! Index construction from a term panel, the two-stage forecast evaluation,
//! quarterly aggregation and correlation reporting.

mod experiment;
pub mod fixture;
mod plot;

pub use experiment::{Config, Experiment, FetchSummary, Growth, FORMAT_VERSION};
pub use plot::{line_chart_svg, PlotSeries};

use std::collections::BTreeMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evalx::{
    dm_test_with, gw_test, mse, Alternative, Correction, FoldPlan, LossSeries, ModelFamily,
};
use crate::factors::{dfm_filter, dfm_fit, pca_fit_with, pca_transform, EmConfig, PcaBasis};
use crate::ingest::{Category, TermPanel, Variant, Vocabulary};
use crate::linalg::Matrix;
use crate::neural::{ann_train_rows, fitted_series, rnn_train_rows, AnnConfig, RnnConfig};
use crate::rng::split_seed;
use crate::scalar::Real;
use crate::select::{
    ols_fit_named, spike_slab_rank, stepwise_select, Criterion, Direction, InclusionRanking,
    OlsModel, SelectionTrace, SpikeSlabConfig,
};
use crate::series::{Frequency, MonthRange, TimeSeries};
use crate::transform::{align, AlignedDataset, TransformSpec};

/// Row label of the combined-categories row in an [`EvalReport`].
pub const TOTAL: &str = "Total";
pub const EVAL_HEADER: &str = "category,estimate,mse,rmse,p_dm,p_gw";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PcaSettings {
    pub components: usize,
    pub basis: PcaBasis,
}

impl Default for PcaSettings {
    fn default() -> Self {
        PcaSettings {
            components: 6,
            basis: PcaBasis::Correlation,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DfmSettings {
    pub factors: usize,
    pub series_length: f64,
    pub max_iter: usize,
    pub tol: f64,
}

impl Default for DfmSettings {
    fn default() -> Self {
        DfmSettings {
            factors: 4,
            series_length: 1.2,
            max_iter: 200,
            tol: 1e-6,
        }
    }
}

impl DfmSettings {
    pub fn em(&self) -> EmConfig {
        EmConfig {
            max_iter: self.max_iter,
            tol: self.tol,
            series_length: self.series_length,
        }
    }
}

/// Everything [`build_itac`] needs besides the panel and the target.
#[derive(Clone, Debug)]
pub struct BuildSettings {
    pub transform: TransformSpec,
    pub folds: FoldPlan,
    pub pca: PcaSettings,
    pub dfm: DfmSettings,
    pub ann: AnnConfig,
    pub rnn: RnnConfig,
    /// Root seed; networks draw from `split_seed(seed, "ann" | "rnn")`.
    pub seed: u64,
}

impl BuildSettings {
    fn snapshot(&self, method: ModelFamily, width: usize) -> serde_json::Value {
        let model = match method {
            ModelFamily::Pca => serde_json::to_value(PcaSettings {
                components: self.pca.components.min(width),
                ..self.pca.clone()
            }),
            ModelFamily::Dfm => serde_json::to_value(DfmSettings {
                factors: self.dfm.factors.min(width),
                ..self.dfm.clone()
            }),
            ModelFamily::Ann => serde_json::to_value(self.ann_config()),
            ModelFamily::Rnn => serde_json::to_value(self.rnn_config()),
        }
        .unwrap_or(serde_json::Value::Null);
        serde_json::json!({
            "model": model,
            "transform": self.transform,
            "training": self.folds.training.to_string(),
            "validation": self.folds.validation.to_string(),
            "seed": self.seed,
        })
    }

    fn ann_config(&self) -> AnnConfig {
        AnnConfig {
            seed: split_seed(self.seed, "ann"),
            ..self.ann.clone()
        }
    }

    fn rnn_config(&self) -> RnnConfig {
        RnnConfig {
            seed: split_seed(self.seed, "rnn"),
            ..self.rnn.clone()
        }
    }
}

/// A constructed monthly (or quarterly) index with its provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct IndicatorSeries<T: Real> {
    pub values: TimeSeries<T>,
    pub method: ModelFamily,
    pub variant: Variant,
    /// Set for per-category indices.
    pub category: Option<Category>,
    /// Panel columns that fed the model.
    pub terms: Vec<String>,
    pub hyperparameters: serde_json::Value,
    pub vocabulary_hash: String,
}

impl<T: Real> crate::artifact::Artifact for IndicatorSeries<T> {
    const KIND: &'static str = "indicator-series";
}

impl<T: Real> IndicatorSeries<T> {
    pub fn span(&self) -> Option<MonthRange> {
        self.values.span()
    }

    /// `date,value` CSV.
    pub fn to_csv(&self) -> String {
        crate::ingest::time_series_to_csv(&self.values)
    }

    /// Display name: the category when set, else the variant.
    pub fn label(&self) -> String {
        match self.category {
            Some(c) => c.name().to_string(),
            None => self.variant.to_string(),
        }
    }
}

/// Builds the variant's index from a full panel.
pub fn build_itac<T: Real>(
    panel: &TermPanel,
    vocabulary: &Vocabulary,
    variant: Variant,
    method: ModelFamily,
    target: &TimeSeries<T>,
    settings: &BuildSettings,
) -> Result<IndicatorSeries<T>> {
    let columns = panel.for_variant(vocabulary, variant)?;
    let mut out = build_index(&columns, method, target, settings)?;
    out.variant = variant;
    out.vocabulary_hash = vocabulary.hash();
    Ok(out)
}

/// Builds one index per category present in the variant's columns.
pub fn build_category_itacs<T: Real>(
    panel: &TermPanel,
    vocabulary: &Vocabulary,
    variant: Variant,
    method: ModelFamily,
    target: &TimeSeries<T>,
    settings: &BuildSettings,
) -> Result<BTreeMap<String, IndicatorSeries<T>>> {
    let columns = panel.for_variant(vocabulary, variant)?;
    let mut out = BTreeMap::new();
    for category in vocabulary.categories() {
        let sub = columns.for_category(category);
        if sub.width() == 0 {
            continue;
        }
        let mut itac = build_index(&sub, method, target, settings)?;
        itac.variant = variant;
        itac.category = Some(category);
        itac.vocabulary_hash = vocabulary.hash();
        out.insert(category.name().to_string(), itac);
    }
    Ok(out)
}

fn build_index<T: Real>(
    panel: &TermPanel,
    method: ModelFamily,
    target: &TimeSeries<T>,
    settings: &BuildSettings,
) -> Result<IndicatorSeries<T>> {
    let training = settings.folds.training;
    let data = align(panel, target, &settings.transform, Some(&training))?;
    let width = data.width();
    let values = match method {
        ModelFamily::Pca | ModelFamily::Dfm => {
            let est = clip(&settings.folds.estimation(), &data)?;
            let rows = data.rows_of(&est)?;
            let x_est = data.features.select_rows(rows);
            let factor = if method == ModelFamily::Pca {
                let k = settings.pca.components.clamp(1, width);
                let model = pca_fit_with(&x_est, k, settings.pca.basis)?;
                pca_transform(&model, &data.features)?.factor(0)
            } else {
                let r = settings.dfm.factors.clamp(1, width);
                let model = dfm_fit(&x_est, r, &settings.dfm.em())?;
                dfm_filter(&model, &data.features)?.factor(0)
            };
            let series = TimeSeries::monthly(data.span.start, factor);
            scale_to_target(&series, &data, &clip(&training, &data)?)?
        }
        ModelFamily::Ann | ModelFamily::Rnn => {
            let train = row_list(&data, &training, 0)?;
            let validation = row_list(&data, &settings.folds.validation, 0)?;
            let artifact = if method == ModelFamily::Ann {
                ann_train_rows(&data, &train, &validation, &settings.ann_config())?
            } else {
                let cfg = settings.rnn_config();
                let keep = |rows: Vec<usize>| rows.into_iter().filter(|&r| r >= cfg.window).collect::<Vec<_>>();
                rnn_train_rows(&data, &keep(train), &keep(validation), &cfg)?
            };
            fitted_series(&artifact, &data)?
        }
    };
    Ok(IndicatorSeries {
        values,
        method,
        variant: Variant::Itacons,
        category: None,
        terms: data.feature_names.clone(),
        hyperparameters: settings.snapshot(method, width),
        vocabulary_hash: String::new(),
    })
}

fn clip<T: Real>(range: &MonthRange, data: &AlignedDataset<T>) -> Result<MonthRange> {
    range
        .intersect(&data.span)
        .ok_or_else(|| Error::InvalidSpan(format!("{range} outside dataset span {}", data.span)))
}

fn row_list<T: Real>(data: &AlignedDataset<T>, range: &MonthRange, min: usize) -> Result<Vec<usize>> {
    Ok(data.rows_of(&clip(range, data)?)?.filter(|&r| r >= min).collect())
}

/// Rescales `index` to the target's mean and variance over `window`, flipping
/// its sign when it correlates negatively with the target there.
fn scale_to_target<T: Real>(
    index: &TimeSeries<T>,
    data: &AlignedDataset<T>,
    window: &MonthRange,
) -> Result<TimeSeries<T>> {
    let rows = data.rows_of(window)?;
    let f = &index.values[rows.clone()];
    let y = &data.target[rows];
    let (mf, sf) = moments(f);
    let (my, sy) = moments(y);
    if !(sf > T::zero()) {
        return Err(Error::DegenerateSeries {
            name: Some("index".into()),
            reason: "constant over the training window".into(),
        });
    }
    let cov = f
        .iter()
        .zip(y)
        .fold(T::zero(), |acc, (&a, &b)| acc + (a - mf) * (b - my));
    let sign = if cov < T::zero() { -T::one() } else { T::one() };
    Ok(index.map(|v| my + sign * (v - mf) / sf * sy))
}

/// Mean and population standard deviation.
fn moments<T: Real>(xs: &[T]) -> (T, T) {
    let m = crate::scalar::mean(xs);
    let n = T::of_usize(xs.len().max(1));
    let v = xs.iter().fold(T::zero(), |acc, &x| acc + (x - m) * (x - m)) / n;
    (m, v.sqrt())
}

/// Stage-one regression of the commerce target on the macro indicators.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct StageOne<T: Real> {
    pub model: OlsModel<T>,
    pub trace: SelectionTrace<T>,
    /// Fitted `Xβ` over the indicators' common span.
    pub xbeta: TimeSeries<T>,
    pub fit_range: MonthRange,
}

/// Stepwise-refined OLS of `target` on the named indicators over `fit_range`.
///
/// The full design is fitted first so that a rank-deficient candidate set is
/// reported rather than silently pruned.
pub fn stage_one_fit<T: Real>(
    indicators: &[(String, TimeSeries<T>)],
    target: &TimeSeries<T>,
    fit_range: &MonthRange,
    direction: Direction,
    criterion: Criterion,
) -> Result<StageOne<T>> {
    if indicators.is_empty() {
        return Err(Error::shape("stage one needs at least one indicator"));
    }
    let names: Vec<String> = indicators.iter().map(|(n, _)| n.clone()).collect();
    let common = common_span(indicators.iter().map(|(n, s)| (n.as_str(), s)))?;
    let target_span = target
        .span()
        .ok_or_else(|| Error::Length("stage-one target is empty".into()))?;
    if !common.contains_range(fit_range) || !target_span.contains_range(fit_range) {
        return Err(Error::InvalidSpan(format!(
            "fit range {fit_range} not covered by indicators ({common}) and target ({target_span})"
        )));
    }
    let x_fit = design(indicators.iter().map(|(_, s)| s), fit_range)?;
    let y_fit = target.slice(fit_range)?.values;
    ols_fit_named(&x_fit, &y_fit, &names)?;
    let trace = stepwise_select(&x_fit, &y_fit, &names, direction, criterion)?;
    let model = trace.final_model.clone();
    let chosen: Vec<&TimeSeries<T>> = model
        .names
        .iter()
        .map(|n| &indicators[names.iter().position(|m| m == n).expect("selected from names")].1)
        .collect();
    let x_all = design(chosen.into_iter(), &common)?;
    let xbeta = TimeSeries::monthly(common.start, model.predict(&x_all)?);
    Ok(StageOne {
        model,
        trace,
        xbeta,
        fit_range: *fit_range,
    })
}

fn common_span<'a, T: Real + 'a>(
    series: impl Iterator<Item = (&'a str, &'a TimeSeries<T>)>,
) -> Result<MonthRange> {
    let mut span: Option<MonthRange> = None;
    for (name, s) in series {
        let own = s
            .span()
            .ok_or_else(|| Error::Length(format!("series '{name}' is empty")))?;
        span = Some(match span {
            None => own,
            Some(acc) => acc
                .intersect(&own)
                .ok_or_else(|| Error::InvalidSpan(format!("series '{name}' does not overlap the others")))?,
        });
    }
    span.ok_or_else(|| Error::Length("no series".into()))
}

fn design<'a, T: Real + 'a>(
    columns: impl Iterator<Item = &'a TimeSeries<T>>,
    range: &MonthRange,
) -> Result<Matrix<T>> {
    let cols: Vec<Vec<T>> = columns.map(|s| s.slice(range).map(|s| s.values)).collect::<Result<_>>()?;
    if cols.is_empty() {
        return Ok(Matrix::zeros(range.len(), 0));
    }
    Matrix::from_columns(&cols)
}

/// Why target values were requested.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    /// Values that enter an estimated model.
    Fit,
    /// Values only compared against finished forecasts.
    Score,
}

/// Supplies target values by range and purpose.
pub trait TargetSource<T: Real>: Sync {
    fn target(&self, range: &MonthRange, access: Access) -> Result<Vec<T>>;
}

impl<T: Real> TargetSource<T> for TimeSeries<T> {
    fn target(&self, range: &MonthRange, _access: Access) -> Result<Vec<T>> {
        Ok(self.slice(range)?.values)
    }
}

/// Records every target request made through it.
pub struct TracingTarget<'a, T: Real> {
    inner: &'a dyn TargetSource<T>,
    log: Mutex<Vec<(MonthRange, Access)>>,
}

impl<'a, T: Real> TracingTarget<'a, T> {
    pub fn new(inner: &'a dyn TargetSource<T>) -> Self {
        TracingTarget {
            inner,
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn requests(&self) -> Vec<(MonthRange, Access)> {
        self.log.lock().expect("trace lock").clone()
    }
}

impl<T: Real> TargetSource<T> for TracingTarget<'_, T> {
    fn target(&self, range: &MonthRange, access: Access) -> Result<Vec<T>> {
        self.log.lock().expect("trace lock").push((*range, access));
        self.inner.target(range, access)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageTwoOptions {
    pub horizon: usize,
    pub gw_window: usize,
    pub inclusion_threshold: f64,
    pub spike_slab: SpikeSlabConfig,
}

impl Default for StageTwoOptions {
    fn default() -> Self {
        StageTwoOptions {
            horizon: 1,
            gw_window: 1,
            inclusion_threshold: 0.5,
            spike_slab: SpikeSlabConfig::default(),
        }
    }
}

/// Stage-one fit combined with one stage-two regression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct TwoStageFit<T: Real> {
    pub stage_one: OlsModel<T>,
    pub xbeta: TimeSeries<T>,
    pub stage_two: OlsModel<T>,
    pub category: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub category: String,
    /// Stage-two coefficient on the category index; for the total row, the
    /// sum over the retained indices.
    pub estimate: f64,
    pub mse: f64,
    pub rmse: f64,
    pub p_dm: f64,
    pub p_gw: f64,
    /// Regressors of the stage-two model, intercept excluded.
    pub regressors: Vec<String>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Categories in name order, then the total row.
    pub rows: Vec<EvalRow>,
    pub estimation: MonthRange,
    pub testing: MonthRange,
    /// MSE of the forecasts from the stage-one series alone.
    pub baseline_mse: f64,
    pub ranking: InclusionRanking,
}

impl crate::artifact::Artifact for EvalReport {
    const KIND: &'static str = "eval-report";
}

impl EvalReport {
    pub fn row(&self, category: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.category == category)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(EVAL_HEADER.split(',')).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.category.clone(),
                r.estimate.to_string(),
                r.mse.to_string(),
                r.rmse.to_string(),
                r.p_dm.to_string(),
                r.p_gw.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

struct Forecast<T: Real> {
    model: OlsModel<T>,
    predictions: Vec<T>,
}

/// OLS of `y` on `columns` over the estimation rows, forecasting the test rows.
fn forecast<T: Real>(
    names: &[String],
    columns: &[&TimeSeries<T>],
    y: &[T],
    estimation: &MonthRange,
    testing: &MonthRange,
) -> Result<Forecast<T>> {
    let x_fit = design(columns.iter().copied(), estimation)?;
    let x_test = design(columns.iter().copied(), testing)?;
    let model = ols_fit_named(&x_fit, y, names)?;
    let predictions = model.predict(&x_test)?;
    Ok(Forecast { model, predictions })
}

/// Evaluates each category index against the stage-one-only forecasts.
///
/// Models are estimated on `folds.estimation()` and scored on
/// `folds.testing`. The target is read once per purpose, so a tracing source
/// shows exactly which months entered estimation.
pub fn stage_two_forecast<T: Real>(
    xbeta: &TimeSeries<T>,
    itacs: &BTreeMap<String, IndicatorSeries<T>>,
    target: &dyn TargetSource<T>,
    folds: &FoldPlan,
    options: &StageTwoOptions,
    seed: u64,
) -> Result<EvalReport> {
    if itacs.len() < 2 {
        return Err(Error::Config(format!(
            "stage two needs at least 2 categories, got {}",
            itacs.len()
        )));
    }
    if itacs.contains_key(TOTAL) {
        return Err(Error::Config(format!("'{TOTAL}' is reserved for the combined row")));
    }
    let estimation = folds.estimation();
    let testing = folds.testing;
    let y_fit = target.target(&estimation, Access::Fit)?;
    let y_test = target.target(&testing, Access::Score)?;
    if y_fit.len() != estimation.len() || y_test.len() != testing.len() {
        return Err(Error::shape("target source returned the wrong number of months"));
    }
    let xb_name = "xbeta".to_string();
    let baseline = forecast(std::slice::from_ref(&xb_name), &[xbeta], &y_fit, &estimation, &testing)?;
    let base_loss = LossSeries::squared(&y_test, &baseline.predictions, Some(testing))?;

    let score = |category: &str, names: Vec<String>, columns: Vec<&TimeSeries<T>>| -> Result<EvalRow> {
        let fit = forecast(&names, &columns, &y_fit, &estimation, &testing)?;
        let loss = LossSeries::squared(&y_test, &fit.predictions, Some(testing))?;
        let m = mse(&y_test, &fit.predictions)?.as_f64();
        let mut warnings = Vec::new();
        let p_dm = match dm_test_with(&loss, &base_loss, options.horizon, Correction::Harvey, Alternative::FirstBetter) {
            Ok(t) => t.p_value,
            Err(e @ Error::DegenerateTest(_)) => {
                warnings.push(format!("DM: {e}"));
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        let p_gw = match gw_test(&loss, &base_loss, options.gw_window) {
            Ok(t) => t.p_value,
            Err(e @ Error::DegenerateTest(_)) => {
                warnings.push(format!("GW: {e}"));
                f64::NAN
            }
            Err(e) => return Err(e),
        };
        let estimate = fit.model.coefficients[2..].iter().map(|c| c.as_f64()).sum();
        Ok(EvalRow {
            category: category.to_string(),
            estimate,
            mse: m,
            rmse: m.sqrt(),
            p_dm,
            p_gw,
            regressors: names,
            warnings,
        })
    };

    let entries: Vec<(&String, &IndicatorSeries<T>)> = itacs.iter().collect();
    let mut rows: Vec<EvalRow> = entries
        .par_iter()
        .map(|(name, itac)| score(name, vec![xb_name.clone(), (*name).clone()], vec![xbeta, &itac.values]))
        .collect::<Result<_>>()?;

    // Total: rank the category indices on what the stage-one series leaves unexplained.
    let names: Vec<String> = entries.iter().map(|(n, _)| (*n).clone()).collect();
    let candidates = design(entries.iter().map(|(_, i)| &i.values), &estimation)?;
    let residual: Vec<T> = {
        let xb = xbeta.slice(&estimation)?.values;
        let b = &baseline.model.coefficients;
        y_fit.iter().zip(&xb).map(|(&y, &x)| y - b[0] - b[1] * x).collect()
    };
    let ranking = spike_slab_rank(&candidates, &residual, &names, &options.spike_slab, split_seed(seed, "total"))?;
    let mut selected = ranking.selected(options.inclusion_threshold);
    let mut notes = ranking.warnings.clone();
    if selected.is_empty() {
        let (top, p) = ranking.ranked()[0].clone();
        notes.push(format!(
            "no index above inclusion {}; kept top-ranked '{top}' ({p:.3})",
            options.inclusion_threshold
        ));
        selected.push(top);
    }
    selected.sort();
    let mut total_names = vec![xb_name.clone()];
    let mut total_cols = vec![xbeta];
    for s in &selected {
        total_names.push(s.clone());
        total_cols.push(&itacs[s].values);
    }
    let mut total = score(TOTAL, total_names, total_cols)?;
    notes.append(&mut total.warnings);
    total.warnings = notes;
    rows.push(total);

    Ok(EvalReport {
        rows,
        estimation,
        testing,
        baseline_mse: base_loss.losses.iter().map(|l| l.as_f64()).sum::<f64>() / testing.len() as f64,
        ranking,
    })
}

/// Stage-two fit for a single category index, for inspection.
pub fn two_stage_fit<T: Real>(
    stage_one: &StageOne<T>,
    itac: &IndicatorSeries<T>,
    target: &dyn TargetSource<T>,
    range: &MonthRange,
) -> Result<TwoStageFit<T>> {
    let y = target.target(range, Access::Fit)?;
    let category = itac.label();
    let names = vec!["xbeta".to_string(), category.clone()];
    let x = design([&stage_one.xbeta, &itac.values].into_iter(), range)?;
    Ok(TwoStageFit {
        stage_one: stage_one.model.clone(),
        xbeta: stage_one.xbeta.clone(),
        stage_two: ols_fit_named(&x, &y, &names)?,
        category,
    })
}

/// Three-month means of a monthly series starting in January, April, July
/// or October; a trailing partial quarter is dropped.
pub fn quarterly_mean<T: Real>(series: &TimeSeries<T>) -> Result<TimeSeries<T>> {
    if series.frequency != Frequency::Monthly {
        return Err(Error::InvalidSpan("series is already quarterly".into()));
    }
    if (series.start.month() - 1) % 3 != 0 {
        return Err(Error::InvalidSpan(format!(
            "{} is not the first month of a quarter",
            series.start
        )));
    }
    let quarters = series.len() / 3;
    if quarters == 0 {
        return Err(Error::Length(format!(
            "{} month(s) do not make a full quarter",
            series.len()
        )));
    }
    let values = series.values[..quarters * 3]
        .chunks_exact(3)
        .map(|c| (c[0] + c[1] + c[2]) / T::of(3.0))
        .collect();
    Ok(TimeSeries {
        start: series.start,
        frequency: Frequency::Quarterly,
        values,
    })
}

pub fn quarterly_aggregate<T: Real>(indicator: &IndicatorSeries<T>) -> Result<IndicatorSeries<T>> {
    Ok(IndicatorSeries {
        values: quarterly_mean(&indicator.values)?,
        ..indicator.clone()
    })
}

/// Pearson correlations over the common span of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    pub values: Matrix<f64>,
    pub span: MonthRange,
}

impl crate::artifact::Artifact for CorrelationMatrix {
    const KIND: &'static str = "correlation-matrix";
}

impl CorrelationMatrix {
    pub fn get(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.names.iter().position(|n| n == a)?;
        let j = self.names.iter().position(|n| n == b)?;
        Some(self.values[(i, j)])
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![String::new()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (i, n) in self.names.iter().enumerate() {
            let mut rec = vec![n.clone()];
            rec.extend(self.values.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
    }
}

pub fn correlation_report<T: Real>(series: &[(String, TimeSeries<T>)]) -> Result<CorrelationMatrix> {
    if series.len() < 2 {
        return Err(Error::Length(format!("need at least 2 series, got {}", series.len())));
    }
    let span = common_span(series.iter().map(|(n, s)| (n.as_str(), s)))?;
    if span.len() < 2 {
        return Err(Error::InsufficientOverlap {
            months: span.len(),
            required: 2,
        });
    }
    let mut centered = Vec::with_capacity(series.len());
    for (name, s) in series {
        let v: Vec<f64> = s.slice(&span)?.values.iter().map(|x| x.as_f64()).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let c: Vec<f64> = v.iter().map(|x| x - m).collect();
        let norm = c.iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(norm > 1e-12 * (1.0 + m.abs()) * (v.len() as f64).sqrt()) {
            return Err(Error::DegenerateSeries {
                name: Some(name.clone()),
                reason: "zero variance over the common span".into(),
            });
        }
        centered.push(c.into_iter().map(|x| x / norm).collect::<Vec<f64>>());
    }
    let k = series.len();
    let values = Matrix::from_fn(k, k, |i, j| {
        if i == j {
            1.0
        } else {
            let (a, b) = if i < j { (i, j) } else { (j, i) };
            crate::linalg::dot(&centered[a], &centered[b]).clamp(-1.0, 1.0)
        }
    });
    Ok(CorrelationMatrix {
        names: series.iter().map(|(n, _)| n.clone()).collect(),
        values,
        span,
    })
}
