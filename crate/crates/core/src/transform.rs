//! Normalization and stationarity transforms, imputation, and panel/target alignment.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::TermPanel;
use crate::linalg::Matrix;
use crate::scalar::Real;
use crate::series::{MonthRange, TimeSeries};

/// Minimum months shared by the transformed panel and the target.
pub const MIN_OVERLAP: usize = 24;

/// Divides by the series maximum and multiplies by 100; the maximum maps to exactly 100.
pub fn rescale_0_100<T: Real>(series: &TimeSeries<T>) -> Result<TimeSeries<T>> {
    if series.is_empty() {
        return Err(Error::Length("cannot rescale an empty series".into()));
    }
    if let Some(i) = series.values.iter().position(|&v| !(v >= T::zero()) || !v.is_finite()) {
        return Err(Error::Domain(i));
    }
    let max = series.values.iter().copied().fold(T::zero(), T::max);
    if max == T::zero() {
        return Err(Error::DegenerateSeries {
            name: None,
            reason: "all values are zero".into(),
        });
    }
    let hundred = T::of(100.0);
    let scale = hundred / max;
    Ok(series.map(|v| if v == max { hundred } else { v * scale }))
}

/// Elementwise `ln(value + offset)`.
pub fn log_series<T: Real>(series: &TimeSeries<T>, offset: T) -> Result<TimeSeries<T>> {
    if let Some(i) = series.values.iter().position(|&v| !(v + offset > T::zero())) {
        return Err(Error::Domain(i));
    }
    Ok(series.map(|v| (v + offset).ln()))
}

/// `ln(v[t]) - ln(v[t-1])`; the result starts one month later.
pub fn log_diff<T: Real>(series: &TimeSeries<T>) -> Result<TimeSeries<T>> {
    if series.len() < 2 {
        return Err(Error::Length(format!(
            "log-difference needs at least 2 values, got {}",
            series.len()
        )));
    }
    if let Some(i) = series.values.iter().position(|&v| !(v > T::zero())) {
        return Err(Error::Domain(i));
    }
    let logs: Vec<T> = series.values.iter().map(|v| v.ln()).collect();
    Ok(first_difference(&TimeSeries {
        start: series.start,
        frequency: series.frequency,
        values: logs,
    }))
}

fn first_difference<T: Real>(series: &TimeSeries<T>) -> TimeSeries<T> {
    TimeSeries {
        start: series.period_start(1),
        frequency: series.frequency,
        values: series.values.windows(2).map(|w| w[1] - w[0]).collect(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ImputePolicy {
    /// Carry the last observation forward; leading gaps take the first observation.
    ForwardFill,
    /// Interpolate interior gaps linearly; edge gaps take the nearest observation.
    Linear,
    /// Remove every column with a missing cell.
    DropTerm,
}

/// Fills (or drops) missing cells. Observed cells are never modified.
pub fn impute(panel: &TermPanel, policy: ImputePolicy) -> Result<TermPanel> {
    let t = panel.span.len();
    for c in 0..panel.width() {
        if panel.missing_count(c) == t {
            return Err(Error::EmptyColumn(panel.terms[c].clone()));
        }
    }
    if policy == ImputePolicy::DropTerm {
        let keep: Vec<usize> = (0..panel.width())
            .filter(|&c| panel.missing_count(c) == 0)
            .collect();
        return Ok(panel.select_columns(&keep));
    }
    let mut out = panel.clone();
    for c in 0..panel.width() {
        let observed: Vec<usize> = (0..t).filter(|&r| !panel.is_missing(r, c)).collect();
        let first = observed[0];
        let last = *observed.last().expect("non-empty");
        for r in 0..t {
            if !panel.is_missing(r, c) {
                continue;
            }
            let v = if r < first {
                panel.values[(first, c)]
            } else if r > last {
                panel.values[(last, c)]
            } else {
                // interior gap: neighbours exist on both sides
                let k = observed.partition_point(|&o| o < r);
                let (lo, hi) = (observed[k - 1], observed[k]);
                match policy {
                    ImputePolicy::ForwardFill => panel.values[(lo, c)],
                    _ => {
                        let (a, b) = (panel.values[(lo, c)], panel.values[(hi, c)]);
                        a + (b - a) * (r - lo) as f64 / (hi - lo) as f64
                    }
                }
            };
            out.values[(r, c)] = v;
        }
    }
    out.missing = vec![false; out.missing.len()];
    Ok(out)
}

/// Per-column transform chain applied by [`align`].
///
/// `log_diff` differences the logged series when `log` is set; otherwise it
/// applies [`log_diff`] to the (possibly rescaled) levels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TransformSpec {
    pub rescale: bool,
    pub log: bool,
    pub log_offset: f64,
    pub log_diff: bool,
    pub impute_policy: ImputePolicy,
    pub standardize: bool,
    /// Columns missing more than this share of months are dropped before imputation.
    pub max_missing_fraction: f64,
}

impl Default for TransformSpec {
    fn default() -> Self {
        TransformSpec {
            rescale: true,
            log: true,
            log_offset: 1.0,
            log_diff: true,
            impute_policy: ImputePolicy::Linear,
            standardize: true,
            max_missing_fraction: 0.2,
        }
    }
}

impl TransformSpec {
    pub fn identity() -> Self {
        TransformSpec {
            rescale: false,
            log: false,
            log_offset: 0.0,
            log_diff: false,
            impute_policy: ImputePolicy::Linear,
            standardize: false,
            max_missing_fraction: 1.0,
        }
    }

    pub fn apply<T: Real>(&self, series: &TimeSeries<T>) -> Result<TimeSeries<T>> {
        let mut s = series.clone();
        if self.rescale {
            s = rescale_0_100(&s)?;
        }
        if self.log {
            s = log_series(&s, T::of(self.log_offset))?;
            if self.log_diff {
                if s.len() < 2 {
                    return Err(Error::Length("log-difference needs at least 2 values".into()));
                }
                s = first_difference(&s);
            }
        } else if self.log_diff {
            s = log_diff(&s)?;
        }
        Ok(s)
    }
}

/// Transformed features aligned with a target on a common span.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct AlignedDataset<T: Real> {
    /// Rows are months of `span`, columns follow `feature_names`.
    pub features: Matrix<T>,
    pub target: Vec<T>,
    pub span: MonthRange,
    pub feature_names: Vec<String>,
    /// Column means and scales used for standardization, if applied.
    pub standardization: Option<(Vec<T>, Vec<T>)>,
}

impl<T: Real> AlignedDataset<T> {
    pub fn new(features: Matrix<T>, target: Vec<T>, span: MonthRange, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() != target.len() || target.len() != span.len() {
            return Err(Error::shape(format!(
                "{} feature rows, {} targets, span of {} months",
                features.rows(),
                target.len(),
                span.len()
            )));
        }
        if features.cols() != feature_names.len() {
            return Err(Error::shape("feature name count differs from width"));
        }
        Ok(AlignedDataset {
            features,
            target,
            span,
            feature_names,
            standardization: None,
        })
    }

    pub fn len(&self) -> usize {
        self.target.len()
    }

    pub fn is_empty(&self) -> bool {
        self.target.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    /// Row positions of `range` within the span.
    pub fn rows_of(&self, range: &MonthRange) -> Result<std::ops::Range<usize>> {
        let a = self
            .span
            .index_of(range.start)
            .filter(|_| self.span.contains(range.end))
            .ok_or_else(|| Error::InvalidSpan(format!("{range} not within dataset span {}", self.span)))?;
        Ok(a..a + range.len())
    }

    pub fn slice(&self, range: &MonthRange) -> Result<AlignedDataset<T>> {
        let rows = self.rows_of(range)?;
        Ok(AlignedDataset {
            features: self.features.select_rows(rows.clone()),
            target: self.target[rows].to_vec(),
            span: *range,
            feature_names: self.feature_names.clone(),
            standardization: self.standardization.clone(),
        })
    }

    /// Standardizes columns with statistics from `window` only (sample variance).
    ///
    /// Zero-variance columns are centered but not scaled.
    pub fn standardize(&mut self, window: &MonthRange) -> Result<()> {
        let rows = self.rows_of(window)?;
        if rows.len() < 2 {
            return Err(Error::Length("standardization window needs at least 2 months".into()));
        }
        let n = self.width();
        let mut means = Vec::with_capacity(n);
        let mut scales = Vec::with_capacity(n);
        for c in 0..n {
            let col: Vec<T> = rows.clone().map(|r| self.features[(r, c)]).collect();
            let m = crate::scalar::mean(&col);
            let sd = crate::scalar::sample_variance(&col).sqrt();
            means.push(m);
            scales.push(if sd > T::zero() { sd } else { T::one() });
        }
        for r in 0..self.len() {
            for c in 0..n {
                self.features[(r, c)] = (self.features[(r, c)] - means[c]) / scales[c];
            }
        }
        self.standardization = Some((means, scales));
        Ok(())
    }
}

/// Imputes, transforms and aligns a panel with a target series.
///
/// Both sides are truncated to their common span. When `spec.standardize` is
/// set, features are standardized with statistics from `training_window`
/// (clipped to the common span), or from the whole common span when `None`.
pub fn align<T: Real>(
    panel: &TermPanel,
    target: &TimeSeries<T>,
    spec: &TransformSpec,
    training_window: Option<&MonthRange>,
) -> Result<AlignedDataset<T>> {
    let t = panel.span.len();
    let keep: Vec<usize> = (0..panel.width())
        .filter(|&c| (panel.missing_count(c) as f64) <= spec.max_missing_fraction * t as f64)
        .collect();
    if keep.is_empty() {
        return Err(Error::EmptyPanel);
    }
    let panel = impute(&panel.select_columns(&keep), spec.impute_policy)?;
    if panel.width() == 0 {
        return Err(Error::EmptyPanel);
    }
    let mut columns = Vec::with_capacity(panel.width());
    for c in 0..panel.width() {
        let raw = TimeSeries::monthly(
            panel.span.start,
            panel.values.column(c).into_iter().map(T::of).collect(),
        );
        let transformed = spec.apply(&raw).map_err(|e| match e {
            Error::DegenerateSeries { reason, .. } => Error::DegenerateSeries {
                name: Some(panel.terms[c].clone()),
                reason,
            },
            other => other,
        })?;
        columns.push(transformed);
    }
    let feature_span = columns[0]
        .span()
        .ok_or_else(|| Error::Length("transformed panel is empty".into()))?;
    let target_span = target
        .span()
        .ok_or_else(|| Error::Length("target is empty".into()))?;
    let common = feature_span.intersect(&target_span);
    let months = common.map_or(0, |c| c.len());
    if months < MIN_OVERLAP {
        return Err(Error::InsufficientOverlap {
            months,
            required: MIN_OVERLAP,
        });
    }
    let common = common.expect("overlap checked");
    let sliced: Vec<Vec<T>> = columns
        .iter()
        .map(|c| c.slice(&common).map(|s| s.values))
        .collect::<Result<_>>()?;
    let mut dataset = AlignedDataset::new(
        Matrix::from_columns(&sliced)?,
        target.slice(&common)?.values,
        common,
        panel.terms.clone(),
    )?;
    if spec.standardize {
        let window = match training_window {
            Some(w) => w.intersect(&common).ok_or_else(|| {
                Error::InvalidSpan(format!("training window {w} outside dataset span {common}"))
            })?,
            None => common,
        };
        dataset.standardize(&window)?;
    }
    Ok(dataset)
}
