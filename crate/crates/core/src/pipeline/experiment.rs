//! Config-file driven runs: one TOML document fixes the data, the fold plan,
//! every model setting and the root seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    build_category_itacs, build_itac, correlation_report, stage_one_fit, stage_two_forecast,
    BuildSettings, CorrelationMatrix, DfmSettings, EvalReport, IndicatorSeries, PcaSettings,
    StageOne, StageTwoOptions,
};
use crate::error::{Error, Result};
use crate::evalx::{grid_search, make_folds, FoldPlan, GridSpec, ModelFamily, PlanSpec, SearchBase, SearchResult};
use crate::ingest::{
    assemble_panel, fetch_all, parse_raw_series, parse_time_series, slug, EndpointConfig, TermPanel,
    Variant, Vocabulary, DEFAULT_GEO,
};
use crate::neural::{AnnConfig, RnnConfig};
use crate::select::{Criterion, Direction, SpikeSlabConfig};
use crate::series::{Month, MonthRange, TimeSeries};
use crate::transform::{align, TransformSpec};

pub const FORMAT_VERSION: u32 = 1;

/// How target and indicator level files become growth rates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    /// Percent change over twelve months.
    #[default]
    Yoy,
    /// Percent change over one month.
    Mom,
    /// Files already hold the series to model.
    None,
}

impl Growth {
    pub fn apply(self, levels: &TimeSeries<f64>, name: &str) -> Result<TimeSeries<f64>> {
        let lag = match self {
            Growth::Yoy => 12,
            Growth::Mom => 1,
            Growth::None => return Ok(levels.clone()),
        };
        if levels.len() <= lag {
            return Err(Error::Length(format!(
                "'{name}' has {} months, growth needs more than {lag}",
                levels.len()
            )));
        }
        let v = &levels.values;
        let mut out = Vec::with_capacity(v.len() - lag);
        for t in lag..v.len() {
            if !(v[t - lag] > 0.0) {
                return Err(Error::DegenerateSeries {
                    name: Some(name.to_string()),
                    reason: format!("non-positive level at {}", levels.period_start(t - lag)),
                });
            }
            out.push(100.0 * (v[t] / v[t - lag] - 1.0));
        }
        Ok(TimeSeries::monthly(levels.start.offset(lag as i32), out))
    }
}

fn default_geo() -> String {
    DEFAULT_GEO.to_string()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub start: Month,
    pub end: Month,
    /// One `<slug>.csv` per vocabulary term.
    pub trends_dir: PathBuf,
    /// Replaces the bundled vocabulary.
    #[serde(default)]
    pub vocabulary: Option<PathBuf>,
    #[serde(default = "default_geo")]
    pub geo: String,
    /// Falls back to the environment when absent.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub consumption: PathBuf,
    pub commerce: PathBuf,
    pub employment: PathBuf,
    pub consumer_credit: PathBuf,
    pub mortgage_credit: PathBuf,
    pub cpi: PathBuf,
    #[serde(default)]
    pub growth: Growth,
}

fn default_folds() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSection {
    pub start: Month,
    pub end: Month,
    pub train_end: Month,
    pub validation_end: Month,
    #[serde(default = "default_folds")]
    pub k: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    pub threads: Option<usize>,
    /// Per-family grids keyed `pca`, `dfm`, `ann`, `rnn`; missing families
    /// use the published ranges.
    pub grids: BTreeMap<String, GridSpec>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageOneSection {
    pub direction: Direction,
    pub criterion: Criterion,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StageTwoSection {
    /// Construction used for the per-category indices.
    pub method: ModelFamily,
    pub variant: Variant,
    pub horizon: usize,
    pub gw_window: usize,
    pub inclusion_threshold: f64,
    pub spike_slab: SpikeSlabConfig,
}

impl Default for StageTwoSection {
    fn default() -> Self {
        let o = StageTwoOptions::default();
        StageTwoSection {
            method: ModelFamily::Pca,
            variant: Variant::Itacons,
            horizon: o.horizon,
            gw_window: o.gw_window,
            inclusion_threshold: o.inclusion_threshold,
            spike_slab: o.spike_slab,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: PathBuf::from("out") }
    }
}

/// Versioned run configuration. Relative paths resolve against the config
/// file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub format_version: u32,
    #[serde(default)]
    pub seed: u64,
    pub data: DataSection,
    pub targets: TargetSection,
    pub plan: PlanSection,
    #[serde(default)]
    pub transform: TransformSpec,
    #[serde(default)]
    pub pca: PcaSettings,
    #[serde(default)]
    pub dfm: DfmSettings,
    #[serde(default)]
    pub ann: AnnConfig,
    #[serde(default)]
    pub rnn: RnnConfig,
    #[serde(default)]
    pub search: SearchSection,
    #[serde(default)]
    pub stage_one: StageOneSection,
    #[serde(default)]
    pub stage_two: StageTwoSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let config: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if config.format_version != FORMAT_VERSION {
            return Err(Error::Config(format!(
                "format_version {} is not supported (expected {FORMAT_VERSION})",
                config.format_version
            )));
        }
        for family in config.search.grids.keys() {
            family.parse::<ModelFamily>()?;
        }
        config.ann.validate()?;
        config.rnn.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FetchSummary {
    pub written: Vec<PathBuf>,
    /// `(term, error)` for terms that could not be fetched.
    pub failed: Vec<(String, String)>,
}

/// A loaded configuration bound to its base directory.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: Config,
    base: PathBuf,
    vocabulary: Vocabulary,
}

const MACRO: [&str; 4] = ["employment", "consumer_credit", "mortgage_credit", "cpi"];

impl Experiment {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::new(Config::parse(&text)?, base)
    }

    pub fn new(config: Config, base: impl Into<PathBuf>) -> Result<Self> {
        let base = base.into();
        let vocabulary = match &config.data.vocabulary {
            Some(p) => {
                let p = resolve(&base, p);
                Vocabulary::parse(&std::fs::read(&p).map_err(|e| Error::io(&p, e))?)?
            }
            None => Vocabulary::shipped(),
        };
        Ok(Experiment {
            config,
            base,
            vocabulary,
        })
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.config.seed = seed;
        self
    }

    pub fn with_geo(mut self, geo: impl Into<String>) -> Self {
        self.config.data.geo = geo.into();
        self
    }

    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocabulary
    }

    pub fn path(&self, p: &Path) -> PathBuf {
        resolve(&self.base, p)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.path(&self.config.output.dir)
    }

    pub fn data_span(&self) -> Result<MonthRange> {
        MonthRange::new(self.config.data.start, self.config.data.end)
    }

    pub fn folds(&self) -> Result<FoldPlan> {
        let p = &self.config.plan;
        make_folds(
            &MonthRange::new(p.start, p.end).map_err(|e| Error::Plan(e.to_string()))?,
            &PlanSpec {
                train_end: p.train_end,
                validation_end: p.validation_end,
                k: p.k,
            },
        )
    }

    /// Reads every vocabulary term from the trends directory.
    pub fn panel(&self) -> Result<TermPanel> {
        let dir = self.path(&self.config.data.trends_dir);
        let mut series = Vec::with_capacity(self.vocabulary.entries.len());
        for entry in &self.vocabulary.entries {
            let file = dir.join(format!("{}.csv", slug(&entry.term)));
            let bytes = std::fs::read(&file).map_err(|e| Error::io(&file, e))?;
            series.push(parse_raw_series(&bytes)?.with_term(entry.term.clone(), Some(entry.category)));
        }
        assemble_panel(&series, self.data_span()?)
    }

    /// A target or macro file after the configured growth transform.
    /// Names: `consumption`, `commerce`, `employment`, `consumer_credit`,
    /// `mortgage_credit`, `cpi`.
    pub fn series(&self, name: &str) -> Result<TimeSeries<f64>> {
        let t = &self.config.targets;
        let file = match name {
            "consumption" => &t.consumption,
            "commerce" => &t.commerce,
            "employment" => &t.employment,
            "consumer_credit" => &t.consumer_credit,
            "mortgage_credit" => &t.mortgage_credit,
            "cpi" => &t.cpi,
            other => return Err(Error::Config(format!("unknown series '{other}'"))),
        };
        let file = self.path(file);
        let levels = parse_time_series::<f64>(&std::fs::read(&file).map_err(|e| Error::io(&file, e))?)?;
        t.growth.apply(&levels, name)
    }

    /// The target an index variant tracks.
    pub fn target_for(&self, variant: Variant) -> Result<TimeSeries<f64>> {
        self.series(match variant {
            Variant::Itacons => "consumption",
            Variant::Itacome => "commerce",
        })
    }

    pub fn build_settings(&self) -> Result<BuildSettings> {
        let c = &self.config;
        Ok(BuildSettings {
            transform: c.transform.clone(),
            folds: self.folds()?,
            pca: c.pca.clone(),
            dfm: c.dfm.clone(),
            ann: c.ann.clone(),
            rnn: c.rnn.clone(),
            seed: c.seed,
        })
    }

    pub fn build(&self, method: ModelFamily, variant: Variant) -> Result<IndicatorSeries<f64>> {
        build_itac(
            &self.panel()?,
            &self.vocabulary,
            variant,
            method,
            &self.target_for(variant)?,
            &self.build_settings()?,
        )
    }

    /// Per-category indices for the stage-two evaluation.
    pub fn category_itacs(&self) -> Result<BTreeMap<String, IndicatorSeries<f64>>> {
        let s = &self.config.stage_two;
        build_category_itacs(
            &self.panel()?,
            &self.vocabulary,
            s.variant,
            s.method,
            &self.series("consumption")?,
            &self.build_settings()?,
        )
    }

    pub fn stage_one(&self) -> Result<StageOne<f64>> {
        let indicators = MACRO
            .iter()
            .map(|n| Ok((n.to_string(), self.series(n)?)))
            .collect::<Result<Vec<_>>>()?;
        stage_one_fit(
            &indicators,
            &self.series("commerce")?,
            &self.folds()?.estimation(),
            self.config.stage_one.direction,
            self.config.stage_one.criterion,
        )
    }

    pub fn stage_two_options(&self) -> StageTwoOptions {
        let s = &self.config.stage_two;
        StageTwoOptions {
            horizon: s.horizon,
            gw_window: s.gw_window,
            inclusion_threshold: s.inclusion_threshold,
            spike_slab: s.spike_slab.clone(),
        }
    }

    pub fn evaluate(&self) -> Result<EvalReport> {
        let stage_one = self.stage_one()?;
        stage_two_forecast(
            &stage_one.xbeta,
            &self.category_itacs()?,
            &self.series("consumption")?,
            &self.folds()?,
            &self.stage_two_options(),
            self.seed(),
        )
    }

    pub fn search(&self, method: ModelFamily, variant: Variant) -> Result<SearchResult> {
        let folds = self.folds()?;
        let panel = self.panel()?.for_variant(&self.vocabulary, variant)?;
        let data = align(&panel, &self.target_for(variant)?, &self.config.transform, Some(&folds.training))?;
        let grid = self
            .config
            .search
            .grids
            .iter()
            .find(|(k, _)| k.parse::<ModelFamily>().ok() == Some(method))
            .map(|(_, g)| g.clone())
            .unwrap_or_else(|| GridSpec::published(method));
        let base = SearchBase {
            pca_basis: self.config.pca.basis,
            em: self.config.dfm.em(),
            ann: self.config.ann.clone(),
            rnn: self.config.rnn.clone(),
            threads: self.config.search.threads,
        };
        grid_search(method, &grid, &folds, &data, &base, self.seed())
    }

    /// Both index variants against the targets and macro indicators.
    pub fn correlations(&self, method: ModelFamily) -> Result<CorrelationMatrix> {
        let mut series = Vec::new();
        for v in [Variant::Itacons, Variant::Itacome] {
            series.push((v.to_string(), self.build(method, v)?.values));
        }
        for n in ["consumption", "commerce"].into_iter().chain(MACRO) {
            series.push((n.to_string(), self.series(n)?));
        }
        correlation_report(&series)
    }

    /// Downloads every vocabulary term into the trends directory.
    pub fn fetch(&self) -> Result<FetchSummary> {
        let d = &self.config.data;
        let endpoint = match &d.endpoint {
            Some(url) => EndpointConfig::new(url.clone()),
            None => EndpointConfig::from_env()?,
        };
        let mut endpoint = endpoint.with_geo(d.geo.clone());
        if let Some(cache) = &d.cache_dir {
            endpoint = endpoint.with_cache_dir(self.path(cache));
        }
        let dir = self.path(&d.trends_dir);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let terms: Vec<String> = self.vocabulary.entries.iter().map(|e| e.term.clone()).collect();
        let mut summary = FetchSummary::default();
        for (term, result) in terms.iter().zip(fetch_all(&terms, &self.data_span()?, &endpoint)) {
            match result {
                Ok(series) => {
                    let file = dir.join(format!("{}.csv", slug(term)));
                    std::fs::write(&file, series.to_csv()).map_err(|e| Error::io(&file, e))?;
                    summary.written.push(file);
                }
                Err(e) => summary.failed.push((term.clone(), e.to_string())),
            }
        }
        Ok(summary)
    }
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
format_version = 1
[data]
start = "2007-01"
end = "2024-12"
trends_dir = "trends"
[targets]
consumption = "c.csv"
commerce = "m.csv"
employment = "e.csv"
consumer_credit = "cc.csv"
mortgage_credit = "mc.csv"
cpi = "p.csv"
[plan]
start = "2008-01"
end = "2024-10"
train_end = "2014-08"
validation_end = "2022-05"
"#;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = Config::parse(MINIMAL).unwrap();
        assert_eq!(c.plan.k, 5);
        assert_eq!(c.data.geo, "PE");
        assert_eq!(c.targets.growth, Growth::Yoy);
        assert_eq!(c.dfm.factors, 4);
        assert_eq!(Config::parse(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_and_versions_rejected() {
        let extra = MINIMAL.replace("[plan]", "[plan]\nbogus = 1");
        assert!(matches!(Config::parse(&extra), Err(Error::Config(_))));
        let top = format!("colour = \"red\"\n{MINIMAL}");
        assert!(matches!(Config::parse(&top), Err(Error::Config(_))));
        let v2 = MINIMAL.replace("format_version = 1", "format_version = 2");
        assert!(matches!(Config::parse(&v2), Err(Error::Config(_))));
        let bad_net = format!("{MINIMAL}[ann]\nneurons = 1\n");
        assert!(matches!(Config::parse(&bad_net), Err(Error::Config(_))));
    }

    #[test]
    fn growth_rates() {
        let levels = TimeSeries::monthly("2020-01".parse().unwrap(), (0..14).map(|i| 100.0 + i as f64).collect());
        let yoy = Growth::Yoy.apply(&levels, "x").unwrap();
        assert_eq!(yoy.start.to_string(), "2021-01");
        assert_eq!(yoy.len(), 2);
        assert!((yoy.values[0] - 12.0).abs() < 1e-12);
        let mom = Growth::Mom.apply(&levels, "x").unwrap();
        assert!((mom.values[0] - 1.0).abs() < 1e-12);
        let short = TimeSeries::monthly("2020-01".parse().unwrap(), vec![1.0; 12]);
        assert!(matches!(Growth::Yoy.apply(&short, "x"), Err(Error::Length(_))));
    }
}
