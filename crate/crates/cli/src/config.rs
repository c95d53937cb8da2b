//! Run configuration: a TOML document plus `--set key=value` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use orf_core::data::{DatasetSchema, NamedColumn};
use orf_core::forest::ForestConfig;
use orf_core::nuisance::LearnerSpec;
use orf_core::synthetic::{CovariateDist, DgpSpec};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    #[default]
    Orf,
    Dml,
    Dmliv,
}

impl Estimator {
    pub fn name(self) -> &'static str {
        match self {
            Estimator::Orf => "orf",
            Estimator::Dml => "dml",
            Estimator::Dmliv => "dmliv",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream in a run is derived from it.
    #[serde(default)]
    pub seed: u64,
    /// Worker threads. Falls back to `ORF_THREADS`, then to all cores.
    #[serde(default)]
    pub threads: Option<usize>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub estimator: Estimator,
    /// Accept test points outside the observed feature range.
    #[serde(default)]
    pub extrapolate: bool,
    #[serde(default)]
    pub data: DataSection,
    #[serde(default)]
    pub forest: ForestConfig,
    #[serde(default)]
    pub nuisance: NuisanceSection,
    #[serde(default)]
    pub points: Option<PointsSection>,
    #[serde(default)]
    pub bootstrap: BootstrapSection,
    #[serde(default)]
    pub dml: DmlSection,
    #[serde(default)]
    pub policy: Option<PolicySection>,
    #[serde(default)]
    pub benchmark: BenchmarkSection,
}

fn default_output() -> PathBuf {
    PathBuf::from("orf-out")
}

/// Exactly one of `csv`, `scenario` or `dgp` names the data source.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub csv: Option<PathBuf>,
    pub columns: Option<Vec<NamedColumn>>,
    pub scenario: Option<String>,
    pub n: Option<usize>,
    /// Replaces the feature law of a named scenario.
    pub features: Option<CovariateDist>,
    pub dgp: Option<DgpSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceSection {
    /// Node-level learner; replaces `forest.node_learner` when given.
    #[serde(default)]
    pub node: Option<LearnerSpec>,
    /// Learner of the weighted local nuisance fit at each test point.
    #[serde(rename = "final", default = "default_final")]
    pub final_learner: LearnerSpec,
    /// Learner of the cross-fitted nuisances for `dml` and `dmliv`.
    #[serde(default = "default_cross_fit")]
    pub cross_fit: LearnerSpec,
}

fn default_final() -> LearnerSpec {
    LearnerSpec::lasso(0.01)
}

fn default_cross_fit() -> LearnerSpec {
    LearnerSpec::lasso(1.0)
}

impl Default for NuisanceSection {
    fn default() -> Self {
        Self { node: None, final_learner: default_final(), cross_fit: default_cross_fit() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsSection {
    pub values: Option<Vec<Vec<f64>>>,
    pub range: Option<PointRange>,
}

/// `count` evenly spaced values of feature `feature` from `start` to `stop`
/// inclusive; the remaining coordinates are taken from `fixed` in order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
    #[serde(default)]
    pub feature: usize,
    #[serde(default)]
    pub fixed: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapSection {
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub cluster: bool,
}

fn default_replicates() -> usize {
    100
}

fn default_level() -> f64 {
    0.95
}

impl Default for BootstrapSection {
    fn default() -> Self {
        Self { replicates: default_replicates(), level: default_level(), cluster: false }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmlSection {
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_level")]
    pub level: f64,
    #[serde(default)]
    pub instrument: Option<usize>,
    #[serde(default)]
    pub combine: bool,
}

fn default_folds() -> usize {
    2
}

impl Default for DmlSection {
    fn default() -> Self {
        Self { folds: default_folds(), level: default_level(), instrument: None, combine: false }
    }
}

/// A scalar applies to every day of the window; a list gives one value per day.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Levels {
    One(f64),
    Many(Vec<f64>),
}

impl Levels {
    pub fn to_vec(&self) -> Vec<f64> {
        match self {
            Levels::One(v) => vec![*v],
            Levels::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    /// Per-day effects; estimated with the forest at the test points when absent.
    #[serde(default)]
    pub slopes: Option<Vec<f64>>,
    pub outcome_level: Levels,
    #[serde(default = "zero_level")]
    pub treatment_level: Levels,
    pub lower: f64,
    pub upper: f64,
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_curve_points")]
    pub curve_points: usize,
}

fn zero_level() -> Levels {
    Levels::One(0.0)
}

fn default_grid_step() -> f64 {
    1e-3
}

fn default_curve_points() -> usize {
    101
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    #[serde(default = "default_scenarios")]
    pub scenarios: Vec<String>,
    #[serde(default = "default_benchmark_n")]
    pub n: usize,
    #[serde(default = "default_benchmark_replicates")]
    pub replicates: usize,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<Estimator>,
    /// Evaluation points per replicate, spread over the feature range.
    #[serde(default = "default_benchmark_points")]
    pub points: usize,
    /// Attach bootstrap intervals to the forest estimates so coverage is reported.
    #[serde(default)]
    pub intervals: bool,
}

fn default_scenarios() -> Vec<String> {
    orf_core::synthetic::scenarios::NAMES.iter().map(|s| s.to_string()).collect()
}

fn default_benchmark_n() -> usize {
    1000
}

fn default_benchmark_replicates() -> usize {
    3
}

fn default_estimators() -> Vec<Estimator> {
    vec![Estimator::Orf, Estimator::Dml]
}

fn default_benchmark_points() -> usize {
    11
}

impl Default for BenchmarkSection {
    fn default() -> Self {
        Self {
            scenarios: default_scenarios(),
            n: default_benchmark_n(),
            replicates: default_benchmark_replicates(),
            estimators: default_estimators(),
            points: default_benchmark_points(),
            intervals: false,
        }
    }
}

/// Reads `path`, applies `overrides` in order and deserializes the result.
/// Relative data paths are resolved against the directory of `path`.
pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut table: toml::Table =
        text.parse().map_err(|e| anyhow!("parsing config {}: {e}", path.display()))?;
    for item in overrides {
        apply_override(&mut table, item)?;
    }
    let mut cfg = from_table(table)?;
    if let Some(csv) = &cfg.data.csv {
        if csv.is_relative() {
            let base = path.parent().unwrap_or_else(|| Path::new(""));
            cfg.data.csv = Some(base.join(csv));
        }
    }
    Ok(cfg)
}

pub fn from_table(table: toml::Table) -> Result<RunConfig> {
    serde_path_to_error::deserialize(toml::Value::Table(table)).map_err(|e| {
        let path = e.path().to_string();
        let message = e.into_inner().to_string();
        let inner = message.lines().next().unwrap_or_default();
        if path == "." {
            anyhow!("invalid config: {inner}")
        } else {
            anyhow!("invalid config at `{path}`: {inner}")
        }
    })
}

/// Sets `section.key=value`. The value is parsed as a TOML value and taken
/// as a bare string when that fails.
pub fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item.split_once('=').ok_or_else(|| anyhow!("override `{item}` is not of the form key=value"))?;
    let key = key.trim();
    let raw = raw.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` has an empty segment");
    }
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, parents) = parts.split_last().expect("at least one segment");
    let mut node = table;
    for (depth, part) in parents.iter().enumerate() {
        let entry = node.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        node = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{}` is not a table", parts[..=depth].join(".")))?;
    }
    node.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn schema(&self) -> Result<DatasetSchema> {
        let columns = self.data.columns.clone().ok_or_else(|| anyhow!("data.columns is required with data.csv"))?;
        DatasetSchema::new(columns.into_iter().map(|c| (c.name, c.spec))).context("data.columns")
    }

    /// The forest settings with the node learner override and the derived seed applied.
    pub fn forest_config(&self) -> ForestConfig {
        let mut cfg = self.forest.clone();
        if let Some(node) = &self.nuisance.node {
            cfg.node_learner = node.clone();
        }
        cfg.seed = orf_core::rng::derive_seed(self.seed, "forest", 0);
        cfg
    }

    pub fn check_data_source(&self) -> Result<()> {
        let d = &self.data;
        let sources = [d.csv.is_some(), d.scenario.is_some(), d.dgp.is_some()].iter().filter(|&&s| s).count();
        if sources != 1 {
            bail!("data: set exactly one of `csv`, `scenario` or `dgp` (found {sources})");
        }
        if let Some(path) = &d.csv {
            if !path.is_file() {
                bail!("data.csv: file {} does not exist", path.display());
            }
        }
        if d.csv.is_some() && d.columns.is_none() {
            bail!("data.columns is required with data.csv");
        }
        if d.csv.is_none() && d.columns.is_some() {
            bail!("data.columns only applies to data.csv");
        }
        if d.scenario.is_some() && d.n.is_none() {
            bail!("data.n is required with data.scenario");
        }
        if d.scenario.is_none() && (d.n.is_some() || d.features.is_some()) {
            bail!("data.n and data.features only apply to data.scenario");
        }
        Ok(())
    }

    /// Test points from `[points]`, or `None` when the section is absent.
    pub fn test_points(&self) -> Result<Option<Vec<Vec<f64>>>> {
        let Some(section) = &self.points else { return Ok(None) };
        match (&section.values, &section.range) {
            (Some(values), None) => {
                if values.is_empty() {
                    bail!("points.values is empty");
                }
                Ok(Some(values.clone()))
            }
            (None, Some(r)) => {
                if r.count == 0 {
                    bail!("points.range.count must be positive");
                }
                if !(r.start.is_finite() && r.stop.is_finite()) {
                    bail!("points.range.start and points.range.stop must be finite");
                }
                if r.feature > r.fixed.len() {
                    bail!("points.range.feature = {} needs at least {} fixed coordinates", r.feature, r.feature);
                }
                let step = if r.count > 1 { (r.stop - r.start) / (r.count - 1) as f64 } else { 0.0 };
                let points = (0..r.count)
                    .map(|k| {
                        let v = if k + 1 == r.count && r.count > 1 { r.stop } else { r.start + step * k as f64 };
                        let mut x = r.fixed.clone();
                        x.insert(r.feature, v);
                        x
                    })
                    .collect();
                Ok(Some(points))
            }
            _ => bail!("points: set exactly one of `values` or `range`"),
        }
    }
}
