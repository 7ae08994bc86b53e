use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use dmem::benchmarks::GarchModel;
use dmem::evaluation::{BacktestPlan, LossKind, ModelChoice};
use dmem::inference::{Estimator, FitOptions, MemModel, MemSpec, ModelId};
use dmem::mem::SimulationDesign;
use dmem::timeseries::{load_daily_csv, load_macro_csv, CsvSchema, MacroTransform, PanelSeries};

/// Everything a run needs. Parsed from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataConfig>,
    #[serde(default)]
    pub models: Vec<ModelEntry>,
    #[serde(default)]
    pub backtest: BacktestConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulationDesign>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub longrun: Option<LongrunConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub daily: PathBuf,
    #[serde(default = "CsvSchema::native")]
    pub schema: CsvSchema,
    #[serde(default, rename = "macro", skip_serializing_if = "Option::is_none")]
    pub macro_series: Option<MacroConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<NaiveDate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MacroConfig {
    pub path: PathBuf,
    #[serde(default = "default_period_column")]
    pub period_column: String,
    #[serde(default = "default_value_column")]
    pub value_column: String,
    #[serde(default)]
    pub transform: MacroTransform,
}

fn default_period_column() -> String {
    "period".into()
}

fn default_value_column() -> String {
    "value".into()
}

/// Error law behind a MEM's likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorLaw {
    Gamma,
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelEntry {
    pub id: String,
    /// Macro lags for mem-midas, gm and dagm.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorLaw>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub estimator: Option<Estimator>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exog: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BacktestConfig {
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_losses")]
    pub losses: Vec<LossKind>,
    #[serde(default = "default_replications")]
    pub replications: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub block_len: Option<usize>,
}

fn default_window() -> usize {
    BacktestPlan::default().window
}
fn default_stride() -> usize {
    BacktestPlan::default().stride
}
fn default_alpha() -> f64 {
    0.25
}
fn default_losses() -> Vec<LossKind> {
    vec![LossKind::Qlike, LossKind::Mse]
}
fn default_replications() -> usize {
    5000
}

impl Default for BacktestConfig {
    fn default() -> Self {
        BacktestConfig {
            window: default_window(),
            stride: default_stride(),
            alpha: default_alpha(),
            losses: default_losses(),
            replications: default_replications(),
            block_len: None,
        }
    }
}

impl BacktestConfig {
    pub fn plan(&self) -> BacktestPlan {
        BacktestPlan { window: self.window, stride: self.stride, horizon: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LongrunConfig {
    pub indices: Vec<IndexData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexData {
    pub name: String,
    pub data: DataConfig,
}

impl ModelEntry {
    pub fn model_id(&self) -> Result<ModelId> {
        Ok(self.id.parse::<ModelId>()?)
    }

    fn lags(&self, id: ModelId) -> Result<usize> {
        match self.k {
            Some(0) => bail!("model {id}: k must be positive"),
            Some(k) => Ok(k),
            None => bail!("model {id} needs the number of macro lags `k`"),
        }
    }

    /// The forecaster this entry describes.
    pub fn choice(&self) -> Result<ModelChoice> {
        let id = self.model_id()?;
        if !id.is_mem() && (self.error.is_some() || self.exog) {
            bail!("model {id}: `error` and `exog` apply to MEMs only");
        }
        if !id.needs_macro() && self.k.is_some() {
            bail!("model {id} takes no macro lags");
        }
        let fixed = |want: Estimator| -> Result<()> {
            match self.estimator {
                Some(e) if e != want => bail!("model {id} is estimated by {want}, not {e}"),
                _ => Ok(()),
            }
        };
        Ok(match id {
            ModelId::Amem | ModelId::ComponentMem | ModelId::MemMidas => {
                let model = match id {
                    ModelId::Amem => MemModel::Amem,
                    ModelId::ComponentMem => MemModel::ComponentMem,
                    _ => MemModel::MemMidas { k: self.lags(id)? },
                };
                let estimator = match (self.error, self.estimator) {
                    (_, Some(e @ (Estimator::Ols | Estimator::GaussianQml))) => bail!("model {id} cannot use estimator {e}"),
                    (Some(ErrorLaw::Lognormal), Some(e)) if e != Estimator::LognormalMl => {
                        bail!("model {id}: log-normal errors require the lognormal-ml estimator")
                    }
                    (Some(ErrorLaw::Gamma), Some(Estimator::LognormalMl)) => {
                        bail!("model {id}: Gamma errors use gamma-qml or gmm")
                    }
                    (_, Some(e)) => e,
                    (Some(ErrorLaw::Lognormal), None) => Estimator::LognormalMl,
                    _ => Estimator::GammaQml,
                };
                ModelChoice::Mem { spec: MemSpec { model, exog: self.exog }, estimator, options: FitOptions::default() }
            }
            ModelId::Ahar => {
                fixed(Estimator::Ols)?;
                ModelChoice::Ahar
            }
            ModelId::Gjr | ModelId::Rgarch | ModelId::Gm | ModelId::Dagm => {
                fixed(Estimator::GaussianQml)?;
                let model = match id {
                    ModelId::Gjr => GarchModel::Gjr,
                    ModelId::Rgarch => GarchModel::Rgarch,
                    ModelId::Gm => GarchModel::Gm { k: self.lags(id)? },
                    _ => GarchModel::Dagm { k: self.lags(id)? },
                };
                ModelChoice::Garch { model }
            }
        })
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("cannot parse the configuration")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    /// Checks every model entry and the backtest settings.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for m in &self.models {
            m.choice()?;
            if !seen.insert(m.id.as_str()) {
                bail!("model {} is listed twice", m.id);
            }
        }
        let b = &self.backtest;
        if !(b.alpha > 0.0 && b.alpha < 1.0) {
            bail!("backtest.alpha must be in (0, 1), got {}", b.alpha);
        }
        if b.replications == 0 || b.window == 0 || b.stride == 0 {
            bail!("backtest window, stride and replications must be positive");
        }
        if b.losses.is_empty() {
            bail!("backtest.losses is empty");
        }
        Ok(())
    }

    pub fn choices(&self) -> Result<Vec<ModelChoice>> {
        self.models.iter().map(ModelEntry::choice).collect()
    }
}

impl DataConfig {
    /// Loads the daily panel and attaches the macro series when configured.
    /// Relative paths resolve against `base`.
    pub fn load(&self, base: &Path) -> Result<PanelSeries> {
        let daily = base.join(&self.daily);
        let mut series = load_daily_csv(&daily, &self.schema).with_context(|| format!("loading {}", daily.display()))?;
        let report = series.load_report();
        if report.dropped_rows > 0 || report.resorted {
            log::warn!("{}: dropped {} rows with missing values, resorted: {}", daily.display(), report.dropped_rows, report.resorted);
        }
        if self.start.is_some() || self.end.is_some() {
            series = series.restrict(self.start, self.end)?;
        }
        if let Some(m) = &self.macro_series {
            let path = base.join(&m.path);
            let raw = load_macro_csv(&path, &m.period_column, &m.value_column, series.frequency())
                .with_context(|| format!("loading {}", path.display()))?;
            series = series.attach_macro(&raw, m.transform)?;
        }
        Ok(series)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FULL: &str = r#"
seed = 7
output_dir = "results"

[data]
daily = "spx.csv"
start = "2001-01-02"

[data.macro]
path = "ip.csv"
transform = "month-over-month-annualized-percent"

[[models]]
id = "amem"

[[models]]
id = "mem-midas"
k = 12
error = "lognormal"

[[models]]
id = "dagm"
k = 24

[backtest]
window = 3000
stride = 42
alpha = 0.1
losses = ["qlike"]

[simulate]
horizon = 500
error = { dist = "gamma", phi = 5.0 }
params = { model = "amem", level = 14.0, short = { alpha1 = 0.1, gamma1 = 0.1, beta1 = 0.7 } }
"#;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::from_toml(FULL).unwrap();
        assert_eq!(cfg.models.len(), 3);
        assert_eq!(cfg.backtest.replications, 5000);
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn model_entries_map_to_forecasters() {
        let cfg = RunConfig::from_toml(FULL).unwrap();
        let c = cfg.choices().unwrap();
        assert_eq!(c[1].id(), ModelId::MemMidas);
        assert!(matches!(c[1], ModelChoice::Mem { estimator: Estimator::LognormalMl, .. }));
        assert!(matches!(c[2], ModelChoice::Garch { model: GarchModel::Dagm { k: 24 } }));
    }

    #[test]
    fn bad_entries_are_rejected() {
        let with = |models: &str| RunConfig::from_toml(&format!("{models}\n"));
        let err = format!("{:#}", with("[[models]]\nid = \"egarch\"").unwrap_err());
        assert!(err.contains("unknown model id 'egarch'"), "{err}");
        assert!(with("[[models]]\nid = \"gm\"").is_err());
        assert!(with("[[models]]\nid = \"amem\"\nk = 3").is_err());
        assert!(with("[[models]]\nid = \"gjr\"\nestimator = \"ols\"").is_err());
        assert!(with("[[models]]\nid = \"amem\"\nerror = \"lognormal\"\nestimator = \"gmm\"").is_err());
        assert!(with("[[models]]\nid = \"amem\"\n[[models]]\nid = \"amem\"").is_err());
        assert!(with("colour = 3").is_err());
        assert!(with("[backtest]\nalpha = 1.5").is_err());
    }
}
