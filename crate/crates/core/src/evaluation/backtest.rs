use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{LossKind, LossPanel};
use crate::benchmarks::{fit_ahar, fit_garch_family, AharParams, GarchFit, GarchFitOptions, GarchModel, AHAR_FLOOR, AHAR_LAGS};
use crate::data::FilterData;
use crate::error::{Error, Result};
use crate::inference::{fit_mem, Estimator, FitOptions, MemFit, MemSpec};
use crate::timeseries::PanelSeries;

/// Rolling one-step-ahead design: refit on the last `window` days, then
/// forecast each of the next `stride` days.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BacktestPlan {
    pub window: usize,
    pub stride: usize,
    #[serde(default = "one")]
    pub horizon: usize,
}

fn one() -> usize {
    1
}

impl Default for BacktestPlan {
    fn default() -> Self {
        BacktestPlan { window: 3000, stride: 42, horizon: 1 }
    }
}

impl BacktestPlan {
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.horizon != 1 {
            return Err(Error::invalid(format!("only one-step-ahead forecasts are supported (horizon {})", self.horizon)));
        }
        if self.window == 0 || self.stride == 0 {
            return Err(Error::invalid("window and stride must be positive"));
        }
        if self.window + self.stride > n {
            return Err(Error::invalid(format!(
                "window {} + stride {} exceeds the sample length {n}",
                self.window, self.stride
            )));
        }
        Ok(())
    }

    /// Number of refits; a shorter last stride is kept.
    pub fn refits(&self, n: usize) -> usize {
        (n.saturating_sub(self.window)).div_ceil(self.stride)
    }
}

/// A model that can be refitted on a window.
pub trait Forecaster: Sync {
    fn label(&self) -> String;

    /// Macro lag count the model's inputs need.
    fn macro_k(&self) -> Option<usize> {
        None
    }

    fn fit(&self, window: &FilterData) -> Result<Box<dyn FittedForecaster>>;
}

/// Parameters frozen at a refit, together with the window constants.
pub trait FittedForecaster: Send + Sync {
    /// Volatility forecasts for days `from..data.len()`; the forecast for
    /// day `i` may use days `< i` only.
    fn forecast(&self, data: &FilterData, from: usize) -> Result<Vec<f64>>;
}

impl FittedForecaster for MemFit {
    fn forecast(&self, data: &FilterData, from: usize) -> Result<Vec<f64>> {
        let path = self.params.path(data, self.level)?;
        Ok(path.mu[from..].to_vec())
    }
}

impl FittedForecaster for GarchFit {
    fn forecast(&self, data: &FilterData, from: usize) -> Result<Vec<f64>> {
        Ok(self.vol_path(data)?.split_off(from))
    }
}

impl FittedForecaster for AharParams {
    fn forecast(&self, data: &FilterData, from: usize) -> Result<Vec<f64>> {
        if from < AHAR_LAGS {
            return Err(Error::invalid("AHAR forecasts need 22 days of history"));
        }
        Ok((from..data.len()).map(|i| self.fitted(&data.x, &data.r, i).max(AHAR_FLOOR)).collect())
    }
}

/// The models of the comparison set as forecasters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum ModelChoice {
    Mem {
        spec: MemSpec,
        estimator: Estimator,
        #[serde(default)]
        options: FitOptions,
    },
    Ahar,
    Garch {
        model: GarchModel,
    },
}

impl ModelChoice {
    pub fn id(&self) -> crate::inference::ModelId {
        match self {
            ModelChoice::Mem { spec, .. } => spec.id(),
            ModelChoice::Ahar => crate::inference::ModelId::Ahar,
            ModelChoice::Garch { model } => model.id(),
        }
    }
}

impl Forecaster for ModelChoice {
    fn label(&self) -> String {
        self.id().to_string()
    }

    fn macro_k(&self) -> Option<usize> {
        match self {
            ModelChoice::Mem { spec, .. } => spec.macro_k(),
            ModelChoice::Ahar => None,
            ModelChoice::Garch { model } => model.macro_k(),
        }
    }

    fn fit(&self, window: &FilterData) -> Result<Box<dyn FittedForecaster>> {
        Ok(match self {
            ModelChoice::Mem { spec, estimator, options } => Box::new(fit_mem(spec, window, *estimator, None, options)?),
            ModelChoice::Ahar => Box::new(fit_ahar(window)?.params),
            ModelChoice::Garch { model } => Box::new(fit_garch_family(window, *model, &GarchFitOptions::default())?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRecord {
    pub date: NaiveDate,
    pub model: String,
    /// Refit window the forecast belongs to.
    pub window_id: usize,
    /// Window whose parameters produced it (earlier when carried forward).
    pub fitted_window: usize,
    pub forecast: f64,
    pub realized: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestEvent {
    pub model: String,
    pub window_id: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestOutput {
    pub plan: BacktestPlan,
    pub refits: usize,
    /// Models with forecasts on every out-of-sample day.
    pub models: Vec<String>,
    pub dropped: Vec<String>,
    pub records: Vec<ForecastRecord>,
    pub events: Vec<BacktestEvent>,
}

impl BacktestOutput {
    pub fn forecasts_of(&self, model: &str) -> Vec<&ForecastRecord> {
        self.records.iter().filter(|r| r.model == model).collect()
    }

    /// Per-day losses of the kept models against realized volatility.
    pub fn loss_panel(&self, kind: LossKind) -> Result<LossPanel> {
        let first = self.models.first().ok_or_else(|| Error::invalid("backtest kept no models"))?;
        let days: Vec<&ForecastRecord> = self.forecasts_of(first);
        let dates: Vec<NaiveDate> = days.iter().map(|r| r.date).collect();
        let mut losses = Vec::with_capacity(self.models.len());
        for m in &self.models {
            let recs = self.forecasts_of(m);
            if recs.len() != dates.len() {
                return Err(Error::invalid(format!("model {m} has {} forecasts, expected {}", recs.len(), dates.len())));
            }
            let row = recs
                .iter()
                .map(|r| {
                    kind.eval(r.realized, r.forecast)
                        .map_err(|e| Error::invalid(format!("{m} on {}: {e}", r.date)))
                })
                .collect::<Result<Vec<f64>>>()?;
            losses.push(row);
        }
        LossPanel::new(dates, self.models.clone(), kind, losses)
    }
}

/// Refit every model on each window and forecast the following stride,
/// conditioning on realized data as it arrives. A failed refit reuses the
/// last successful parameters; a model with no successful fit before a
/// failure is dropped.
pub fn rolling_backtest(series: &PanelSeries, plan: &BacktestPlan, models: &[&dyn Forecaster]) -> Result<BacktestOutput> {
    let n = series.len();
    plan.validate(n)?;
    if models.is_empty() {
        return Err(Error::invalid("backtest needs at least one model"));
    }
    let refits = plan.refits(n);
    let mut out = BacktestOutput {
        plan: *plan,
        refits,
        models: vec![],
        dropped: vec![],
        records: vec![],
        events: vec![],
    };
    for model in models {
        let label = model.label();
        let data = FilterData::from_series(series, model.macro_k())?;
        let bounds = |w: usize| {
            let ws = w * plan.stride;
            (ws, ws + plan.window, (ws + plan.window + plan.stride).min(n))
        };
        let fits: Vec<Result<Box<dyn FittedForecaster>>> = (0..refits)
            .into_par_iter()
            .map(|w| {
                let (ws, we, _) = bounds(w);
                model.fit(&data.slice(ws..we))
            })
            .collect();

        let mut last: Option<(usize, &dyn FittedForecaster)> = None;
        let mut records = Vec::new();
        let mut dropped = false;
        for (w, fit) in fits.iter().enumerate() {
            let (ws, we, end) = bounds(w);
            let slice = data.slice(ws..end);
            let mut attempt = match fit {
                Ok(f) => f.forecast(&slice, we - ws).map(|v| (w, v)),
                Err(e) => Err(Error::invalid(e.to_string())),
            };
            if let Err(e) = &attempt {
                let msg = format!("refit failed: {e}");
                log::warn!("{label}, window {w}: {msg}");
                out.events.push(BacktestEvent { model: label.clone(), window_id: w, message: msg });
                attempt = match last {
                    Some((lw, f)) => f.forecast(&slice, we - ws).map(|v| (lw, v)),
                    None => Err(Error::invalid("no earlier fit to carry forward")),
                };
                match &attempt {
                    Ok((lw, _)) => out.events.push(BacktestEvent {
                        model: label.clone(),
                        window_id: w,
                        message: format!("carried parameters from window {lw}"),
                    }),
                    Err(e) => {
                        log::warn!("{label} dropped from the backtest: {e}");
                        out.events.push(BacktestEvent {
                            model: label.clone(),
                            window_id: w,
                            message: format!("model dropped: {e}"),
                        });
                        dropped = true;
                        break;
                    }
                }
            }
            let (fitted_window, fc) = attempt?;
            if let Ok(f) = fit {
                if fitted_window == w {
                    last = Some((w, f.as_ref()));
                }
            }
            for (k, v) in fc.into_iter().enumerate() {
                let day = we + k;
                records.push(ForecastRecord {
                    date: data.dates[day],
                    model: label.clone(),
                    window_id: w,
                    fitted_window,
                    forecast: v,
                    realized: data.x[day],
                });
            }
        }
        if dropped {
            out.dropped.push(label);
        } else {
            out.models.push(label);
            out.records.extend(records);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn refit_arithmetic() {
        let p = BacktestPlan { window: 3000, stride: 42, horizon: 1 };
        assert_eq!(p.refits(3084), 2);
        assert_eq!(p.refits(3085), 3);
        assert!(p.validate(3041).is_err());
        assert!(p.validate(3042).is_ok());
        assert!(BacktestPlan { horizon: 2, ..p }.validate(4000).is_err());
    }
}
