//! Flat daily inputs for the recursions, built once from a [`PanelSeries`].

use std::ops::Range;

use chrono::NaiveDate;

use crate::error::{Error, Result};
use crate::timeseries::{PanelSeries, PeriodKey};

#[derive(Debug, Clone, PartialEq)]
pub struct FilterData {
    pub dates: Vec<NaiveDate>,
    /// Realized volatility.
    pub x: Vec<f64>,
    /// Returns.
    pub r: Vec<f64>,
    /// Period ordinal of each day, starting at 0.
    pub period: Vec<usize>,
    pub period_keys: Vec<PeriodKey>,
    /// Per period: `X_{t-1}..X_{t-K}`.
    pub macro_lags: Option<Vec<Vec<f64>>>,
    pub z: Option<Vec<f64>>,
}

impl FilterData {
    /// `macro_k` requests `K` macro lags per period; the panel must carry a
    /// macro series covering them.
    pub fn from_series(series: &PanelSeries, macro_k: Option<usize>) -> Result<Self> {
        let macro_lags = match macro_k {
            None => None,
            Some(k) => {
                let m = series
                    .macro_series()
                    .ok_or_else(|| Error::invalid("model needs a macro series but none is attached"))?;
                let mut lags = Vec::with_capacity(series.periods().len());
                let mut missing = Vec::new();
                for p in series.periods() {
                    match m.lags(p.key, k) {
                        Ok(l) => lags.push(l),
                        Err(Error::MissingPeriods(mut v)) => missing.append(&mut v),
                        Err(e) => return Err(e),
                    }
                }
                if !missing.is_empty() {
                    missing.sort();
                    missing.dedup();
                    return Err(Error::MissingPeriods(missing));
                }
                Some(lags)
            }
        };
        Ok(FilterData {
            dates: series.dates(),
            x: series.rvol(),
            r: series.returns(),
            period: series.day_periods().to_vec(),
            period_keys: series.periods().iter().map(|p| p.key).collect(),
            macro_lags,
            z: series.exog().map(|z| z.to_vec()),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn mean_x(&self) -> f64 {
        self.x.iter().sum::<f64>() / self.x.len() as f64
    }

    pub fn lag_count(&self) -> Option<usize> {
        self.macro_lags.as_ref().and_then(|l| l.first()).map(|l| l.len())
    }

    pub fn has_zeros(&self) -> bool {
        self.x.iter().any(|&v| v == 0.0)
    }

    /// Days in `range`, with period ordinals rebased to the first kept day.
    pub fn slice(&self, range: Range<usize>) -> Self {
        let p0 = self.period[range.start];
        let p1 = self.period[range.end - 1] + 1;
        FilterData {
            dates: self.dates[range.clone()].to_vec(),
            x: self.x[range.clone()].to_vec(),
            r: self.r[range.clone()].to_vec(),
            period: self.period[range.clone()].iter().map(|p| p - p0).collect(),
            period_keys: self.period_keys[p0..p1].to_vec(),
            macro_lags: self.macro_lags.as_ref().map(|l| l[p0..p1].to_vec()),
            z: self.z.as_ref().map(|z| z[range].to_vec()),
        }
    }

    pub(crate) fn require_lags(&self, k: usize) -> Result<&[Vec<f64>]> {
        match &self.macro_lags {
            Some(l) if l.first().map(|v| v.len()) == Some(k) => Ok(l),
            Some(l) => Err(Error::invalid(format!(
                "data carries {} macro lags, model needs {k}",
                l.first().map_or(0, |v| v.len())
            ))),
            None => Err(Error::invalid(format!("model needs {k} macro lags; none prepared"))),
        }
    }
}
