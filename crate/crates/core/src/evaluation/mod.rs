//! Forecast losses, residual diagnostics, the Model Confidence Set and the
//! rolling out-of-sample harness.

mod backtest;
mod longrun;
mod mcs;

pub use backtest::{
    rolling_backtest, BacktestEvent, BacktestOutput, BacktestPlan, FittedForecaster, ForecastRecord, Forecaster,
    ModelChoice,
};
pub use longrun::{aggregate_tau_monthly, pearson, tau_correlations, TauCorrelation, TauSeries};
pub use mcs::{default_block_len, mcs, BootstrapSettings, McsElimination, McsResult};

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// `proxy / fc - ln(proxy / fc) - 1`, zero iff `fc == proxy`.
pub fn qlike(proxy: f64, fc: f64) -> Result<f64> {
    if !(proxy > 0.0 && fc > 0.0 && proxy.is_finite() && fc.is_finite()) {
        return Err(Error::invalid(format!("QLIKE needs positive inputs (proxy {proxy}, forecast {fc})")));
    }
    let q = proxy / fc;
    Ok((q - q.ln() - 1.0).max(0.0))
}

pub fn mse(proxy: f64, fc: f64) -> f64 {
    (proxy - fc).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    Qlike,
    Mse,
}

impl LossKind {
    pub fn eval(self, proxy: f64, fc: f64) -> Result<f64> {
        match self {
            LossKind::Qlike => qlike(proxy, fc),
            LossKind::Mse => Ok(mse(proxy, fc)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::Qlike => "QLIKE",
            LossKind::Mse => "MSE",
        }
    }
}

/// Per-day losses of several models on common dates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossPanel {
    pub dates: Vec<NaiveDate>,
    pub models: Vec<String>,
    pub kind: LossKind,
    /// `losses[model][day]`.
    pub losses: Vec<Vec<f64>>,
}

/// Mean losses over one calendar year, or over the full sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanLossRow {
    /// The year, or `"Full"`.
    pub label: String,
    pub days: usize,
    pub means: Vec<f64>,
}

impl LossPanel {
    pub fn new(dates: Vec<NaiveDate>, models: Vec<String>, kind: LossKind, losses: Vec<Vec<f64>>) -> Result<Self> {
        if models.len() != losses.len() {
            return Err(Error::invalid(format!("{} model names for {} loss rows", models.len(), losses.len())));
        }
        for (m, row) in models.iter().zip(&losses) {
            if row.len() != dates.len() {
                return Err(Error::invalid(format!("model {m} has {} losses for {} dates", row.len(), dates.len())));
            }
            if let Some(v) = row.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
                return Err(Error::invalid(format!("model {m} has an invalid loss {v}")));
            }
        }
        Ok(LossPanel { dates, models, kind, losses })
    }

    pub fn n_models(&self) -> usize {
        self.models.len()
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn mean_losses(&self) -> Vec<f64> {
        self.losses.iter().map(|r| r.iter().sum::<f64>() / r.len().max(1) as f64).collect()
    }

    /// One row per calendar year in date order, then a `Full` row.
    pub fn mean_by_year(&self) -> Vec<MeanLossRow> {
        let mut rows = Vec::new();
        let mut i = 0;
        while i < self.dates.len() {
            let y = self.dates[i].year();
            let start = i;
            while i < self.dates.len() && self.dates[i].year() == y {
                i += 1;
            }
            let means = self.losses.iter().map(|r| r[start..i].iter().sum::<f64>() / (i - start) as f64).collect();
            rows.push(MeanLossRow { label: y.to_string(), days: i - start, means });
        }
        rows.push(MeanLossRow { label: "Full".into(), days: self.n_days(), means: self.mean_losses() });
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LjungBox {
    pub lag: usize,
    pub statistic: f64,
    pub p_value: f64,
}

/// `Q = N (N + 2) sum_{j <= lag} rho_j^2 / (N - j)` against a chi-square with
/// `lag` degrees of freedom.
pub fn ljung_box(series: &[f64], lag: usize) -> Result<LjungBox> {
    let n = series.len();
    if lag == 0 || n <= lag {
        return Err(Error::invalid(format!("Ljung-Box needs more than {lag} observations, got {n}")));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let dev: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = dev.iter().map(|d| d * d).sum();
    if !(c0 > 0.0) || !c0.is_finite() {
        return Err(Error::invalid("Ljung-Box on a constant series"));
    }
    let nf = n as f64;
    let mut q = 0.0;
    for j in 1..=lag {
        let cj: f64 = dev[j..].iter().zip(&dev[..n - j]).map(|(a, b)| a * b).sum();
        let rho = cj / c0;
        q += rho * rho / (nf - j as f64);
    }
    q *= nf * (nf + 2.0);
    let chi = ChiSquared::new(lag as f64).map_err(|e| Error::invalid(e.to_string()))?;
    Ok(LjungBox { lag, statistic: q, p_value: (1.0 - chi.cdf(q)).clamp(0.0, 1.0) })
}

/// Ljung-Box rows at the reporting lags 5, 10 and 20 (lags that do not fit
/// the sample are skipped).
pub fn ljung_box_table(series: &[f64]) -> Result<Vec<LjungBox>> {
    [5, 10, 20]
        .iter()
        .filter(|&&l| l < series.len())
        .map(|&l| ljung_box(series, l))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn loss_values() {
        assert_eq!(qlike(10.0, 10.0).unwrap(), 0.0);
        assert_abs_diff_eq!(qlike(12.0, 10.0).unwrap(), 0.017678, epsilon = 1e-6);
        assert_abs_diff_eq!(qlike(10.0, 12.0).unwrap(), 0.0156549, epsilon = 1e-6);
        assert!(qlike(0.0, 1.0).is_err());
        assert!(qlike(1.0, -1.0).is_err());
        assert_eq!(mse(12.0, 10.0), 4.0);
        assert_eq!(mse(0.0, 1.0), 1.0);
        assert_eq!(mse(3.0, 3.0), 0.0);
    }

    #[test]
    fn loss_panel_years() {
        let d = |y, m| NaiveDate::from_ymd_opt(y, m, 1).unwrap();
        let p = LossPanel::new(
            vec![d(2010, 11), d(2010, 12), d(2011, 1)],
            vec!["a".into(), "b".into()],
            LossKind::Mse,
            vec![vec![1.0, 3.0, 5.0], vec![0.0, 0.0, 3.0]],
        )
        .unwrap();
        let rows = p.mean_by_year();
        assert_eq!(rows.len(), 3);
        assert_eq!(rows[0].means, vec![2.0, 0.0]);
        assert_eq!(rows[1].label, "2011");
        assert_eq!(rows[2].means, vec![3.0, 1.0]);
        assert!(LossPanel::new(vec![d(2010, 1)], vec!["a".into()], LossKind::Mse, vec![vec![-1.0]]).is_err());
        assert!(LossPanel::new(vec![d(2010, 1)], vec!["a".into()], LossKind::Mse, vec![vec![]]).is_err());
    }

    #[test]
    fn ljung_box_hand_case() {
        // alternating series: rho_1 = -(n-1)/n, rho_2 = (n-2)/n
        let s = [1.0, -1.0, 1.0, -1.0];
        let lb = ljung_box(&s, 2).unwrap();
        let want = 4.0 * 6.0 * ((0.75f64).powi(2) / 3.0 + (0.5f64).powi(2) / 2.0);
        assert_abs_diff_eq!(lb.statistic, want, epsilon = 1e-12);
        assert!(ljung_box(&[2.0; 10], 3).is_err());
        assert!(ljung_box(&[1.0, 2.0], 2).is_err());
    }

    #[test]
    fn ljung_box_affine_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let t: Vec<f64> = s.iter().map(|v| 3.0 * v - 7.0).collect();
        let a = ljung_box(&s, 10).unwrap();
        let b = ljung_box(&t, 10).unwrap();
        assert_abs_diff_eq!(a.statistic, b.statistic, epsilon = 1e-9);
    }

    #[test]
    fn ljung_box_power() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut y = 0.0;
        let s: Vec<f64> = (0..5000)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                y = 0.5 * y + e;
                y
            })
            .collect();
        assert!(ljung_box(&s, 10).unwrap().p_value < 0.001);
    }
}
