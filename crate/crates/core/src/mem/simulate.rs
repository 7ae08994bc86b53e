use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{amem_step, component_step, MeanPath, MemParams};
use crate::data::FilterData;
use crate::error::{Error, Result};
use crate::timeseries::{DayObs, Frequency, MacroTransform, PanelSeries, PeriodKey};

/// Unit-mean error distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dist", rename_all = "kebab-case")]
pub enum ErrorDist {
    /// `Gamma(phi, 1/phi)`: variance `1/phi`.
    Gamma { phi: f64 },
    /// `exp(N(-V/2, V))`: variance `exp(V) - 1`.
    LogNormal { v: f64 },
}

impl ErrorDist {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ErrorDist::Gamma { phi } if !(phi.is_finite() && phi > 0.0) => {
                Err(Error::invalid(format!("gamma precision phi = {phi} must be > 0")))
            }
            ErrorDist::LogNormal { v } if !(v.is_finite() && v >= 0.0) => {
                Err(Error::invalid(format!("log-normal variance V = {v} must be >= 0")))
            }
            _ => Ok(()),
        }
    }

    pub fn variance(&self) -> f64 {
        match *self {
            ErrorDist::Gamma { phi } => 1.0 / phi,
            ErrorDist::LogNormal { v } => v.exp_m1(),
        }
    }

    fn sampler(&self) -> Result<Sampler> {
        self.validate()?;
        Ok(match *self {
            ErrorDist::Gamma { phi } => Sampler::Gamma(
                Gamma::new(phi, 1.0 / phi).map_err(|e| Error::invalid(e.to_string()))?,
            ),
            ErrorDist::LogNormal { v } if v == 0.0 => Sampler::One,
            ErrorDist::LogNormal { v } => Sampler::LogNormal(
                LogNormal::new(-v / 2.0, v.sqrt()).map_err(|e| Error::invalid(e.to_string()))?,
            ),
        })
    }
}

enum Sampler {
    Gamma(Gamma<f64>),
    LogNormal(LogNormal<f64>),
    One,
}

impl Sampler {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Sampler::Gamma(g) => g.sample(rng),
            Sampler::LogNormal(l) => l.sample(rng),
            Sampler::One => 1.0,
        }
    }
}

/// `X_t = mean + rho (X_{t-1} - mean) + sigma e_t` for the simulated macro
/// driver of MEM-MIDAS.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MacroAr1 {
    pub mean: f64,
    pub rho: f64,
    pub sigma: f64,
}

impl Default for MacroAr1 {
    fn default() -> Self {
        MacroAr1 { mean: 0.0, rho: 0.9, sigma: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub params: MemParams,
    pub error: ErrorDist,
    /// Number of business days.
    pub horizon: usize,
    #[serde(default = "default_start")]
    pub start: NaiveDate,
    /// Starting `tau` for Component-MEM; defaults to `omega_tau / (1 - b*_tau)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau0: Option<f64>,
    #[serde(default, rename = "macro", skip_serializing_if = "Option::is_none")]
    pub macro_ar1: Option<MacroAr1>,
}

fn default_start() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 3).unwrap()
}

impl SimulationDesign {
    pub fn new(params: MemParams, error: ErrorDist, horizon: usize) -> Self {
        SimulationDesign { params, error, horizon, start: default_start(), tau0: None, macro_ar1: None }
    }
}

/// A simulated panel with the true errors and components behind it.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub series: PanelSeries,
    pub eps: Vec<f64>,
    pub path: MeanPath,
    /// First-day `tau` (Component-MEM) or level (AMEM) used by the recursion.
    pub init: f64,
    /// Macro lags per period, for MEM-MIDAS.
    pub macro_k: Option<usize>,
}

impl Simulation {
    /// The simulated panel in filter form, with macro lags when needed.
    pub fn filter_data(&self) -> Result<FilterData> {
        FilterData::from_series(&self.series, self.macro_k)
    }
}

fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// Draws errors, runs the recursion forward and emits `x = mu * eps` with
/// returns `r = x * eta`, `eta ~ N(0, 1)` independent of `eps`, so that the
/// sign of `r` is a fair coin.
pub fn simulate(design: &SimulationDesign, seed: u64) -> Result<Simulation> {
    design.params.validate()?;
    let sampler = design.error.sampler()?;
    let n = design.horizon;
    if n == 0 {
        return Err(Error::NoObservations);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates = business_days(design.start, n);

    let mut period = Vec::with_capacity(n);
    let mut keys: Vec<PeriodKey> = Vec::new();
    for d in &dates {
        let key = PeriodKey::of(*d, Frequency::Month);
        if keys.last() != Some(&key) {
            keys.push(key);
        }
        period.push(keys.len() - 1);
    }

    let mut raw_macro = None;
    let mut tau_period = Vec::new();
    let mut macro_k = None;
    if let MemParams::Midas { long, .. } = &design.params {
        let k = long.lag.k;
        macro_k = Some(k);
        let ar = design.macro_ar1.unwrap_or_default();
        let burn = 100 + k;
        let total = burn + keys.len();
        let mut values = Vec::with_capacity(total);
        let mut x = ar.mean;
        for _ in 0..total {
            let e: f64 = StandardNormal.sample(&mut rng);
            x = ar.mean + ar.rho * (x - ar.mean) + ar.sigma * e;
            values.push(x);
        }
        // the last K burn values sit in the K periods before the sample
        let mut first = keys[0];
        for _ in 0..k {
            first = first.prev();
        }
        let mut key = first;
        let mut raw = Vec::with_capacity(k + keys.len());
        for v in &values[burn - k..] {
            raw.push((key, *v));
            key = key.next();
        }
        for (t, _) in keys.iter().enumerate() {
            let lags: Vec<f64> = (1..=k).map(|j| raw[k + t - j].1).collect();
            tau_period.push(long.tau(&lags)?);
        }
        raw_macro = Some(raw);
    }

    let init = match (&design.params, design.tau0) {
        (MemParams::Amem { level, .. }, _) => *level,
        (MemParams::Component { .. }, Some(t)) => t,
        (MemParams::Component { long, .. }, None) => long.unconditional_level(),
        (MemParams::Midas { .. }, _) => f64::NAN,
    };

    let mut path = MeanPath::with_capacity(n);
    let mut eps = Vec::with_capacity(n);
    let mut days = Vec::with_capacity(n);
    let (mut tau, mut xi, mut mu) = (0.0, 1.0, 0.0);
    let (mut x_prev, mut neg_prev) = (0.0, false);
    for i in 0..n {
        match &design.params {
            MemParams::Amem { short, level } => {
                mu = if i == 0 { *level } else { amem_step(short, *level, mu, x_prev, neg_prev, 0.0) };
                tau = *level;
                xi = mu / level;
            }
            MemParams::Component { short, long } => {
                if i == 0 {
                    tau = init;
                    xi = 1.0;
                } else {
                    (tau, xi) = component_step(short, long, tau, xi, x_prev, neg_prev, 0.0);
                }
                mu = tau * xi;
            }
            MemParams::Midas { short, .. } => {
                tau = tau_period[period[i]];
                if i > 0 {
                    xi = short.step(xi, x_prev / tau, neg_prev, 0.0);
                }
                mu = tau * xi;
            }
        }
        let e = sampler.draw(&mut rng);
        let eta: f64 = StandardNormal.sample(&mut rng);
        let x = mu * e;
        path.push(i, x, tau, xi, mu)?;
        eps.push(e);
        let ret = x * eta;
        days.push(DayObs { date: dates[i], ret, rvol: x });
        x_prev = x;
        neg_prev = ret < 0.0;
    }

    let mut series = PanelSeries::from_days(days)?;
    if let Some(raw) = raw_macro {
        series = series.attach_macro(&raw, MacroTransform::Level)?;
    }
    Ok(Simulation { series, eps, path, init, macro_k })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mem::{amem_path, component_path, midas_path, LongRunComponentParams, MidasLongRunParams, ShortRunParams};
    use crate::midas::BetaLag;

    fn amem() -> MemParams {
        MemParams::Amem { short: ShortRunParams::new(0.2, 0.1, 0.7), level: 15.0 }
    }

    #[test]
    fn deterministic_under_seed() {
        let d = SimulationDesign::new(amem(), ErrorDist::Gamma { phi: 5.0 }, 500);
        let a = simulate(&d, 7).unwrap();
        let b = simulate(&d, 7).unwrap();
        assert_eq!(a.series, b.series);
        assert_eq!(a.eps, b.eps);
        assert_ne!(simulate(&d, 8).unwrap().eps, a.eps);
    }

    #[test]
    fn gamma_error_moments() {
        let d = SimulationDesign::new(
            MemParams::Amem { short: ShortRunParams::new(0.0, 0.0, 0.0), level: 1.0 },
            ErrorDist::Gamma { phi: 2.0 },
            1_000_000,
        );
        let s = simulate(&d, 1).unwrap();
        let n = s.eps.len() as f64;
        let m = s.eps.iter().sum::<f64>() / n;
        let v = s.eps.iter().map(|e| (e - m).powi(2)).sum::<f64>() / n;
        assert!((m - 1.0).abs() < 0.005, "mean {m}");
        assert!((v - 0.5).abs() < 0.01, "variance {v}");
    }

    #[test]
    fn degenerate_error_limit() {
        let d = SimulationDesign::new(amem(), ErrorDist::Gamma { phi: 1e6 }, 2000);
        let s = simulate(&d, 3).unwrap();
        let n = s.eps.len() as f64;
        let v = s.eps.iter().map(|e| (e - 1.0).powi(2)).sum::<f64>() / n;
        assert!(v < 1e-5);
        for (x, mu) in s.series.rvol().iter().zip(&s.path.mu) {
            assert!((x / mu - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn invalid_distribution() {
        assert!(simulate(&SimulationDesign::new(amem(), ErrorDist::Gamma { phi: 0.0 }, 10), 1).is_err());
        assert!(simulate(&SimulationDesign::new(amem(), ErrorDist::LogNormal { v: -1.0 }, 10), 1).is_err());
    }

    #[test]
    fn return_signs_are_fair() {
        let d = SimulationDesign::new(amem(), ErrorDist::LogNormal { v: 0.3 }, 20_000);
        let s = simulate(&d, 11).unwrap();
        let neg = s.series.returns().iter().filter(|r| **r < 0.0).count() as f64 / 20_000.0;
        assert!((neg - 0.5).abs() < 0.015);
    }

    fn assert_duality(path: &MeanPath, eps: &[f64]) {
        for (a, b) in path.residuals.iter().zip(eps) {
            assert!(((a - b) / b).abs() < 1e-10);
        }
    }

    #[test]
    fn filter_recovers_simulated_errors() {
        let short = ShortRunParams::new(0.2, 0.1, 0.6);
        let s = simulate(&SimulationDesign::new(amem(), ErrorDist::Gamma { phi: 4.0 }, 3000), 5).unwrap();
        let data = s.filter_data().unwrap();
        assert_duality(&amem_path(&data, &ShortRunParams::new(0.2, 0.1, 0.7), s.init).unwrap(), &s.eps);

        let long = LongRunComponentParams { omega_tau: 0.3, alpha1_tau: 0.03, gamma1_tau: 0.01, beta1_tau: 0.95 };
        let p = MemParams::Component { short, long };
        let s = simulate(&SimulationDesign::new(p, ErrorDist::LogNormal { v: 0.2 }, 3000), 6).unwrap();
        let data = s.filter_data().unwrap();
        assert_duality(&component_path(&data, &short, &long, s.init).unwrap(), &s.eps);

        let long = MidasLongRunParams { m: 2.5, zeta: -0.1, lag: BetaLag::decaying(12, 4.0).unwrap() };
        let p = MemParams::Midas { short, long };
        let s = simulate(&SimulationDesign::new(p, ErrorDist::Gamma { phi: 3.0 }, 3000), 9).unwrap();
        let data = s.filter_data().unwrap();
        assert_eq!(data.lag_count(), Some(12));
        let path = midas_path(&data, &short, &long).unwrap();
        assert_duality(&path, &s.eps);
        assert_eq!(path.tau, s.path.tau);
    }
}
