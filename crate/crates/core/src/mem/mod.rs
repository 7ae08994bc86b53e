//! Conditional-mean recursions for the multiplicative error family:
//! AMEM, Component-MEM and MEM-MIDAS.
//!
//! All three write `x = tau * xi * eps` with a unit-mean short-run factor
//!
//! ```text
//! xi_i = (1 - a1 - g1/2 - b1) + (a1 + g1 * 1{r_{i-1} < 0}) * drv_{i-1} + b1 * xi_{i-1} + d1 * z_{i-1}
//! ```
//!
//! and differ in the long-run factor `tau`: a constant (AMEM), a daily
//! GARCH-type recursion driven by `x / xi` (Component-MEM), or a
//! period-constant `exp(m + zeta * sum_k delta_k X_{t-k})` (MEM-MIDAS).
//!
//! Recursions carry over period boundaries. The first day is initialized at
//! `xi = 1` and `tau` (or `mu`) equal to the supplied level.

mod moments;
mod simulate;

pub use moments::{component_stationarity, xi_second_moment, ComponentMoments};
pub use simulate::{simulate, ErrorDist, MacroAr1, SimulationDesign, Simulation};

use serde::{Deserialize, Serialize};

use crate::data::FilterData;
use crate::error::{Error, Result};
use crate::midas::{dot, BetaLag};
use crate::timeseries::PanelSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortRunParams {
    pub alpha1: f64,
    pub gamma1: f64,
    pub beta1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta1: Option<f64>,
}

impl ShortRunParams {
    pub fn new(alpha1: f64, gamma1: f64, beta1: f64) -> Self {
        ShortRunParams { alpha1, gamma1, beta1, delta1: None }
    }

    pub fn persistence(&self) -> f64 {
        self.alpha1 + self.gamma1 / 2.0 + self.beta1
    }

    /// Intercept that targets a unit mean.
    pub fn intercept(&self) -> f64 {
        1.0 - self.persistence()
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg(&[("alpha1", self.alpha1), ("gamma1", self.gamma1), ("beta1", self.beta1)])?;
        if let Some(d) = self.delta1 {
            if !d.is_finite() {
                return Err(Error::Constraint("delta1 must be finite".into()));
            }
        }
        if self.intercept() <= 0.0 {
            return Err(Error::Constraint(format!(
                "persistence alpha1 + gamma1/2 + beta1 = {} must be < 1",
                self.persistence()
            )));
        }
        Ok(())
    }

    #[inline]
    pub(crate) fn step(&self, xi_prev: f64, driver_prev: f64, negative_prev: bool, z_prev: f64) -> f64 {
        let load = if negative_prev { self.alpha1 + self.gamma1 } else { self.alpha1 };
        let mut xi = self.intercept() + load * driver_prev + self.beta1 * xi_prev;
        if let Some(d) = self.delta1 {
            xi += d * z_prev;
        }
        xi
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongRunComponentParams {
    pub omega_tau: f64,
    pub alpha1_tau: f64,
    pub gamma1_tau: f64,
    pub beta1_tau: f64,
}

impl LongRunComponentParams {
    pub fn persistence(&self) -> f64 {
        self.alpha1_tau + self.gamma1_tau / 2.0 + self.beta1_tau
    }

    pub fn validate(&self) -> Result<()> {
        check_nonneg(&[
            ("alpha1_tau", self.alpha1_tau),
            ("gamma1_tau", self.gamma1_tau),
            ("beta1_tau", self.beta1_tau),
        ])?;
        if !(self.omega_tau.is_finite() && self.omega_tau > 0.0) {
            return Err(Error::Constraint(format!("omega_tau = {} must be > 0", self.omega_tau)));
        }
        if self.persistence() >= 1.0 {
            return Err(Error::Constraint(format!(
                "persistence alpha1_tau + gamma1_tau/2 + beta1_tau = {} must be < 1",
                self.persistence()
            )));
        }
        Ok(())
    }

    #[inline]
    fn step(&self, tau_prev: f64, driver_prev: f64, negative_prev: bool) -> f64 {
        let load = if negative_prev { self.alpha1_tau + self.gamma1_tau } else { self.alpha1_tau };
        self.omega_tau + load * driver_prev + self.beta1_tau * tau_prev
    }

    /// Unconditional mean of `tau` implied by the recursion alone.
    pub fn unconditional_level(&self) -> f64 {
        self.omega_tau / (1.0 - self.persistence())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidasLongRunParams {
    pub m: f64,
    pub zeta: f64,
    pub lag: BetaLag,
}

impl MidasLongRunParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.m.is_finite() && self.zeta.is_finite()) {
            return Err(Error::Constraint("m and zeta must be finite".into()));
        }
        self.lag.validate()
    }

    /// `exp(m + zeta * sum_k delta_k X_{t-k})`.
    pub fn tau(&self, lags: &[f64]) -> Result<f64> {
        Ok((self.m + self.zeta * self.lag.weighted_sum(lags)?).exp())
    }

    fn tau_per_period(&self, lags: &[Vec<f64>]) -> Result<Vec<f64>> {
        let w = self.lag.weights()?;
        lags.iter()
            .map(|l| {
                if l.len() != w.len() {
                    return Err(Error::invalid("macro lag count does not match the model"));
                }
                Ok((self.m + self.zeta * dot(&w, l)).exp())
            })
            .collect()
    }
}

/// Parameters of one member of the family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum MemParams {
    /// `level` is the targeted unconditional mean `mu`.
    Amem { short: ShortRunParams, level: f64 },
    Component { short: ShortRunParams, long: LongRunComponentParams },
    Midas { short: ShortRunParams, long: MidasLongRunParams },
}

impl MemParams {
    pub fn short(&self) -> &ShortRunParams {
        match self {
            MemParams::Amem { short, .. }
            | MemParams::Component { short, .. }
            | MemParams::Midas { short, .. } => short,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.short().validate()?;
        match self {
            MemParams::Amem { level, .. } => {
                if !(level.is_finite() && *level > 0.0) {
                    return Err(Error::Constraint(format!("level {level} must be > 0")));
                }
                Ok(())
            }
            MemParams::Component { long, .. } => long.validate(),
            MemParams::Midas { long, .. } => long.validate(),
        }
    }

    /// Filters `data`. `init` is the first-day `tau` for Component-MEM and is
    /// ignored otherwise (AMEM starts at its level, MEM-MIDAS at `xi = 1`).
    pub fn path(&self, data: &FilterData, init: f64) -> Result<MeanPath> {
        match self {
            MemParams::Amem { short, level } => amem_path(data, short, *level),
            MemParams::Component { short, long } => component_path(data, short, long, init),
            MemParams::Midas { short, long } => midas_path(data, short, long),
        }
    }
}

fn check_nonneg(vals: &[(&str, f64)]) -> Result<()> {
    for (name, v) in vals {
        if !(v.is_finite() && *v >= 0.0) {
            return Err(Error::Constraint(format!("{name} = {v} must be >= 0")));
        }
    }
    Ok(())
}

/// Filtered components. `mu = tau * xi` and `residuals = x / mu`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MeanPath {
    pub mu: Vec<f64>,
    pub tau: Vec<f64>,
    pub xi: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl MeanPath {
    fn with_capacity(n: usize) -> Self {
        MeanPath {
            mu: Vec::with_capacity(n),
            tau: Vec::with_capacity(n),
            xi: Vec::with_capacity(n),
            residuals: Vec::with_capacity(n),
        }
    }

    fn push(&mut self, day: usize, x: f64, tau: f64, xi: f64, mu: f64) -> Result<()> {
        if !(mu.is_finite() && mu > 0.0 && tau > 0.0 && xi > 0.0) {
            return Err(Error::Filter {
                day,
                what: format!("tau = {tau}, xi = {xi}, mu = {mu}"),
            });
        }
        self.mu.push(mu);
        self.tau.push(tau);
        self.xi.push(xi);
        self.residuals.push(x / mu);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

#[inline]
fn zval(data: &FilterData, i: usize) -> f64 {
    data.z.as_ref().map_or(0.0, |z| z[i])
}

#[inline]
fn amem_step(short: &ShortRunParams, level: f64, mu_prev: f64, x_prev: f64, neg_prev: bool, z_prev: f64) -> f64 {
    let load = if neg_prev { short.alpha1 + short.gamma1 } else { short.alpha1 };
    let mut mu = short.intercept() * level + load * x_prev + short.beta1 * mu_prev;
    if let Some(d) = short.delta1 {
        mu += d * z_prev * level;
    }
    mu
}

#[inline]
fn component_step(
    short: &ShortRunParams,
    long: &LongRunComponentParams,
    tau_prev: f64,
    xi_prev: f64,
    x_prev: f64,
    neg_prev: bool,
    z_prev: f64,
) -> (f64, f64) {
    let xi = short.step(xi_prev, x_prev / tau_prev, neg_prev, z_prev);
    let tau = long.step(tau_prev, x_prev / xi_prev, neg_prev);
    (tau, xi)
}

/// AMEM with intercept `(1 - a1 - g1/2 - b1) * level`; `mu_1 = level`.
pub fn amem_path(data: &FilterData, short: &ShortRunParams, level: f64) -> Result<MeanPath> {
    MemParams::Amem { short: *short, level }.validate()?;
    let n = data.len();
    let mut path = MeanPath::with_capacity(n);
    if n == 0 {
        return Ok(path);
    }
    path.push(0, data.x[0], level, 1.0, level)?;
    let mut mu = level;
    for i in 1..n {
        mu = amem_step(short, level, mu, data.x[i - 1], data.r[i - 1] < 0.0, zval(data, i - 1));
        path.push(i, data.x[i], level, mu / level, mu)?;
    }
    Ok(path)
}

/// Joint recursion of `xi` (driven by `x / tau`) and `tau` (driven by
/// `x / xi`), starting from `xi = 1`, `tau = tau0`.
pub fn component_path(
    data: &FilterData,
    short: &ShortRunParams,
    long: &LongRunComponentParams,
    tau0: f64,
) -> Result<MeanPath> {
    short.validate()?;
    long.validate()?;
    if !(tau0.is_finite() && tau0 > 0.0) {
        return Err(Error::Constraint(format!("initial tau {tau0} must be > 0")));
    }
    let n = data.len();
    let mut path = MeanPath::with_capacity(n);
    if n == 0 {
        return Ok(path);
    }
    let (mut tau, mut xi) = (tau0, 1.0);
    path.push(0, data.x[0], tau, xi, tau * xi)?;
    for i in 1..n {
        (tau, xi) = component_step(short, long, tau, xi, data.x[i - 1], data.r[i - 1] < 0.0, zval(data, i - 1));
        path.push(i, data.x[i], tau, xi, tau * xi)?;
    }
    Ok(path)
}

/// Short-run recursion with a period-constant long-run term. The day-`i`
/// driver is `driver_{i-1} / tau_t`, with `t` the period of day `i`.
pub(crate) fn xi_with_period_tau(
    short: &ShortRunParams,
    driver: &[f64],
    sign_source: &[f64],
    period: &[usize],
    tau_period: &[f64],
    z: Option<&[f64]>,
) -> Vec<f64> {
    let n = driver.len();
    let mut xi = Vec::with_capacity(n);
    if n == 0 {
        return xi;
    }
    xi.push(1.0);
    for i in 1..n {
        let tau = tau_period[period[i]];
        let zp = z.map_or(0.0, |z| z[i - 1]);
        let next = short.step(xi[i - 1], driver[i - 1] / tau, sign_source[i - 1] < 0.0, zp);
        xi.push(next);
    }
    xi
}

/// MEM-MIDAS: `tau_t` from the period's macro lags, `xi` via
/// [`xi_with_period_tau`] on `x`.
pub fn midas_path(data: &FilterData, short: &ShortRunParams, long: &MidasLongRunParams) -> Result<MeanPath> {
    short.validate()?;
    long.validate()?;
    let lags = data.require_lags(long.lag.k)?;
    let tau_p = long.tau_per_period(lags)?;
    let xi = xi_with_period_tau(short, &data.x, &data.r, &data.period, &tau_p, data.z.as_deref());
    let mut path = MeanPath::with_capacity(data.len());
    for (i, &xv) in xi.iter().enumerate() {
        let tau = tau_p[data.period[i]];
        path.push(i, data.x[i], tau, xv, tau * xv)?;
    }
    Ok(path)
}

/// AMEM targeted at the sample mean of realized volatility.
pub fn filter_amem(series: &PanelSeries, short: &ShortRunParams) -> Result<MeanPath> {
    let data = FilterData::from_series(series, None)?;
    amem_path(&data, short, data.mean_x())
}

/// Component-MEM with `tau_1` at the sample mean of realized volatility.
pub fn filter_component(
    series: &PanelSeries,
    short: &ShortRunParams,
    long: &LongRunComponentParams,
) -> Result<MeanPath> {
    let data = FilterData::from_series(series, None)?;
    component_path(&data, short, long, data.mean_x())
}

pub fn filter_mem_midas(
    series: &PanelSeries,
    short: &ShortRunParams,
    long: &MidasLongRunParams,
) -> Result<MeanPath> {
    let data = FilterData::from_series(series, Some(long.lag.k))?;
    midas_path(&data, short, long)
}

/// Last observed day, as needed for a one-step forecast.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForecastState {
    pub x: f64,
    pub ret: f64,
    pub tau: f64,
    pub xi: f64,
    pub mu: f64,
    pub z: Option<f64>,
}

impl ForecastState {
    /// State at day `i` of a filtered path.
    pub fn at(path: &MeanPath, data: &FilterData, i: usize) -> Self {
        ForecastState {
            x: data.x[i],
            ret: data.r[i],
            tau: path.tau[i],
            xi: path.xi[i],
            mu: path.mu[i],
            z: data.z.as_ref().map(|z| z[i]),
        }
    }
}

/// Whether the forecast day opens a new low-frequency period.
#[derive(Debug, Clone, PartialEq)]
pub enum NextDay {
    SamePeriod,
    /// MEM-MIDAS needs the new period's `X_{t-1}..X_{t-K}`.
    NewPeriod { lags: Option<Vec<f64>> },
}

/// `E(x_{i+1} | F_i) = tau_{i+1} * xi_{i+1}`, one recursion step ahead.
pub fn forecast_one_step(params: &MemParams, state: &ForecastState, next: &NextDay) -> Result<f64> {
    params.validate()?;
    let z = state.z.unwrap_or(0.0);
    let neg = state.ret < 0.0;
    if !(state.x.is_finite() && state.tau > 0.0 && state.xi > 0.0 && state.mu > 0.0) {
        return Err(Error::invalid("forecast state is incomplete or nonpositive"));
    }
    let mu = match params {
        MemParams::Amem { short, level } => amem_step(short, *level, state.mu, state.x, neg, z),
        MemParams::Component { short, long } => {
            let (tau, xi) = component_step(short, long, state.tau, state.xi, state.x, neg, z);
            tau * xi
        }
        MemParams::Midas { short, long } => {
            let tau = match next {
                NextDay::SamePeriod => state.tau,
                NextDay::NewPeriod { lags: Some(l) } => long.tau(l)?,
                NextDay::NewPeriod { lags: None } => {
                    return Err(Error::invalid("new period needs macro lags"))
                }
            };
            tau * short.step(state.xi, state.x / tau, neg, z)
        }
    };
    Ok(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn data(x: &[f64], r: &[f64]) -> FilterData {
        let d0 = NaiveDate::from_ymd_opt(2005, 1, 3).unwrap();
        FilterData {
            dates: (0..x.len()).map(|i| d0 + chrono::Duration::days(i as i64)).collect(),
            x: x.to_vec(),
            r: r.to_vec(),
            period: vec![0; x.len()],
            period_keys: vec![crate::timeseries::PeriodKey::of(d0, crate::timeseries::Frequency::Month)],
            macro_lags: None,
            z: None,
        }
    }

    fn short(a: f64, g: f64, b: f64) -> ShortRunParams {
        ShortRunParams::new(a, g, b)
    }

    #[test]
    fn amem_hand_step() {
        // alpha0 = 1 with level 10: intercept 0.1 for (0.1, 0, 0.8)
        let s = short(0.1, 0.0, 0.8);
        let st = ForecastState { x: 12.0, ret: 0.5, tau: 10.0, xi: 1.0, mu: 10.0, z: None };
        let p = MemParams::Amem { short: s, level: 10.0 };
        let f = forecast_one_step(&p, &st, &NextDay::SamePeriod).unwrap();
        assert!((f - 10.2).abs() < 1e-12);

        let s = short(0.1, 0.1, 0.8);
        // level chosen so that alpha0 = 1 with intercept 0.05
        let p = MemParams::Amem { short: s, level: 20.0 };
        let st = ForecastState { ret: -0.5, ..st };
        let f = forecast_one_step(&p, &st, &NextDay::SamePeriod).unwrap();
        assert!((f - 11.4).abs() < 1e-12);
    }

    #[test]
    fn amem_filter_matches_forecast_step() {
        let d = data(&[10.0, 12.0, 9.0, 14.0], &[1.0, -1.0, 1.0, -2.0]);
        let s = short(0.1, 0.05, 0.8);
        let path = amem_path(&d, &s, 11.0).unwrap();
        let p = MemParams::Amem { short: s, level: 11.0 };
        for i in 0..3 {
            let st = ForecastState::at(&path, &d, i);
            let f = forecast_one_step(&p, &st, &NextDay::SamePeriod).unwrap();
            assert_eq!(f, path.mu[i + 1]);
        }
    }

    #[test]
    fn constant_amem_is_flat() {
        let d = data(&[10.0, 30.0, 1.0, 14.0], &[1.0, -1.0, 1.0, -2.0]);
        let path = amem_path(&d, &short(0.0, 0.0, 0.0), d.mean_x()).unwrap();
        assert!(path.mu.iter().all(|&m| m == d.mean_x()));
    }

    #[test]
    fn component_hand_case() {
        let s = short(0.1, 0.0, 0.8);
        let l = LongRunComponentParams { omega_tau: 0.2, alpha1_tau: 0.1, gamma1_tau: 0.0, beta1_tau: 0.88 };
        let d = data(&[12.0, 11.0], &[0.3, 0.3]);
        let path = component_path(&d, &s, &l, 10.0).unwrap();
        assert!((path.xi[1] - 1.02).abs() < 1e-12);
        assert!((path.tau[1] - 10.2).abs() < 1e-12);
        assert!((path.mu[1] - 10.404).abs() < 1e-12);
        let st = ForecastState::at(&path, &d, 0);
        let f = forecast_one_step(&MemParams::Component { short: s, long: l }, &st, &NextDay::SamePeriod).unwrap();
        assert_eq!(f, path.mu[1]);
    }

    #[test]
    fn component_collapses() {
        let d = data(&[10.0, 12.0, 9.0, 14.0, 8.0], &[1.0, -1.0, 1.0, -2.0, 1.0]);
        // constant long run
        let l = LongRunComponentParams { omega_tau: 7.0, alpha1_tau: 0.0, gamma1_tau: 0.0, beta1_tau: 0.0 };
        let s = short(0.1, 0.05, 0.8);
        let path = component_path(&d, &s, &l, 7.0).unwrap();
        assert!(path.tau.iter().all(|&t| t == 7.0));
        let mut xi = 1.0;
        for i in 1..d.len() {
            xi = s.step(xi, d.x[i - 1] / 7.0, d.r[i - 1] < 0.0, 0.0);
            assert!((path.xi[i] - xi).abs() < 1e-14);
        }
        // no short-run dynamics
        let l = LongRunComponentParams { omega_tau: 1.0, alpha1_tau: 0.1, gamma1_tau: 0.05, beta1_tau: 0.8 };
        let path = component_path(&d, &short(0.0, 0.0, 0.0), &l, 10.0).unwrap();
        assert!(path.xi.iter().all(|&x| x == 1.0));
        let mut tau = 10.0;
        for i in 1..d.len() {
            let load = if d.r[i - 1] < 0.0 { 0.15 } else { 0.1 };
            tau = 1.0 + load * d.x[i - 1] + 0.8 * tau;
            assert!((path.tau[i] - tau).abs() < 1e-12);
        }
    }

    #[test]
    fn midas_tau_values() {
        let lag = BetaLag::decaying(3, 2.0).unwrap();
        let long = MidasLongRunParams { m: 0.7, zeta: 0.0, lag };
        assert_eq!(long.tau(&[5.0, -3.0, 1.0]).unwrap(), 0.7f64.exp());
        let long = MidasLongRunParams { m: 0.0, zeta: 1.0, lag };
        assert_eq!(long.tau(&[0.0; 3]).unwrap(), 1.0);
        let long = MidasLongRunParams { m: 0.009, zeta: -0.164, lag: BetaLag::decaying(1, 1.0).unwrap() };
        assert!((long.tau(&[1.0]).unwrap() - 0.856415).abs() < 1e-6);
    }

    #[test]
    fn midas_boundary_forecast_recomputes_tau_first() {
        // two periods of two days, K = 1
        let mut d = data(&[2.0, 3.0, 4.0, 5.0], &[1.0, -1.0, 1.0, 1.0]);
        d.period = vec![0, 0, 1, 1];
        d.macro_lags = Some(vec![vec![0.0], vec![1.0]]);
        let s = short(0.2, 0.1, 0.5);
        let long = MidasLongRunParams { m: 1.0, zeta: 0.5, lag: BetaLag::decaying(1, 1.0).unwrap() };
        let path = midas_path(&d, &s, &long).unwrap();
        let (t0, t1) = (1f64.exp(), 1.5f64.exp());
        assert_eq!(path.tau, vec![t0, t0, t1, t1]);
        // day 2 is in the new period: driver x_1 / tau_1 with the negative-return load
        let xi2 = (1.0 - 0.75) + 0.3 * 3.0 / t1 + 0.5 * path.xi[1];
        assert!((path.xi[2] - xi2).abs() < 1e-14);
        let st = ForecastState::at(&path, &d, 1);
        let p = MemParams::Midas { short: s, long };
        let f = forecast_one_step(&p, &st, &NextDay::NewPeriod { lags: Some(vec![1.0]) }).unwrap();
        assert_eq!(f, path.mu[2]);
        assert!(forecast_one_step(&p, &st, &NextDay::NewPeriod { lags: None }).is_err());
    }

    #[test]
    fn constraint_errors_name_the_bound() {
        let d = data(&[1.0, 2.0], &[1.0, 1.0]);
        let e = amem_path(&d, &short(0.5, 0.2, 0.5), 1.0).unwrap_err();
        assert!(e.to_string().contains("persistence"));
        let e = amem_path(&d, &short(-0.1, 0.0, 0.5), 1.0).unwrap_err();
        assert!(e.to_string().contains("alpha1"));
        let l = LongRunComponentParams { omega_tau: 0.0, alpha1_tau: 0.1, gamma1_tau: 0.0, beta1_tau: 0.5 };
        let e = component_path(&d, &short(0.1, 0.0, 0.5), &l, 1.0).unwrap_err();
        assert!(e.to_string().contains("omega_tau"));
    }

    #[test]
    fn midas_without_lags_errors() {
        let d = data(&[1.0, 2.0], &[1.0, 1.0]);
        let long = MidasLongRunParams { m: 0.0, zeta: 1.0, lag: BetaLag::decaying(3, 2.0).unwrap() };
        assert!(midas_path(&d, &short(0.1, 0.0, 0.5), &long).is_err());
    }
}
