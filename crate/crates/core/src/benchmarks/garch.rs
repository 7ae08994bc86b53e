use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::qml::{fit_gaussian_qml, QmlOutcome};
use crate::data::FilterData;
use crate::error::{Error, Result};
use crate::evaluation::ljung_box_table;
use crate::inference::{AvarVariant, Convergence, Estimator, FitResult, FittedPath, ModelId, ParamEstimate};
use crate::mem::{xi_with_period_tau, ShortRunParams};
use crate::midas::{dot, BetaLag, OMEGA2_LOWER};
use crate::optim::{Block, Transform};
use crate::timeseries::PanelSeries;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GjrParams {
    pub constant: f64,
    pub alpha1: f64,
    pub gamma1: f64,
    pub beta1: f64,
}

impl GjrParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.constant > 0.0 && self.constant.is_finite()) {
            return Err(Error::Constraint(format!("GJR constant must be positive, got {}", self.constant)));
        }
        ShortRunParams::new(self.alpha1, self.gamma1, self.beta1).validate()
    }

    #[inline]
    fn step(&self, h_prev: f64, r_prev: f64) -> f64 {
        let load = if r_prev < 0.0 { self.alpha1 + self.gamma1 } else { self.alpha1 };
        self.constant + load * r_prev * r_prev + self.beta1 * h_prev
    }
}

/// GJR variance path on `returns` (used as given) from `h1`.
pub fn gjr_variance(returns: &[f64], params: &GjrParams, h1: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if !(h1 > 0.0 && h1.is_finite()) {
        return Err(Error::invalid(format!("initial variance must be positive, got {h1}")));
    }
    let mut h = Vec::with_capacity(returns.len());
    if returns.is_empty() {
        return Ok(h);
    }
    h.push(h1);
    for i in 1..returns.len() {
        h.push(params.step(h[i - 1], returns[i - 1]));
    }
    Ok(h)
}

/// GJR on the demeaned returns of `series`, started at their sample variance.
pub fn filter_gjr(series: &PanelSeries, params: &GjrParams) -> Result<Vec<f64>> {
    let (r, c) = demean(&series.returns())?;
    gjr_variance(&r, params, c.h1)
}

/// Loading of the macro lags in the long-run term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MacroLoading {
    /// `zeta * sum_k delta_k X_{t-k}`.
    OneSided { zeta: f64, lag: BetaLag },
    /// Separate slopes and lag shapes for nonnegative and negative lags;
    /// `X = 0` belongs to the nonnegative side.
    SignSplit { zeta_plus: f64, lag_plus: BetaLag, zeta_minus: f64, lag_minus: BetaLag },
}

impl MacroLoading {
    pub fn k(&self) -> usize {
        match self {
            MacroLoading::OneSided { lag, .. } => lag.k,
            MacroLoading::SignSplit { lag_plus, .. } => lag_plus.k,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            MacroLoading::OneSided { zeta, lag } => {
                if !zeta.is_finite() {
                    return Err(Error::Constraint("zeta must be finite".into()));
                }
                lag.validate()
            }
            MacroLoading::SignSplit { zeta_plus, lag_plus, zeta_minus, lag_minus } => {
                if !(zeta_plus.is_finite() && zeta_minus.is_finite()) {
                    return Err(Error::Constraint("zeta+ and zeta- must be finite".into()));
                }
                if lag_plus.k != lag_minus.k {
                    return Err(Error::invalid("both sides need the same lag count"));
                }
                lag_plus.validate()?;
                lag_minus.validate()
            }
        }
    }

    fn term(&self, lags: &[f64]) -> Result<f64> {
        if lags.len() != self.k() {
            return Err(Error::invalid("macro lag count does not match the model"));
        }
        Ok(match self {
            MacroLoading::OneSided { zeta, lag } => zeta * dot(&lag.weights()?, lags),
            MacroLoading::SignSplit { zeta_plus, lag_plus, zeta_minus, lag_minus } => {
                let (wp, wm) = (lag_plus.weights()?, lag_minus.weights()?);
                let mut plus = 0.0;
                let mut minus = 0.0;
                for (k, &x) in lags.iter().enumerate() {
                    if x >= 0.0 {
                        plus += wp[k] * x;
                    } else {
                        minus += wm[k] * x;
                    }
                }
                zeta_plus * plus + zeta_minus * minus
            }
        })
    }
}

/// GARCH-MIDAS (one-sided loading) and its sign-split variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmDagmParams {
    pub short: ShortRunParams,
    pub m: f64,
    pub loading: MacroLoading,
}

impl GmDagmParams {
    pub fn validate(&self) -> Result<()> {
        self.short.validate()?;
        if !self.m.is_finite() {
            return Err(Error::Constraint("m must be finite".into()));
        }
        self.loading.validate()
    }

    /// `exp(m + loading)` for one period's lags.
    pub fn tau(&self, lags: &[f64]) -> Result<f64> {
        Ok((self.m + self.loading.term(lags)?).exp())
    }

    pub fn model_id(&self) -> ModelId {
        match self.loading {
            MacroLoading::OneSided { .. } => ModelId::Gm,
            MacroLoading::SignSplit { .. } => ModelId::Dagm,
        }
    }
}

/// Variance decomposed as `h = tau * xi`.
#[derive(Debug, Clone, PartialEq)]
pub struct GarchMidasPath {
    pub tau: Vec<f64>,
    pub xi: Vec<f64>,
    pub h: Vec<f64>,
}

/// GM/DAGM path on `returns` (used as given). The short-run recursion is the
/// MEM-MIDAS one with `r^2` as driver.
pub fn gm_dagm_path(
    returns: &[f64],
    period: &[usize],
    macro_lags: &[Vec<f64>],
    params: &GmDagmParams,
) -> Result<GarchMidasPath> {
    params.validate()?;
    let tau_p = macro_lags.iter().map(|l| params.tau(l)).collect::<Result<Vec<_>>>()?;
    let r2: Vec<f64> = returns.iter().map(|r| r * r).collect();
    let mut short = params.short;
    short.delta1 = None;
    let xi = xi_with_period_tau(&short, &r2, returns, period, &tau_p, None);
    let tau: Vec<f64> = period.iter().map(|&p| tau_p[p]).collect();
    let h = tau.iter().zip(&xi).map(|(t, x)| t * x).collect();
    Ok(GarchMidasPath { tau, xi, h })
}

/// GM/DAGM on the demeaned returns of `series`.
pub fn filter_gm_dagm(series: &PanelSeries, params: &GmDagmParams) -> Result<GarchMidasPath> {
    let data = FilterData::from_series(series, Some(params.loading.k()))?;
    let (r, _) = demean(&data.r)?;
    gm_dagm_path(&r, &data.period, data.require_lags(params.loading.k())?, params)
}

/// Realized GARCH in logs, with a log-linear measurement equation
/// `ln x = xi_m + phi_m ln h + tau1 eta + tau2 (eta^2 - 1) + u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RgarchParams {
    pub constant: f64,
    pub beta1: f64,
    /// Loading on lagged log realized volatility.
    pub alpha1: f64,
    pub xi_m: f64,
    pub phi_m: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub sigma_u2: f64,
}

impl RgarchParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.constant, self.beta1, self.alpha1, self.xi_m, self.phi_m, self.tau1, self.tau2];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Constraint("RGARCH parameters must be finite".into()));
        }
        if !(self.sigma_u2 > 0.0 && self.sigma_u2.is_finite()) {
            return Err(Error::Constraint(format!("sigma_u2 must be positive, got {}", self.sigma_u2)));
        }
        if self.beta1.abs() >= 1.0 {
            return Err(Error::Constraint(format!("|beta1| must be < 1, got {}", self.beta1)));
        }
        Ok(())
    }
}

/// `ln h_i = c + beta1 ln h_{i-1} + alpha1 ln x_{i-1}`, from `h1`.
pub fn rgarch_variance(x: &[f64], params: &RgarchParams, h1: f64) -> Result<Vec<f64>> {
    params.validate()?;
    if !(h1 > 0.0 && h1.is_finite()) {
        return Err(Error::invalid(format!("initial variance must be positive, got {h1}")));
    }
    let mut lh = Vec::with_capacity(x.len());
    if x.is_empty() {
        return Ok(lh);
    }
    lh.push(h1.ln());
    for i in 1..x.len() {
        if !(x[i - 1] > 0.0) {
            return Err(Error::Filter { day: i - 1, what: format!("RGARCH needs positive realized volatility, got {}", x[i - 1]) });
        }
        lh.push(params.constant + params.beta1 * lh[i - 1] + params.alpha1 * x[i - 1].ln());
    }
    Ok(lh.into_iter().map(f64::exp).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum GarchParams {
    Gjr(GjrParams),
    GmDagm(GmDagmParams),
    Rgarch(RgarchParams),
}

/// Window constants a GARCH-type path conditions on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GarchConstants {
    /// Return mean removed before filtering.
    pub mean_r: f64,
    /// Starting variance: the sample variance of the demeaned returns.
    pub h1: f64,
}

fn demean(r: &[f64]) -> Result<(Vec<f64>, GarchConstants)> {
    if r.len() < 2 {
        return Err(Error::NoObservations);
    }
    let n = r.len() as f64;
    let mean_r = r.iter().sum::<f64>() / n;
    let d: Vec<f64> = r.iter().map(|v| v - mean_r).collect();
    let h1 = d.iter().map(|v| v * v).sum::<f64>() / n;
    if !(h1 > 0.0) {
        return Err(Error::invalid("returns have zero variance"));
    }
    Ok((d, GarchConstants { mean_r, h1 }))
}

impl GarchParams {
    pub fn model_id(&self) -> ModelId {
        match self {
            GarchParams::Gjr(_) => ModelId::Gjr,
            GarchParams::GmDagm(p) => p.model_id(),
            GarchParams::Rgarch(_) => ModelId::Rgarch,
        }
    }

    /// Conditional variance over `data` with the returns demeaned by the
    /// window constant. Every `h_i` uses information up to day `i - 1` only.
    pub fn variance_path(&self, data: &FilterData, c: &GarchConstants) -> Result<Vec<f64>> {
        let r: Vec<f64> = data.r.iter().map(|v| v - c.mean_r).collect();
        match self {
            GarchParams::Gjr(p) => gjr_variance(&r, p, c.h1),
            GarchParams::GmDagm(p) => {
                Ok(gm_dagm_path(&r, &data.period, data.require_lags(p.loading.k())?, p)?.h)
            }
            GarchParams::Rgarch(p) => rgarch_variance(&data.x, p, c.h1),
        }
    }
}

/// Which GARCH-type benchmark to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum GarchModel {
    Gjr,
    Gm { k: usize },
    Dagm { k: usize },
    Rgarch,
}

impl GarchModel {
    pub fn id(&self) -> ModelId {
        match self {
            GarchModel::Gjr => ModelId::Gjr,
            GarchModel::Gm { .. } => ModelId::Gm,
            GarchModel::Dagm { .. } => ModelId::Dagm,
            GarchModel::Rgarch => ModelId::Rgarch,
        }
    }

    pub fn macro_k(&self) -> Option<usize> {
        match self {
            GarchModel::Gm { k } | GarchModel::Dagm { k } => Some(*k),
            _ => None,
        }
    }

    pub fn prepare(&self, series: &PanelSeries) -> Result<FilterData> {
        FilterData::from_series(series, self.macro_k())
    }

    pub fn names(&self) -> Vec<&'static str> {
        match self {
            GarchModel::Gjr => vec!["const", "alpha1", "gamma1", "beta1"],
            GarchModel::Gm { .. } => vec!["alpha1", "gamma1", "beta1", "m", "zeta", "omega2"],
            GarchModel::Dagm { .. } => {
                vec!["alpha1", "gamma1", "beta1", "m", "zeta_plus", "omega2_plus", "zeta_minus", "omega2_minus"]
            }
            GarchModel::Rgarch => vec!["const", "beta1", "alpha1", "xi_m", "phi_m", "tau1", "tau2", "sigma_u2"],
        }
    }

    pub fn transform(&self) -> Transform {
        let simplex = Block::Simplex(vec![1.0, 2.0, 1.0]);
        let omega = Block::Above(OMEGA2_LOWER);
        match self {
            GarchModel::Gjr => Transform::new(vec![Block::Above(0.0), simplex]),
            GarchModel::Gm { .. } => Transform::new(vec![simplex, Block::Free, Block::Free, omega]),
            GarchModel::Dagm { .. } => Transform::new(vec![
                simplex,
                Block::Free,
                Block::Free,
                omega.clone(),
                Block::Free,
                omega,
            ]),
            GarchModel::Rgarch => Transform::new(vec![
                Block::Free,
                Block::Interval(-1.0, 1.0),
                Block::Free,
                Block::Free,
                Block::Free,
                Block::Free,
                Block::Free,
                Block::Above(0.0),
            ]),
        }
    }

    pub fn params(&self, theta: &[f64]) -> Result<GarchParams> {
        let want = self.names().len();
        if theta.len() != want {
            return Err(Error::invalid(format!("expected {want} parameters, got {}", theta.len())));
        }
        let short = ShortRunParams::new(theta[0], theta[1], theta[2]);
        Ok(match *self {
            GarchModel::Gjr => GarchParams::Gjr(GjrParams {
                constant: theta[0],
                alpha1: theta[1],
                gamma1: theta[2],
                beta1: theta[3],
            }),
            GarchModel::Gm { k } => GarchParams::GmDagm(GmDagmParams {
                short,
                m: theta[3],
                loading: MacroLoading::OneSided { zeta: theta[4], lag: BetaLag { k, omega1: 1.0, omega2: theta[5] } },
            }),
            GarchModel::Dagm { k } => GarchParams::GmDagm(GmDagmParams {
                short,
                m: theta[3],
                loading: MacroLoading::SignSplit {
                    zeta_plus: theta[4],
                    lag_plus: BetaLag { k, omega1: 1.0, omega2: theta[5] },
                    zeta_minus: theta[6],
                    lag_minus: BetaLag { k, omega1: 1.0, omega2: theta[7] },
                },
            }),
            GarchModel::Rgarch => GarchParams::Rgarch(RgarchParams {
                constant: theta[0],
                beta1: theta[1],
                alpha1: theta[2],
                xi_m: theta[3],
                phi_m: theta[4],
                tau1: theta[5],
                tau2: theta[6],
                sigma_u2: theta[7],
            }),
        })
    }

    /// Starting values scaled to the window.
    pub fn default_start(&self, data: &FilterData, c: &GarchConstants) -> Vec<f64> {
        let lv = c.h1.ln();
        match self {
            GarchModel::Gjr => vec![0.05 * c.h1, 0.05, 0.1, 0.85],
            GarchModel::Gm { .. } => vec![0.05, 0.1, 0.8, lv, 0.01, 5.0],
            GarchModel::Dagm { .. } => vec![0.05, 0.1, 0.8, lv, 0.01, 5.0, 0.01, 5.0],
            GarchModel::Rgarch => {
                let lx: Vec<f64> = data.x.iter().filter(|v| **v > 0.0).map(|v| v.ln()).collect();
                let n = lx.len().max(1) as f64;
                let mean_lx = lx.iter().sum::<f64>() / n;
                let var_lx = lx.iter().map(|v| (v - mean_lx).powi(2)).sum::<f64>() / n;
                let (beta, alpha, phi) = (0.5, 0.8, 0.5);
                let xi_m = mean_lx - phi * lv;
                let constant = lv * (1.0 - beta - alpha * phi) - alpha * xi_m;
                vec![constant, beta, alpha, xi_m, phi, 0.0, 0.0, (0.5 * var_lx).max(1e-4)]
            }
        }
    }

    /// Per-day Gaussian log-likelihood contributions on demeaned returns
    /// (plus the measurement density for RGARCH).
    fn loglik_rows(&self, theta: &[f64], data: &FilterData, c: &GarchConstants) -> Result<Vec<f64>> {
        let p = self.params(theta)?;
        let h = p.variance_path(data, c)?;
        let mut rows = Vec::with_capacity(h.len());
        for (i, &hv) in h.iter().enumerate() {
            if !(hv > 0.0 && hv.is_finite()) {
                return Err(Error::Filter { day: i, what: format!("variance {hv}") });
            }
            let r = data.r[i] - c.mean_r;
            let mut l = -0.5 * ((2.0 * PI).ln() + hv.ln() + r * r / hv);
            if let GarchParams::Rgarch(q) = &p {
                let eta = r / hv.sqrt();
                let u = data.x[i].ln() - q.xi_m - q.phi_m * hv.ln() - q.tau1 * eta - q.tau2 * (eta * eta - 1.0);
                l += -0.5 * ((2.0 * PI * q.sigma_u2).ln() + u * u / q.sigma_u2);
            }
            rows.push(l);
        }
        Ok(rows)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GarchFitOptions {
    pub max_iter: usize,
}

impl Default for GarchFitOptions {
    fn default() -> Self {
        GarchFitOptions { max_iter: 1000 }
    }
}

#[derive(Debug, Clone)]
pub struct GarchFit {
    pub result: FitResult,
    pub model: GarchModel,
    pub params: GarchParams,
    pub constants: GarchConstants,
}

impl GarchFit {
    /// Volatility path `sqrt(h)` over `data` with the estimation-window
    /// constants.
    pub fn vol_path(&self, data: &FilterData) -> Result<Vec<f64>> {
        self.params.variance_path(data, &self.constants)?.into_iter().map(super::variance_to_vol_forecast).collect()
    }
}

/// Gaussian (quasi-)ML on the demeaned returns, plus the measurement
/// equation for RGARCH. The headline standard errors are the sandwich.
pub fn fit_garch_family(data: &FilterData, model: GarchModel, opts: &GarchFitOptions) -> Result<GarchFit> {
    fit_garch_from(data, model, None, opts)
}

/// As [`fit_garch_family`] from given starting values.
pub fn fit_garch_from(
    data: &FilterData,
    model: GarchModel,
    start: Option<&[f64]>,
    opts: &GarchFitOptions,
) -> Result<GarchFit> {
    if let Some(k) = model.macro_k() {
        data.require_lags(k)?;
    }
    if model == GarchModel::Rgarch {
        if let Some(i) = data.x.iter().position(|v| !(*v > 0.0)) {
            return Err(Error::invalid(format!("RGARCH needs positive realized volatility (day {i} is {})", data.x[i])));
        }
    }
    let (_, c) = demean(&data.r)?;
    let t = model.transform();
    let theta0 = match start {
        Some(s) => s.to_vec(),
        None => model.default_start(data, &c),
    };
    let out = fit_gaussian_qml(&t, &theta0, |th: &[f64]| model.loglik_rows(th, data, &c), opts.max_iter)?;
    let params = model.params(&out.theta)?;
    let h = params.variance_path(data, &c)?;
    let result = assemble(data, model, &c, &out, &h);
    Ok(GarchFit { result, model, params, constants: c })
}

fn assemble(data: &FilterData, model: GarchModel, c: &GarchConstants, out: &QmlOutcome, h: &[f64]) -> FitResult {
    let n = h.len();
    let se = |v: AvarVariant| out.avar.as_ref().map(|a| a.std_errors(v, n));
    let (so, sh, ss) = (se(AvarVariant::Opg), se(AvarVariant::Hessian), se(AvarVariant::Sandwich));
    let names = model.names();
    let params = names
        .iter()
        .enumerate()
        .map(|(j, name)| ParamEstimate {
            name: name.to_string(),
            value: out.theta[j],
            se: ss.as_ref().map(|v| v[j]),
            se_opg: so.as_ref().map(|v| v[j]),
            se_hessian: sh.as_ref().map(|v| v[j]),
            se_sandwich: ss.as_ref().map(|v| v[j]),
            at_bound: out.near[j],
        })
        .collect();
    let residuals: Vec<f64> = h.iter().zip(&data.r).map(|(hv, r)| (r - c.mean_r) / hv.sqrt()).collect();
    let mut notes = vec![format!("returns demeaned by the window mean {:.6}", c.mean_r)];
    if let Some(e) = &out.avar_error {
        notes.push(format!("standard errors unavailable: {e}"));
    }
    let (tau, xi) = match model.params(&out.theta) {
        Ok(GarchParams::GmDagm(p)) => {
            let r: Vec<f64> = data.r.iter().map(|v| v - c.mean_r).collect();
            match data.require_lags(p.loading.k()).and_then(|l| gm_dagm_path(&r, &data.period, l, &p)) {
                Ok(path) => (Some(path.tau), Some(path.xi)),
                Err(_) => (None, None),
            }
        }
        _ => (None, None),
    };
    let boundary = out.near.iter().any(|b| *b);
    FitResult {
        model: model.id(),
        estimator: Estimator::GaussianQml,
        n_obs: n,
        params,
        shape: None,
        sigma2_hat: None,
        loglik: Some(out.loglik),
        gmm_criterion: None,
        identified: out.avar.is_some(),
        ljung_box: ljung_box_table(&residuals.iter().map(|e| e * e).collect::<Vec<_>>()).unwrap_or_default(),
        convergence: Convergence {
            converged: out.converged,
            iterations: out.iterations,
            message: out.message.clone(),
            score_norm: Some(out.score_norm),
            boundary,
            one_sided: vec![],
        },
        constants: BTreeMap::from([("mean_r".to_string(), c.mean_r), ("h1".to_string(), c.h1)]),
        notes,
        path: FittedPath { dates: data.dates.clone(), mean: h.to_vec(), tau, xi, residuals },
    }
}
