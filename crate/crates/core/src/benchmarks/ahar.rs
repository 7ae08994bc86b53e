use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::FilterData;
use crate::error::{Error, Result};
use crate::evaluation::ljung_box_table;
use crate::inference::{Convergence, Estimator, FitResult, FittedPath, ModelId, ParamEstimate};

/// Days of history needed before the first fitted value.
pub const AHAR_LAGS: usize = 22;

/// Lower bound applied to AHAR forecasts before loss evaluation.
pub const AHAR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AharParams {
    pub c: f64,
    pub beta1: f64,
    pub gamma1: f64,
    pub beta5: f64,
    pub beta22: f64,
    pub sigma_u2: f64,
}

impl AharParams {
    fn coef(&self) -> [f64; 5] {
        [self.c, self.beta1, self.gamma1, self.beta5, self.beta22]
    }

    /// Fitted value for day `i >= 22` (not floored).
    pub fn fitted(&self, x: &[f64], r: &[f64], i: usize) -> f64 {
        let row = regressors(x, r, i);
        self.coef().iter().zip(row).map(|(b, v)| b * v).sum()
    }

    /// Fitted values for days `22..n`, floored at [`AHAR_FLOOR`] when `floor`.
    pub fn path(&self, x: &[f64], r: &[f64], floor: bool) -> Vec<f64> {
        (AHAR_LAGS..x.len())
            .map(|i| {
                let v = self.fitted(x, r, i);
                if floor {
                    v.max(AHAR_FLOOR)
                } else {
                    v
                }
            })
            .collect()
    }
}

/// `[1, x_{i-1}, x_{i-1} 1(r_{i-1} < 0), mean(x_{i-5..i-2}), mean(x_{i-22..i-6})]`.
pub fn regressors(x: &[f64], r: &[f64], i: usize) -> [f64; 5] {
    let lag1 = x[i - 1];
    let neg = if r[i - 1] < 0.0 { lag1 } else { 0.0 };
    let week = x[i - 5..=i - 2].iter().sum::<f64>() / 4.0;
    let month = x[i - 22..=i - 6].iter().sum::<f64>() / 17.0;
    [1.0, lag1, neg, week, month]
}

#[derive(Debug, Clone)]
pub struct AharFit {
    pub result: FitResult,
    pub params: AharParams,
}

const NAMES: [&str; 5] = ["c", "beta1", "gamma1", "beta5", "beta22"];

/// OLS with heteroskedasticity-robust (HC0) standard errors.
pub fn fit_ahar(data: &FilterData) -> Result<AharFit> {
    let n = data.len();
    if n <= AHAR_LAGS + NAMES.len() {
        return Err(Error::invalid(format!("AHAR needs more than {} days, got {n}", AHAR_LAGS + NAMES.len())));
    }
    let m = n - AHAR_LAGS;
    let mut xm = DMatrix::zeros(m, 5);
    let mut y = DVector::zeros(m);
    for (row, i) in (AHAR_LAGS..n).enumerate() {
        for (j, v) in regressors(&data.x, &data.r, i).iter().enumerate() {
            xm[(row, j)] = *v;
        }
        y[row] = data.x[i];
    }
    let svd = xm.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > smax * 1e-10).count();
    if rank < 5 {
        return Err(Error::RankDeficient { rank, cols: 5 });
    }
    let beta = svd.solve(&y, 1e-14).map_err(|e| Error::invalid(e.to_string()))?;
    let fitted = &xm * &beta;
    let resid = &y - &fitted;
    let sigma_u2 = resid.norm_squared() / m as f64;
    let xtx_inv = (xm.tr_mul(&xm))
        .try_inverse()
        .ok_or(Error::RankDeficient { rank: 4, cols: 5 })?;
    let mut meat = DMatrix::zeros(5, 5);
    for i in 0..m {
        let row = xm.row(i).transpose();
        meat.ger(resid[i] * resid[i], &row, &row, 1.0);
    }
    let cov = &xtx_inv * meat * &xtx_inv;
    let params = AharParams {
        c: beta[0],
        beta1: beta[1],
        gamma1: beta[2],
        beta5: beta[3],
        beta22: beta[4],
        sigma_u2,
    };
    let mut estimates: Vec<ParamEstimate> = NAMES
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = cov[(j, j)].max(0.0).sqrt();
            ParamEstimate { se: Some(se), se_sandwich: Some(se), ..ParamEstimate::new(*name, beta[j]) }
        })
        .collect();
    estimates.push(ParamEstimate::new("sigma_u2", sigma_u2));
    let std_resid: Vec<f64> = resid.iter().map(|u| u / sigma_u2.sqrt()).collect();
    let loglik = -0.5 * ((2.0 * std::f64::consts::PI * sigma_u2).ln() + 1.0);
    let result = FitResult {
        model: ModelId::Ahar,
        estimator: Estimator::Ols,
        n_obs: m,
        params: estimates,
        shape: None,
        sigma2_hat: Some(sigma_u2),
        loglik: Some(loglik),
        gmm_criterion: None,
        identified: true,
        ljung_box: ljung_box_table(&std_resid).unwrap_or_default(),
        convergence: Convergence {
            converged: true,
            iterations: 1,
            message: "closed form".into(),
            score_norm: None,
            boundary: false,
            one_sided: vec![],
        },
        constants: BTreeMap::new(),
        notes: vec![],
        path: FittedPath {
            dates: data.dates[AHAR_LAGS..].to_vec(),
            mean: fitted.iter().copied().collect(),
            tau: None,
            xi: None,
            residuals: std_resid,
        },
    };
    Ok(AharFit { result, params })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn data(x: Vec<f64>, r: Vec<f64>) -> FilterData {
        let d0 = chrono::NaiveDate::from_ymd_opt(2001, 1, 1).unwrap();
        let n = x.len();
        FilterData {
            dates: (0..n).map(|i| d0 + chrono::Duration::days(i as i64)).collect(),
            x,
            r,
            period: vec![0; n],
            period_keys: vec![],
            macro_lags: None,
            z: None,
        }
    }

    fn simulate(p: &AharParams, n: usize, seed: u64) -> FilterData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Normal::new(0.0, p.sigma_u2.sqrt()).unwrap();
        let sign = Normal::new(0.0, 1.0).unwrap();
        let mut x = vec![10.0; AHAR_LAGS];
        let mut r: Vec<f64> = (0..AHAR_LAGS).map(|_| sign.sample(&mut rng)).collect();
        for i in AHAR_LAGS..n {
            let v = p.fitted(&x, &r, i) + u.sample(&mut rng);
            x.push(v);
            r.push(sign.sample(&mut rng));
        }
        data(x, r)
    }

    #[test]
    fn recovers_coefficients() {
        let p = AharParams { c: 1.0, beta1: 0.35, gamma1: 0.1, beta5: 0.3, beta22: 0.2, sigma_u2: 1.0 };
        let fit = fit_ahar(&simulate(&p, 5000, 3)).unwrap();
        for (est, truth) in fit.result.params.iter().zip(p.coef()) {
            let se = est.se.unwrap();
            assert!((est.value - truth).abs() < 3.0 * se, "{} {} {}", est.name, est.value, se);
        }
    }

    #[test]
    fn intercept_only() {
        let p = AharParams { c: 12.0, beta1: 0.0, gamma1: 0.0, beta5: 0.0, beta22: 0.0, sigma_u2: 0.25 };
        let d = simulate(&p, 3000, 4);
        let fit = fit_ahar(&d).unwrap();
        let path = fit.params.path(&d.x, &d.r, true);
        let m = path.iter().sum::<f64>() / path.len() as f64;
        assert!((m - 12.0).abs() < 0.05);
    }

    #[test]
    fn ols_identity() {
        let p = AharParams { c: 1.0, beta1: 0.35, gamma1: 0.1, beta5: 0.3, beta22: 0.2, sigma_u2: 1.0 };
        let d = simulate(&p, 600, 5);
        let fit = fit_ahar(&d).unwrap();
        let fitted = fit.params.path(&d.x, &d.r, false);
        for (a, b) in fitted.iter().zip(&fit.result.path.mean) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn constant_series_is_rank_deficient() {
        let d = data(vec![5.0; 200], vec![1.0; 200]);
        assert!(matches!(fit_ahar(&d), Err(Error::RankDeficient { .. })));
    }
}
