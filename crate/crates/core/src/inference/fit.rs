use std::collections::BTreeMap;

use log::debug;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::avar::{avar_gamma, avar_lognormal, AvarSet, AvarVariant};
use super::gradient::{gradient_rows, GradientRows};
use super::result::{Convergence, Estimator, FitResult, FittedPath, ParamEstimate, ShapeEstimate};
use super::score::{
    gamma_loglik, lognormal_loglik, phi_ml, score_gamma, sigma2_gmm, weighted_mean_rows, ScorePieces,
    VEstimator,
};
use super::{MemModel, MemSpec};
use crate::data::FilterData;
use crate::error::{Error, Result};
use crate::evaluation::ljung_box_table;
use crate::mem::{MeanPath, MemParams};
use crate::optim::{bfgs, BfgsOptions, Transform};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitOptions {
    pub max_iter: usize,
    /// The estimating equation counts as solved when its norm is below
    /// `score_tol * (1 + |theta|)`.
    pub score_tol: f64,
    pub v_estimator: VEstimator,
    pub alternation_tol: f64,
    pub max_cycles: usize,
    pub solve_phi_ml: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            max_iter: 500,
            score_tol: 1e-6,
            v_estimator: VEstimator::Ml,
            alternation_tol: 1e-7,
            max_cycles: 200,
            solve_phi_ml: true,
        }
    }
}

/// A fitted MEM: the report plus what forecasting needs.
#[derive(Debug, Clone)]
pub struct MemFit {
    pub result: FitResult,
    pub spec: MemSpec,
    pub params: MemParams,
    /// Estimation-window mean of `x`: the AMEM target and Component-MEM `tau_1`.
    pub level: f64,
    pub path: MeanPath,
    pub avar: Option<AvarSet>,
}

/// `a_i = grad mu_i / mu_i` at `theta` by central differences of the path.
pub fn gradient_a(spec: &MemSpec, data: &FilterData, theta: &[f64], level: f64) -> Result<GradientRows> {
    let t = spec.transform();
    gradient_rows(theta, |th| t.contains(th), |th| Ok(spec.path(th, data, level)?.mu))
}

fn gamma_objective(spec: &MemSpec, data: &FilterData, level: f64, theta: &[f64]) -> f64 {
    match spec.path(theta, data, level) {
        Ok(p) => {
            let s: f64 = p.mu.iter().zip(&data.x).map(|(m, x)| m.ln() + x / m).sum();
            s / data.len() as f64
        }
        Err(_) => f64::INFINITY,
    }
}

fn lognormal_objective(spec: &MemSpec, data: &FilterData, level: f64, v: f64, theta: &[f64]) -> f64 {
    match spec.path(theta, data, level) {
        Ok(p) => {
            let s: f64 = p.residuals.iter().map(|e| (e.ln() + v / 2.0).powi(2)).sum();
            s / data.len() as f64
        }
        Err(_) => f64::INFINITY,
    }
}

/// Log-normal criterion with `V` concentrated out: `ln V + mean((ln eps +
/// V/2)^2) / V` at the ML estimate of `V`, and the sample variance of `ln eps`
/// at the moment estimate.
fn profile_objective(spec: &MemSpec, data: &FilterData, level: f64, v_est: VEstimator, theta: &[f64]) -> f64 {
    let Ok(p) = spec.path(theta, data, level) else { return f64::INFINITY };
    let Ok(v) = v_est.estimate(&p.residuals) else { return f64::INFINITY };
    let n = data.len() as f64;
    match v_est {
        VEstimator::Mm => {
            let m = -v / 2.0;
            p.residuals.iter().map(|e| (e.ln() - m).powi(2)).sum::<f64>() / n
        }
        _ => {
            if v <= 0.0 {
                return f64::NEG_INFINITY;
            }
            v.ln() + p.residuals.iter().map(|e| (e.ln() + v / 2.0).powi(2)).sum::<f64>() / (n * v)
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn start_theta(spec: &MemSpec, data: &FilterData, theta0: Option<&[f64]>) -> Result<Vec<f64>> {
    let th = match theta0 {
        Some(t) => t.to_vec(),
        None => spec.default_start(data),
    };
    let t = spec.transform();
    if !t.contains(&th) {
        return Err(Error::Constraint(format!("starting values {th:?} are outside the admissible region")));
    }
    Ok(th)
}

fn check_data(data: &FilterData, spec: &MemSpec) -> Result<()> {
    if data.len() < 10 {
        return Err(Error::invalid(format!("{} observations are too few to fit", data.len())));
    }
    if data.x.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(Error::invalid("realized volatility must be finite and nonnegative"));
    }
    if spec.exog && data.z.is_none() {
        return Err(Error::invalid("model estimates delta1 but no exogenous series is present"));
    }
    Ok(())
}

/// Weighted moment `N^-1 sum w(eps_i) a_i` and the state it was taken at.
struct Moment {
    rows: GradientRows,
    path: MeanPath,
    g: DVector<f64>,
}

fn moment<W: Fn(f64) -> f64>(spec: &MemSpec, data: &FilterData, level: f64, theta: &[f64], w: &W) -> Result<Moment> {
    let path = spec.path(theta, data, level)?;
    let rows = gradient_a(spec, data, theta, level)?;
    let wv: Vec<f64> = path.residuals.iter().map(|e| w(*e)).collect();
    let g = weighted_mean_rows(&rows.a, &wv);
    Ok(Moment { rows, path, g })
}

/// Scoring steps `theta += A^-1 g` with backtracking on `objective`, until
/// the moment is below a tenth of the tolerance or no step helps.
#[allow(clippy::too_many_arguments)]
fn polish<W, O>(
    spec: &MemSpec,
    data: &FilterData,
    level: f64,
    theta: &mut Vec<f64>,
    w: &W,
    objective: O,
    tol: f64,
    max_steps: usize,
) -> Result<usize>
where
    W: Fn(f64) -> f64,
    O: Fn(&[f64]) -> f64,
{
    let t = spec.transform();
    let mut f = objective(theta);
    for step in 0..max_steps {
        let m = moment(spec, data, level, theta, w)?;
        if m.g.norm() <= 0.1 * tol * (1.0 + norm(theta)) {
            return Ok(step);
        }
        let a_bar = m.rows.a.tr_mul(&m.rows.a) / data.len() as f64;
        let Some(delta) = a_bar.cholesky().map(|c| c.solve(&m.g)) else {
            return Ok(step);
        };
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a + s * d).collect();
            if t.contains(&cand) {
                let fc = objective(&cand);
                if fc <= f + 1e-14 * (1.0 + f.abs()) {
                    *theta = cand;
                    f = fc;
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !moved {
            return Ok(step);
        }
    }
    Ok(max_steps)
}

fn bfgs_theta<O: Fn(&[f64]) -> f64>(t: &Transform, theta: &[f64], objective: O, opts: &FitOptions) -> Result<(Vec<f64>, usize, bool, String)> {
    let u0 = t.to_free(theta)?;
    let m = bfgs(
        |u: &[f64]| objective(&t.to_theta(u)),
        &u0,
        &BfgsOptions { max_iter: opts.max_iter, grad_tol: 1e-5, f_tol: 1e-12 },
    )?;
    Ok((t.to_theta(&m.x), m.iterations, m.converged, m.message))
}

fn estimates(
    spec: &MemSpec,
    theta: &[f64],
    avar: Option<&AvarSet>,
    n: usize,
    headline: AvarVariant,
    near: &[bool],
) -> Vec<ParamEstimate> {
    let se = |v: AvarVariant| avar.map(|a| a.std_errors(v, n));
    let (so, sh, ss, head) = (se(AvarVariant::Opg), se(AvarVariant::Hessian), se(AvarVariant::Sandwich), se(headline));
    spec.names()
        .iter()
        .enumerate()
        .map(|(j, name)| ParamEstimate {
            name: name.to_string(),
            value: theta[j],
            se: head.as_ref().map(|v| v[j]),
            se_opg: so.as_ref().map(|v| v[j]),
            se_hessian: sh.as_ref().map(|v| v[j]),
            se_sandwich: ss.as_ref().map(|v| v[j]),
            at_bound: near[j],
        })
        .collect()
}

fn fitted_path(data: &FilterData, path: &MeanPath) -> FittedPath {
    FittedPath {
        dates: data.dates.clone(),
        mean: path.mu.clone(),
        tau: Some(path.tau.clone()),
        xi: Some(path.xi.clone()),
        residuals: path.residuals.clone(),
    }
}

fn one_sided_names(spec: &MemSpec, rows: &GradientRows) -> Vec<String> {
    spec.names()
        .iter()
        .zip(&rows.one_sided)
        .filter(|(_, f)| **f)
        .map(|(n, _)| n.to_string())
        .collect()
}

/// Gamma QML: maximizes the Gamma likelihood in `theta` (its argmax does not
/// depend on `phi`), polishes the score to zero and sets `phi = 1/sigma2`
/// with `sigma2` the residual second moment. Zeros in `x` route the fit
/// through [`fit_gmm`], which solves the same equations.
pub fn fit_ml_gamma(spec: &MemSpec, data: &FilterData, theta0: Option<&[f64]>, opts: &FitOptions) -> Result<MemFit> {
    check_data(data, spec)?;
    if data.has_zeros() {
        let mut fit = fit_gmm(spec, data, theta0, opts)?;
        fit.result.notes.push("zeros in the data: Gamma QML solved through the GMM criterion".into());
        return Ok(fit);
    }
    let level = data.mean_x();
    let t = spec.transform();
    let theta = start_theta(spec, data, theta0)?;
    let obj = |th: &[f64]| gamma_objective(spec, data, level, th);
    let (mut theta, iters, bfgs_ok, msg) = bfgs_theta(&t, &theta, obj, opts)?;
    debug!("{} bfgs: {iters} iterations, {msg}", spec.id());
    let w = |e: f64| e - 1.0;
    let polish_steps = polish(spec, data, level, &mut theta, &w, obj, opts.score_tol, 50)?;
    let m = moment(spec, data, level, &theta, &w)?;
    let near = t.near_bound(&theta, 1e-6);
    let boundary = near.iter().any(|b| *b);
    let score_norm = score_gamma(&m.path.residuals, &m.rows.a).norm();
    let solved = score_norm <= opts.score_tol * (1.0 + norm(&theta));

    let eps = &m.path.residuals;
    let sigma2 = sigma2_gmm(eps);
    let phi = 1.0 / sigma2;
    let pieces = ScorePieces::gamma(m.rows.a.clone(), eps.clone(), phi);
    let avar = avar_gamma(&pieces, phi, sigma2);
    let identified = avar.is_ok();
    if !solved && !boundary && identified {
        return Err(Error::NonConvergence {
            iterations: iters + polish_steps,
            message: format!("score norm {score_norm:.3e} after optimization ({msg})"),
            best: theta,
        });
    }
    let mut notes = Vec::new();
    if let Err(e) = &avar {
        notes.push(format!("not identified: {e}"));
    }
    let avar = avar.ok();
    let phi_ml = if opts.solve_phi_ml { phi_ml(eps).ok() } else { None };
    let n = data.len();
    let result = FitResult {
        model: spec.id(),
        estimator: Estimator::GammaQml,
        n_obs: n,
        params: estimates(spec, &theta, avar.as_ref(), n, AvarVariant::Sandwich, &near),
        shape: Some(ShapeEstimate { name: "phi".into(), value: phi, phi_ml }),
        sigma2_hat: Some(sigma2),
        loglik: Some(gamma_loglik(&data.x, &m.path.mu, phi)),
        gmm_criterion: None,
        identified,
        ljung_box: ljung_box_table(eps).unwrap_or_default(),
        convergence: Convergence {
            converged: bfgs_ok || solved,
            iterations: iters + polish_steps,
            message: msg,
            score_norm: Some(score_norm),
            boundary,
            one_sided: one_sided_names(spec, &m.rows),
        },
        constants: BTreeMap::from([("level".to_string(), level)]),
        notes,
        path: fitted_path(data, &m.path),
    };
    Ok(MemFit { params: spec.params(&theta, level)?, result, spec: *spec, level, path: m.path, avar })
}

/// GMM on `N^-1 sum (eps_i - 1) a_i = 0`: Levenberg-Marquardt on the squared
/// moment norm with Jacobian `-N^-1 sum eps_i a_i a_i'`. Tolerates zeros.
pub fn fit_gmm(spec: &MemSpec, data: &FilterData, theta0: Option<&[f64]>, opts: &FitOptions) -> Result<MemFit> {
    check_data(data, spec)?;
    let level = data.mean_x();
    let t = spec.transform();
    let mut theta = start_theta(spec, data, theta0)?;
    let w = |e: f64| e - 1.0;
    let n = data.len();
    let mut m = moment(spec, data, level, &theta, &w)?;
    let mut lambda = 1e-3;
    let mut lambda_ls = 1e-3;
    let mut iters = 0;
    let tol = |th: &[f64]| opts.score_tol * (1.0 + norm(th));
    while iters < opts.max_iter && m.g.norm() > 0.1 * tol(&theta) {
        iters += 1;
        let mut j = DMatrix::zeros(theta.len(), theta.len());
        for i in 0..n {
            let row = m.rows.a.row(i).transpose();
            j.ger(m.path.residuals[i], &row, &row, 1.0);
        }
        j /= n as f64;
        let diag = DMatrix::from_diagonal(&j.diagonal());
        let mut moved = false;
        for _ in 0..40 {
            let lhs = &j + &diag * lambda;
            let Some(delta) = lhs.lu().solve(&m.g) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a + d).collect();
            if t.contains(&cand) {
                if let Ok(mc) = moment(spec, data, level, &cand, &w) {
                    if mc.g.norm() < m.g.norm() {
                        theta = cand;
                        m = mc;
                        lambda = (lambda / 10.0).max(1e-12);
                        moved = true;
                        break;
                    }
                }
            }
            lambda *= 10.0;
        }
        if !moved {
            // the scoring Jacobian ignores how a_i moves with theta; fall back
            // to least squares on the exact moment Jacobian
            match lm_least_squares(spec, data, level, &theta, &w, &mut lambda_ls)? {
                Some((th, mc)) => {
                    theta = th;
                    m = mc;
                    lambda = 1e-3;
                }
                None => break,
            }
        }
    }
    let score_norm = m.g.norm();
    let near = t.near_bound(&theta, 1e-6);
    let boundary = near.iter().any(|b| *b);
    let solved = score_norm <= tol(&theta);
    let eps = &m.path.residuals;
    let sigma2 = sigma2_gmm(eps);
    let phi = 1.0 / sigma2;
    let pieces = ScorePieces::gamma(m.rows.a.clone(), eps.clone(), phi);
    let avar = avar_gamma(&pieces, phi, sigma2);
    let identified = avar.is_ok();
    if !solved && !boundary && identified {
        return Err(Error::NonConvergence {
            iterations: iters,
            message: format!("GMM moment norm {score_norm:.3e}"),
            best: theta,
        });
    }
    let mut notes = Vec::new();
    if let Err(e) = &avar {
        notes.push(format!("not identified: {e}"));
    }
    let avar = avar.ok();
    let result = FitResult {
        model: spec.id(),
        estimator: Estimator::Gmm,
        n_obs: n,
        params: estimates(spec, &theta, avar.as_ref(), n, AvarVariant::Sandwich, &near),
        shape: Some(ShapeEstimate { name: "phi".into(), value: phi, phi_ml: None }),
        sigma2_hat: Some(sigma2),
        loglik: None,
        gmm_criterion: Some(score_norm * score_norm),
        identified,
        ljung_box: ljung_box_table(eps).unwrap_or_default(),
        convergence: Convergence {
            converged: solved,
            iterations: iters,
            message: if solved { "moment tolerance".into() } else { "stopped at boundary".into() },
            score_norm: Some(score_norm),
            boundary,
            one_sided: one_sided_names(spec, &m.rows),
        },
        constants: BTreeMap::from([("level".to_string(), level)]),
        notes,
        path: fitted_path(data, &m.path),
    };
    Ok(MemFit { params: spec.params(&theta, level)?, result, spec: *spec, level, path: m.path, avar })
}

/// One Levenberg-Marquardt step on `|g|^2` with a forward-difference
/// Jacobian of the moment. `None` when no damping reduces the norm.
fn lm_least_squares<W: Fn(f64) -> f64>(
    spec: &MemSpec,
    data: &FilterData,
    level: f64,
    theta: &[f64],
    w: &W,
    lambda: &mut f64,
) -> Result<Option<(Vec<f64>, Moment)>> {
    let t = spec.transform();
    let base = moment(spec, data, level, theta, w)?;
    let p = theta.len();
    let mut jac = DMatrix::zeros(p, p);
    let mut th = theta.to_vec();
    for k in 0..p {
        let h = 1e-5 * theta[k].abs().max(0.1);
        th[k] = theta[k] + h;
        let sign = if t.contains(&th) {
            1.0
        } else {
            th[k] = theta[k] - h;
            -1.0
        };
        let mk = moment(spec, data, level, &th, w)?;
        th[k] = theta[k];
        jac.set_column(k, &((&mk.g - &base.g) / (sign * h)));
    }
    let jtj = jac.tr_mul(&jac);
    let jtg = jac.tr_mul(&base.g);
    let diag = DMatrix::from_diagonal(&jtj.diagonal().map(|d| d.max(1e-12)));
    for _ in 0..30 {
        if let Some(delta) = (&jtj + &diag * *lambda).lu().solve(&jtg) {
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a - d).collect();
            if t.contains(&cand) {
                if let Ok(mc) = moment(spec, data, level, &cand, w) {
                    if mc.g.norm() < base.g.norm() {
                        *lambda = (*lambda / 10.0).max(1e-12);
                        return Ok(Some((cand, mc)));
                    }
                }
            }
        }
        *lambda *= 10.0;
    }
    Ok(None)
}

/// Log-normal ML: alternates a `theta` step at fixed `V` with a `V` update
/// from the residuals until both settle.
pub fn fit_ml_lognormal(spec: &MemSpec, data: &FilterData, theta0: Option<&[f64]>, opts: &FitOptions) -> Result<MemFit> {
    check_data(data, spec)?;
    if data.has_zeros() {
        return Err(Error::Unfeasible("log-normal ML unfeasible with zeros".into()));
    }
    if opts.v_estimator == VEstimator::Mm && spec.model != MemModel::Amem {
        return Err(Error::invalid(format!(
            "the moment estimator of V leaves the scale of {} unidentified; use the ML or sample-variance estimator",
            spec.id()
        )));
    }
    let level = data.mean_x();
    let t = spec.transform();
    let mut theta = start_theta(spec, data, theta0)?;
    let mut v = opts.v_estimator.estimate(&spec.path(&theta, data, level)?.residuals)?;
    let mut total_iters = 0;
    let mut cycles = 0;
    let mut settled = false;
    // With the ML or MM estimator, V(theta) is profiled out and single
    // scoring steps run on the concentrated criterion, whose stationary
    // points are the fixed points of the alternation.
    let profiled = matches!(opts.v_estimator, VEstimator::Ml | VEstimator::Mm);
    while cycles < opts.max_cycles {
        cycles += 1;
        let profile = |th: &[f64]| profile_objective(spec, data, level, opts.v_estimator, th);
        let prev = theta.clone();
        if cycles == 1 {
            let v0 = v;
            let (th, iters, _, _) = if profiled {
                bfgs_theta(&t, &theta, profile, opts)?
            } else {
                bfgs_theta(&t, &theta, |th: &[f64]| lognormal_objective(spec, data, level, v0, th), opts)?
            };
            theta = th;
            total_iters += iters;
            v = opts.v_estimator.estimate(&spec.path(&theta, data, level)?.residuals)?;
        }
        let vv = v;
        let fixed_v = |th: &[f64]| lognormal_objective(spec, data, level, vv, th);
        let w = move |e: f64| e.ln() + vv / 2.0;
        total_iters += if profiled {
            polish(spec, data, level, &mut theta, &w, profile, opts.score_tol * 1e-2, 1)?
        } else {
            polish(spec, data, level, &mut theta, &w, fixed_v, opts.score_tol * 1e-2, 50)?
        };
        let v_new = opts.v_estimator.estimate(&spec.path(&theta, data, level)?.residuals)?;
        let change = prev
            .iter()
            .zip(&theta)
            .map(|(a, b)| (a - b).abs())
            .fold((v_new - v).abs(), f64::max);
        v = v_new;
        if change < opts.alternation_tol {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(Error::NonConvergence {
            iterations: cycles,
            message: "theta / V alternation did not settle".into(),
            best: theta,
        });
    }
    let vv = v;
    let m = moment(spec, data, level, &theta, &|e: f64| (e.ln() + vv / 2.0) / vv)?;
    let near = t.near_bound(&theta, 1e-6);
    let boundary = near.iter().any(|b| *b);
    let eps = &m.path.residuals;
    let pieces = ScorePieces::lognormal(m.rows.a.clone(), eps.clone(), v);
    let avar = avar_lognormal(&pieces, v);
    let identified = avar.is_ok();
    let mut notes = Vec::new();
    if let Err(e) = &avar {
        notes.push(format!("not identified: {e}"));
    }
    let avar = avar.ok();
    let n = data.len();
    let score_norm = m.g.norm();
    let result = FitResult {
        model: spec.id(),
        estimator: Estimator::LognormalMl,
        n_obs: n,
        params: estimates(spec, &theta, avar.as_ref(), n, AvarVariant::Hessian, &near),
        shape: Some(ShapeEstimate { name: "V".into(), value: v, phi_ml: None }),
        sigma2_hat: Some(v.exp_m1()),
        loglik: Some(lognormal_loglik(&data.x, &m.path.mu, v)),
        gmm_criterion: None,
        identified,
        ljung_box: ljung_box_table(eps).unwrap_or_default(),
        convergence: Convergence {
            converged: true,
            iterations: total_iters,
            message: format!("alternation settled after {cycles} cycles"),
            score_norm: Some(score_norm),
            boundary,
            one_sided: one_sided_names(spec, &m.rows),
        },
        constants: BTreeMap::from([("level".to_string(), level)]),
        notes,
        path: fitted_path(data, &m.path),
    };
    Ok(MemFit { params: spec.params(&theta, level)?, result, spec: *spec, level, path: m.path, avar })
}

/// Dispatches on the estimator.
pub fn fit_mem(
    spec: &MemSpec,
    data: &FilterData,
    estimator: Estimator,
    theta0: Option<&[f64]>,
    opts: &FitOptions,
) -> Result<MemFit> {
    match estimator {
        Estimator::GammaQml => fit_ml_gamma(spec, data, theta0, opts),
        Estimator::LognormalMl => fit_ml_lognormal(spec, data, theta0, opts),
        Estimator::Gmm => fit_gmm(spec, data, theta0, opts),
        other => Err(Error::invalid(format!("estimator {other} does not apply to {}", spec.id()))),
    }
}
