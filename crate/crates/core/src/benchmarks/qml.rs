//! Gaussian quasi-likelihood fitting shared by the GARCH-type benchmarks.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::inference::{fd_step, spd_inverse, AvarSet};
use crate::optim::{bfgs, BfgsOptions, Transform};

#[derive(Debug, Clone)]
pub(crate) struct QmlOutcome {
    pub theta: Vec<f64>,
    pub avar: Option<AvarSet>,
    pub avar_error: Option<String>,
    /// Mean log-likelihood.
    pub loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub message: String,
    pub score_norm: f64,
    pub near: Vec<bool>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Per-observation score rows by central differences of the log-likelihood
/// rows, one-sided where a step leaves the admissible region.
pub(crate) fn score_rows<L>(t: &Transform, theta: &[f64], rows: &L) -> Result<DMatrix<f64>>
where
    L: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let base = rows(theta)?;
    let n = base.len();
    let p = theta.len();
    let mut s = DMatrix::zeros(n, p);
    let mut th = theta.to_vec();
    for j in 0..p {
        let h = fd_step(theta[j]);
        th[j] = theta[j] + h;
        let up = t.contains(&th);
        let lu = if up { Some(rows(&th)?) } else { None };
        th[j] = theta[j] - h;
        let down = t.contains(&th);
        let ld = if down { Some(rows(&th)?) } else { None };
        th[j] = theta[j];
        let (hi, lo, w) = match (lu, ld) {
            (Some(u), Some(d)) => (u, d, 2.0 * h),
            (Some(u), None) => (u, base.clone(), h),
            (None, Some(d)) => (base.clone(), d, h),
            (None, None) => return Err(Error::Unfeasible(format!("parameter {j} has no feasible step"))),
        };
        for i in 0..n {
            s[(i, j)] = (hi[i] - lo[i]) / w;
        }
    }
    Ok(s)
}

/// Mean Hessian by second differences of the mean log-likelihood. `None`
/// when a difference point leaves the admissible region.
fn hessian<F: Fn(&[f64]) -> f64>(t: &Transform, theta: &[f64], f: &F) -> Option<DMatrix<f64>> {
    let p = theta.len();
    let h: Vec<f64> = theta.iter().map(|v| (1e-4 * v.abs()).max(1e-5)).collect();
    let mut out = DMatrix::zeros(p, p);
    let mut th = theta.to_vec();
    let mut eval = |dj: f64, j: usize, dk: f64, k: usize| -> Option<f64> {
        th.copy_from_slice(theta);
        th[j] += dj;
        th[k] += dk;
        let ok = t.contains(&th);
        let v = if ok { f(&th) } else { f64::NAN };
        v.is_finite().then_some(v)
    };
    for j in 0..p {
        for k in j..p {
            let v = (eval(h[j], j, h[k], k)? - eval(h[j], j, -h[k], k)? - eval(-h[j], j, h[k], k)?
                + eval(-h[j], j, -h[k], k)?)
                / (4.0 * h[j] * h[k]);
            out[(j, k)] = v;
            out[(k, j)] = v;
        }
    }
    Some(out)
}

/// Maximizes `mean(rows(theta))` over the admissible region, then forms the
/// outer-product, Hessian and sandwich variances.
pub(crate) fn fit_gaussian_qml<L>(t: &Transform, theta0: &[f64], rows: L, max_iter: usize) -> Result<QmlOutcome>
where
    L: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if !t.contains(theta0) {
        return Err(Error::Constraint(format!("starting values {theta0:?} are outside the admissible region")));
    }
    let f = |th: &[f64]| match rows(th) {
        Ok(r) => mean(&r),
        Err(_) => f64::NEG_INFINITY,
    };
    let u0 = t.to_free(theta0)?;
    let m = bfgs(
        |u: &[f64]| -f(&t.to_theta(u)),
        &u0,
        &BfgsOptions { max_iter, grad_tol: 1e-6, f_tol: 1e-13 },
    )?;
    let mut theta = t.to_theta(&m.x);
    let mut fx = f(&theta);
    let n_obs = rows(&theta)?.len() as f64;

    // outer-product scoring steps
    let mut steps = 0;
    let mut s = score_rows(t, &theta, &rows)?;
    for _ in 0..50 {
        let g: DVector<f64> = s.row_sum().transpose() / n_obs;
        let tol = 1e-10 * (1.0 + theta.iter().map(|v| v * v).sum::<f64>().sqrt());
        if g.norm() <= tol {
            break;
        }
        let j = s.tr_mul(&s) / n_obs;
        let Some(delta) = j.cholesky().map(|c| c.solve(&g)) else { break };
        let mut step = 1.0;
        let mut moved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = theta.iter().zip(delta.iter()).map(|(a, d)| a + step * d).collect();
            if t.contains(&cand) {
                let fc = f(&cand);
                if fc >= fx {
                    theta = cand;
                    fx = fc;
                    moved = true;
                    break;
                }
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
        steps += 1;
        s = score_rows(t, &theta, &rows)?;
    }
    let g: DVector<f64> = s.row_sum().transpose() / n_obs;
    let score_norm = g.norm();
    let near = t.near_bound(&theta, 1e-6);

    let j = s.tr_mul(&s) / n_obs;
    let (avar, avar_error) = match (spd_inverse(&j), hessian(t, &theta, &f)) {
        (Ok(j_inv), Some(hm)) => match spd_inverse(&(-&hm)) {
            Ok(neg_h_inv) => {
                let sandwich = &neg_h_inv * &j * &neg_h_inv;
                let sandwich = (&sandwich + sandwich.transpose()) * 0.5;
                (Some(AvarSet { opg: j_inv, hessian: neg_h_inv, sandwich, sigma2_hat: f64::NAN, shape_hat: f64::NAN }), None)
            }
            Err(e) => (None, Some(format!("Hessian not invertible: {e}"))),
        },
        (Ok(_), None) => (None, Some("Hessian unavailable at the boundary".to_string())),
        (Err(e), _) => (None, Some(format!("score outer product not invertible: {e}"))),
    };
    let solved = score_norm <= 1e-5 * (1.0 + theta.iter().map(|v| v * v).sum::<f64>().sqrt());
    let boundary = near.iter().any(|b| *b);
    if !solved && !boundary && avar.is_some() {
        return Err(Error::NonConvergence {
            iterations: m.iterations + steps,
            message: format!("Gaussian QML score norm {score_norm:.3e} ({})", m.message),
            best: theta,
        });
    }
    Ok(QmlOutcome {
        theta,
        avar,
        avar_error,
        loglik: fx,
        iterations: m.iterations + steps,
        converged: solved || m.converged,
        message: m.message,
        score_norm,
        near,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optim::Block;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn gaussian_mean_and_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = Normal::new(2.0, 3.0).unwrap();
        let y: Vec<f64> = (0..4000).map(|_| d.sample(&mut rng)).collect();
        let t = Transform::new(vec![Block::Free, Block::Above(0.0)]);
        let rows = |th: &[f64]| -> Result<Vec<f64>> {
            Ok(y.iter()
                .map(|v| -0.5 * ((2.0 * std::f64::consts::PI * th[1]).ln() + (v - th[0]).powi(2) / th[1]))
                .collect())
        };
        let out = fit_gaussian_qml(&t, &[0.0, 1.0], rows, 500).unwrap();
        let n = y.len() as f64;
        let m = y.iter().sum::<f64>() / n;
        let v = y.iter().map(|a| (a - m).powi(2)).sum::<f64>() / n;
        assert!((out.theta[0] - m).abs() < 1e-6, "{:?} vs {m} {v} {}", out.theta, out.score_norm);
        assert!((out.theta[1] - v).abs() < 1e-5);
        let a = out.avar.unwrap();
        // variance of the mean estimator: v
        assert!((a.hessian[(0, 0)] / v - 1.0).abs() < 1e-3);
        assert!((a.sandwich[(0, 0)] / v - 1.0).abs() < 1e-3);
    }
}
