use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Rows `a_i = grad mu_i / mu_i` and which coordinates fell back to a
/// one-sided difference near a bound.
#[derive(Debug, Clone)]
pub struct GradientRows {
    pub a: DMatrix<f64>,
    pub one_sided: Vec<bool>,
}

/// Finite-difference step for coordinate value `v`.
pub fn fd_step(v: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-8)
}

/// Central differences of the whole mean path. A coordinate whose two-sided
/// step leaves the feasible set is differenced on one side only.
pub fn gradient_rows<M, F>(theta: &[f64], feasible: F, mu_of: M) -> Result<GradientRows>
where
    M: Fn(&[f64]) -> Result<Vec<f64>>,
    F: Fn(&[f64]) -> bool,
{
    let mu = mu_of(theta)?;
    let n = mu.len();
    let p = theta.len();
    let mut a = DMatrix::zeros(n, p);
    let mut one_sided = vec![false; p];
    let mut th = theta.to_vec();
    for j in 0..p {
        let h = fd_step(theta[j]);
        th[j] = theta[j] + h;
        let up_ok = feasible(&th);
        th[j] = theta[j] - h;
        let down_ok = feasible(&th);
        th[j] = theta[j];
        let (lo, hi, width) = match (down_ok, up_ok) {
            (true, true) => (theta[j] - h, theta[j] + h, 2.0 * h),
            (false, true) => (theta[j], theta[j] + h, h),
            (true, false) => (theta[j] - h, theta[j], h),
            (false, false) => {
                return Err(Error::Unfeasible(format!(
                    "parameter {j} has no feasible finite-difference step"
                )))
            }
        };
        one_sided[j] = !(down_ok && up_ok);
        let eval = |v: f64, th: &mut Vec<f64>| -> Result<Vec<f64>> {
            if v == theta[j] {
                return Ok(mu.clone());
            }
            th[j] = v;
            let out = mu_of(th);
            th[j] = theta[j];
            out
        };
        let m_hi = eval(hi, &mut th)?;
        let m_lo = eval(lo, &mut th)?;
        for i in 0..n {
            a[(i, j)] = (m_hi[i] - m_lo[i]) / (width * mu[i]);
        }
    }
    Ok(GradientRows { a, one_sided })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_level() {
        let rows = gradient_rows(&[4.0], |t| t[0] > 0.0, |t| Ok(vec![t[0]; 5])).unwrap();
        for i in 0..5 {
            assert!((rows.a[(i, 0)] - 0.25).abs() < 1e-9);
        }
        assert!(!rows.one_sided[0]);
    }

    #[test]
    fn one_lag_recursion() {
        // mu_i = a0 + a1 x_{i-1}: d log mu / d a1 = x_{i-1} / mu_i
        let x = [3.0, 1.0, 4.0, 1.0, 5.0];
        let mu_of = |t: &[f64]| -> Result<Vec<f64>> {
            let mut m = vec![t[0]];
            m.extend(x[..4].iter().map(|v| t[0] + t[1] * v));
            Ok(m)
        };
        let th = [1.0, 0.3];
        let rows = gradient_rows(&th, |t| t[1] >= 0.0, mu_of).unwrap();
        let mu = mu_of(&th).unwrap();
        for i in 1..5 {
            assert!((rows.a[(i, 1)] - x[i - 1] / mu[i]).abs() < 1e-8);
        }
    }

    #[test]
    fn one_sided_at_bound() {
        let rows = gradient_rows(&[0.0], |t| t[0] >= 0.0, |t| Ok(vec![1.0 + t[0] * 2.0])).unwrap();
        assert!(rows.one_sided[0]);
        assert!((rows.a[(0, 0)] - 2.0).abs() < 1e-6);
    }
}
