use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{Error, Result};

/// Per-observation ingredients of the score: `a_i = grad mu_i / mu_i`, the
/// residuals `eps_i` and `b_i = d ln f(eps_i) / d eps`.
#[derive(Debug, Clone)]
pub struct ScorePieces {
    pub a: DMatrix<f64>,
    pub eps: Vec<f64>,
    pub b: Vec<f64>,
}

impl ScorePieces {
    /// Gamma: `b = (phi - 1)/eps - phi`.
    pub fn gamma(a: DMatrix<f64>, eps: Vec<f64>, phi: f64) -> Self {
        let b = eps.iter().map(|e| (phi - 1.0) / e - phi).collect();
        ScorePieces { a, eps, b }
    }

    /// Log-normal: `b = -(1/eps)(1 + (ln eps + V/2)/V)`.
    pub fn lognormal(a: DMatrix<f64>, eps: Vec<f64>, v: f64) -> Self {
        let b = eps.iter().map(|e| -(1.0 + (e.ln() + v / 2.0) / v) / e).collect();
        ScorePieces { a, eps, b }
    }

    pub fn n(&self) -> usize {
        self.eps.len()
    }

    /// `N^-1 sum -(1 + eps_i b_i) a_i`, the likelihood score per observation.
    pub fn assembled(&self) -> DVector<f64> {
        let w: Vec<f64> = self.eps.iter().zip(&self.b).map(|(e, b)| -(1.0 + e * b)).collect();
        weighted_mean_rows(&self.a, &w)
    }

    /// `A = N^-1 sum a_i a_i'`.
    pub fn a_outer(&self) -> DMatrix<f64> {
        self.a.tr_mul(&self.a) / self.n() as f64
    }

    /// `N^-1 sum a_i`.
    pub fn a_mean(&self) -> DVector<f64> {
        weighted_mean_rows(&self.a, &vec![1.0; self.n()])
    }
}

pub(crate) fn weighted_mean_rows(a: &DMatrix<f64>, w: &[f64]) -> DVector<f64> {
    let n = a.nrows();
    let wv = DVector::from_column_slice(w);
    a.tr_mul(&wv) / n as f64
}

/// `N^-1 sum (eps_i - 1) a_i`; the Gamma score without its `phi` factor.
pub fn score_gamma(eps: &[f64], a: &DMatrix<f64>) -> DVector<f64> {
    let w: Vec<f64> = eps.iter().map(|e| e - 1.0).collect();
    weighted_mean_rows(a, &w)
}

/// `V^-1 N^-1 sum (ln eps_i + V/2) a_i`.
pub fn score_lognormal(eps: &[f64], a: &DMatrix<f64>, v: f64) -> DVector<f64> {
    let w: Vec<f64> = eps.iter().map(|e| (e.ln() + v / 2.0) / v).collect();
    weighted_mean_rows(a, &w)
}

/// `N^-1 sum (eps_i - 1)^2`.
pub fn sigma2_gmm(eps: &[f64]) -> f64 {
    if eps.is_empty() {
        return f64::NAN;
    }
    eps.iter().map(|e| (e - 1.0).powi(2)).sum::<f64>() / eps.len() as f64
}

fn require_positive(eps: &[f64], what: &str) -> Result<()> {
    if eps.is_empty() {
        return Err(Error::NoObservations);
    }
    if eps.iter().any(|&e| e == 0.0) {
        return Err(Error::Unfeasible(format!("{what} unfeasible with zeros")));
    }
    if eps.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
        return Err(Error::invalid(format!("{what} needs positive finite residuals")));
    }
    Ok(())
}

const PHI_LO: f64 = 1e-4;
const PHI_HI: f64 = 1e6;

/// Root of `ln phi + 1 - digamma(phi) + mean(ln eps - eps) = 0` on
/// `(1e-4, 1e6)`, by bisection in `ln phi`.
pub fn phi_ml(eps: &[f64]) -> Result<f64> {
    require_positive(eps, "phi_ml")?;
    let c = eps.iter().map(|e| e.ln() - e).sum::<f64>() / eps.len() as f64;
    let g = |phi: f64| phi.ln() + 1.0 - digamma(phi) + c;
    let (mut lo, mut hi) = (PHI_LO.ln(), PHI_HI.ln());
    let (glo, ghi) = (g(PHI_LO), g(PHI_HI));
    if glo.signum() == ghi.signum() {
        return Err(Error::NonConvergence {
            iterations: 0,
            message: format!("phi_ml has no root in ({PHI_LO}, {PHI_HI})"),
            best: vec![if ghi > 0.0 { PHI_HI } else { PHI_LO }],
        });
    }
    // g is decreasing in phi
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid.exp()) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    Ok((0.5 * (lo + hi)).exp())
}

/// `2 (sqrt(mean(ln^2 eps) + 1) - 1)`.
pub fn v_ml(eps: &[f64]) -> Result<f64> {
    require_positive(eps, "v_ml")?;
    let m2 = eps.iter().map(|e| e.ln().powi(2)).sum::<f64>() / eps.len() as f64;
    Ok(2.0 * ((m2 + 1.0).sqrt() - 1.0))
}

/// `-2 mean(ln eps)`.
pub fn v_mm(eps: &[f64]) -> Result<f64> {
    require_positive(eps, "v_mm")?;
    Ok(-2.0 * eps.iter().map(|e| e.ln()).sum::<f64>() / eps.len() as f64)
}

/// Sample variance of `ln eps`.
pub fn v_sample_var(eps: &[f64]) -> Result<f64> {
    require_positive(eps, "v_sample_var")?;
    let n = eps.len() as f64;
    let m = eps.iter().map(|e| e.ln()).sum::<f64>() / n;
    Ok(eps.iter().map(|e| (e.ln() - m).powi(2)).sum::<f64>() / n)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VEstimator {
    Mm,
    #[default]
    Ml,
    SampleVariance,
}

impl VEstimator {
    pub fn estimate(self, eps: &[f64]) -> Result<f64> {
        match self {
            VEstimator::Mm => v_mm(eps),
            VEstimator::Ml => v_ml(eps),
            VEstimator::SampleVariance => v_sample_var(eps),
        }
    }
}

/// Mean Gamma log-likelihood of `x = mu * eps`.
pub fn gamma_loglik(x: &[f64], mu: &[f64], phi: f64) -> f64 {
    let c = phi * phi.ln() - ln_gamma(phi);
    let total: f64 = x
        .iter()
        .zip(mu)
        .map(|(x, m)| {
            let e = x / m;
            c + (phi - 1.0) * e.ln() - phi * e - m.ln()
        })
        .sum();
    total / x.len() as f64
}

/// Mean log-normal log-likelihood of `x = mu * eps`, `ln eps ~ N(-V/2, V)`.
pub fn lognormal_loglik(x: &[f64], mu: &[f64], v: f64) -> f64 {
    let c = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
    let total: f64 = x
        .iter()
        .zip(mu)
        .map(|(x, m)| {
            let l = (x / m).ln();
            c - (l + v / 2.0).powi(2) / (2.0 * v) - x.ln()
        })
        .sum();
    total / x.len() as f64
}
