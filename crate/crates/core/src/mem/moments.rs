use serde::Serialize;

use super::{LongRunComponentParams, ShortRunParams};
use crate::error::{Error, Result};

/// `E(xi^2)` for unit-mean errors with variance `sigma2`, ignoring any
/// exogenous term:
///
/// ```text
/// (1 - b*^2) / (1 - [(sigma2 + 1) ((b* - b1)^2 + g1^2/4) + b1 (2 b* - b1)])
/// ```
pub fn xi_second_moment(short: &ShortRunParams, sigma2: f64) -> Result<f64> {
    short.validate()?;
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::invalid(format!("error variance {sigma2} must be >= 0")));
    }
    let ShortRunParams { alpha1: _, gamma1: g, beta1: b, .. } = *short;
    let p = short.persistence();
    let denom = 1.0 - ((sigma2 + 1.0) * ((p - b).powi(2) + g * g / 4.0) + b * (2.0 * p - b));
    if denom <= 0.0 {
        return Err(Error::NoSecondMoment(denom));
    }
    Ok((1.0 - p * p) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComponentMoments {
    pub e_tau: f64,
    /// `omega_tau` that makes `E(tau)` consistent with the mean `mu`.
    pub omega_tau_implied: f64,
}

/// Mean-stationary `E(tau)` of the Component-MEM with unconditional mean `mu`:
///
/// ```text
/// E(tau) = mu (1 - D / (1 - b* b*_tau))
/// D = sigma2 (a1 + g1/2)(a1_tau + g1_tau/2) + (sigma2 + 1) g1 g1_tau / 4
/// ```
///
/// and `omega_tau = E(tau) (1 - b*_tau)`.
pub fn component_stationarity(
    short: &ShortRunParams,
    long: &LongRunComponentParams,
    mu: f64,
    sigma2: f64,
) -> Result<ComponentMoments> {
    short.validate()?;
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::invalid(format!("mean {mu} must be > 0")));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::invalid(format!("error variance {sigma2} must be >= 0")));
    }
    let (p, pt) = (short.persistence(), long.persistence());
    if p * pt >= 1.0 {
        return Err(Error::Constraint(format!("persistence product {} must be < 1", p * pt)));
    }
    let d = sigma2 * (short.alpha1 + short.gamma1 / 2.0) * (long.alpha1_tau + long.gamma1_tau / 2.0)
        + (sigma2 + 1.0) * short.gamma1 * long.gamma1_tau / 4.0;
    let e_tau = mu * (1.0 - d / (1.0 - p * pt));
    let nonneg = [long.alpha1_tau, long.gamma1_tau, long.beta1_tau].iter().all(|&v| v >= 0.0);
    if nonneg && e_tau > mu * (1.0 + 1e-12) {
        return Err(Error::Constraint(format!("E(tau) = {e_tau} exceeds the mean {mu}")));
    }
    Ok(ComponentMoments { e_tau, omega_tau_implied: e_tau * (1.0 - pt) })
}
