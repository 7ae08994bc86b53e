//! Benchmark volatility models: a leverage HAR fitted by OLS and the
//! GARCH-type models fitted by Gaussian (quasi-)ML on returns.

mod ahar;
mod garch;
mod qml;

pub use ahar::{fit_ahar, regressors, AharFit, AharParams, AHAR_FLOOR, AHAR_LAGS};
pub use garch::{
    filter_gjr, filter_gm_dagm, fit_garch_family, fit_garch_from, gjr_variance, gm_dagm_path, rgarch_variance,
    GarchConstants, GarchFit, GarchFitOptions, GarchMidasPath, GarchModel, GarchParams, GjrParams, GmDagmParams,
    MacroLoading, RgarchParams,
};

use crate::error::{Error, Result};

/// `sqrt(h)`: a variance forecast in the units of realized volatility.
pub fn variance_to_vol_forecast(h: f64) -> Result<f64> {
    if !(h >= 0.0) || !h.is_finite() {
        return Err(Error::invalid(format!("variance forecast must be nonnegative and finite, got {h}")));
    }
    Ok(h.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vol_from_variance() {
        assert_eq!(variance_to_vol_forecast(1.0).unwrap(), 1.0);
        assert_eq!(variance_to_vol_forecast(0.0).unwrap(), 0.0);
        assert!((variance_to_vol_forecast(164.3524).unwrap() - 12.82).abs() < 1e-12);
        assert!(variance_to_vol_forecast(-1e-9).is_err());
        assert!(variance_to_vol_forecast(f64::NAN).is_err());
    }
}
