//! Beta-lag polynomial weights shared by MEM-MIDAS, GARCH-MIDAS and DAGM.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound used for the free shape `omega2` during estimation.
pub const OMEGA2_LOWER: f64 = 1.001;

/// Beta-lag weighting over `k` low-frequency lags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaLag {
    pub k: usize,
    pub omega1: f64,
    pub omega2: f64,
}

impl BetaLag {
    pub fn new(k: usize, omega1: f64, omega2: f64) -> Result<Self> {
        let b = BetaLag { k, omega1, omega2 };
        b.validate()?;
        Ok(b)
    }

    /// The estimated form: `omega1 = 1`, decaying weights for `omega2 > 1`.
    pub fn decaying(k: usize, omega2: f64) -> Result<Self> {
        Self::new(k, 1.0, omega2)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("beta-lag needs at least one lag"));
        }
        if !(self.omega1.is_finite() && self.omega2.is_finite()) {
            return Err(Error::invalid("beta-lag shapes must be finite"));
        }
        if self.omega1 < 1.0 || self.omega2 < 1.0 {
            return Err(Error::invalid(format!(
                "beta-lag shapes must be >= 1 (got {}, {})",
                self.omega1, self.omega2
            )));
        }
        Ok(())
    }

    /// `delta_k = (k/K)^(w1-1) (1-k/K)^(w2-1) / sum_j (...)`, for `k = 1..K`.
    ///
    /// Evaluated in log space; `0^p = 0` for `p > 0` and `0^0 = 1`. With a
    /// single lag the only weight is 1.
    pub fn weights(&self) -> Result<Vec<f64>> {
        self.validate()?;
        let kf = self.k as f64;
        let log_term = |base: f64, p: f64| -> f64 {
            if p == 0.0 {
                0.0
            } else if base == 0.0 {
                f64::NEG_INFINITY
            } else {
                p * base.ln()
            }
        };
        let logs: Vec<f64> = (1..=self.k)
            .map(|j| {
                let u = j as f64 / kf;
                log_term(u, self.omega1 - 1.0) + log_term(1.0 - u, self.omega2 - 1.0)
            })
            .collect();
        let top = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return Ok(vec![1.0]);
        }
        let raw: Vec<f64> = logs.iter().map(|l| (l - top).exp()).collect();
        let total: f64 = raw.iter().sum();
        Ok(raw.into_iter().map(|w| w / total).collect())
    }

    /// `sum_k delta_k X_{t-k}` with `lags = [X_{t-1}, ..., X_{t-K}]`.
    pub fn weighted_sum(&self, lags: &[f64]) -> Result<f64> {
        if lags.len() != self.k {
            return Err(Error::invalid(format!(
                "expected {} lags, got {}",
                self.k,
                lags.len()
            )));
        }
        Ok(dot(&self.weights()?, lags))
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flat_weights() {
        assert_eq!(BetaLag::new(4, 1.0, 1.0).unwrap().weights().unwrap(), vec![0.25; 4]);
    }

    #[test]
    fn two_lag_linear_decay() {
        let w = BetaLag::decaying(2, 2.0).unwrap().weights().unwrap();
        assert_eq!(w, vec![1.0, 0.0]);
    }

    #[test]
    fn three_lag_linear_decay() {
        let w = BetaLag::decaying(3, 2.0).unwrap().weights().unwrap();
        assert!((w[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((w[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(w[2], 0.0);
    }

    #[test]
    fn weighted_sums() {
        let b = BetaLag::decaying(2, 2.0).unwrap();
        assert_eq!(b.weighted_sum(&[3.0, 0.0]).unwrap(), 3.0);
        assert_eq!(b.weighted_sum(&[0.0, 0.0]).unwrap(), 0.0);
        let b = BetaLag::decaying(36, 4.11).unwrap();
        assert!((b.weighted_sum(&[2.5; 36]).unwrap() - 2.5).abs() < 1e-12);
        assert!(b.weighted_sum(&[1.0; 35]).is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(BetaLag::new(0, 1.0, 1.0).is_err());
        assert!(BetaLag::new(3, 1.0, f64::NAN).is_err());
        assert!(BetaLag::new(3, 1.0, f64::INFINITY).is_err());
        assert!(BetaLag::new(3, 0.5, 2.0).is_err());
    }

    #[test]
    fn single_lag_and_huge_shape() {
        assert_eq!(BetaLag::decaying(1, 7.0).unwrap().weights().unwrap(), vec![1.0]);
        let w = BetaLag::decaying(36, 900.0).unwrap().weights().unwrap();
        assert!(w.iter().all(|x| x.is_finite()));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn weights_normalized_and_nonnegative(k in 1usize..80, w1 in 1.0f64..6.0, w2 in 1.0f64..40.0) {
            let w = BetaLag::new(k, w1, w2).unwrap().weights().unwrap();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn weighted_sum_is_linear(
            lags in proptest::collection::vec(-50.0f64..50.0, 12),
            other in proptest::collection::vec(-50.0f64..50.0, 12),
            a in -3.0f64..3.0,
            w2 in 1.0f64..10.0,
        ) {
            let b = BetaLag::decaying(12, w2).unwrap();
            let mixed: Vec<f64> = lags.iter().zip(&other).map(|(x, y)| a * x + y).collect();
            let lhs = b.weighted_sum(&mixed).unwrap();
            let rhs = a * b.weighted_sum(&lags).unwrap() + b.weighted_sum(&other).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }
    }
}
