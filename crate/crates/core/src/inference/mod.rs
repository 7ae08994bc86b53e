//! Estimation of the MEM family: Gamma QML, log-normal ML alternating
//! between `theta` and `V`, and GMM on the Gamma moment conditions, with
//! score assembly and the three asymptotic variance forms.

mod avar;
mod fit;
mod gradient;
mod result;
mod score;

pub use avar::{avar_gamma, avar_lognormal, block_avar, lognormal_hessian_closed_form, spd_inverse, AvarSet, AvarVariant};
pub use fit::{fit_gmm, fit_mem, fit_ml_gamma, fit_ml_lognormal, gradient_a, FitOptions, MemFit};
pub use gradient::{fd_step, gradient_rows, GradientRows};
pub use result::{Convergence, Estimator, FitResult, FittedPath, ModelId, ParamEstimate, ShapeEstimate};
pub use score::{
    gamma_loglik, lognormal_loglik, phi_ml, score_gamma, score_lognormal, sigma2_gmm, v_ml, v_mm,
    v_sample_var, ScorePieces, VEstimator,
};

use serde::{Deserialize, Serialize};

use crate::data::FilterData;
use crate::error::{Error, Result};
use crate::mem::{
    LongRunComponentParams, MeanPath, MemParams, MidasLongRunParams, ShortRunParams,
};
use crate::midas::{BetaLag, OMEGA2_LOWER};
use crate::optim::{Block, Transform};
use crate::timeseries::PanelSeries;

/// Which member of the family, with its structural settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum MemModel {
    Amem,
    ComponentMem,
    MemMidas { k: usize },
}

/// A MEM specification: the model and whether the exogenous `delta1 z`
/// term is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MemSpec {
    #[serde(flatten)]
    pub model: MemModel,
    #[serde(default)]
    pub exog: bool,
}

impl MemSpec {
    pub fn amem() -> Self {
        MemSpec { model: MemModel::Amem, exog: false }
    }

    pub fn component() -> Self {
        MemSpec { model: MemModel::ComponentMem, exog: false }
    }

    pub fn midas(k: usize) -> Self {
        MemSpec { model: MemModel::MemMidas { k }, exog: false }
    }

    pub fn id(&self) -> ModelId {
        match self.model {
            MemModel::Amem => ModelId::Amem,
            MemModel::ComponentMem => ModelId::ComponentMem,
            MemModel::MemMidas { .. } => ModelId::MemMidas,
        }
    }

    pub fn macro_k(&self) -> Option<usize> {
        match self.model {
            MemModel::MemMidas { k } => Some(k),
            _ => None,
        }
    }

    pub fn names(&self) -> Vec<&'static str> {
        let mut n = vec!["alpha1", "gamma1", "beta1"];
        match self.model {
            MemModel::Amem => {}
            MemModel::ComponentMem => n.extend(["omega_tau", "alpha1_tau", "gamma1_tau", "beta1_tau"]),
            MemModel::MemMidas { .. } => n.extend(["m", "zeta", "omega2"]),
        }
        if self.exog {
            n.push("delta1");
        }
        n
    }

    pub fn transform(&self) -> Transform {
        let mut t = Transform::new(vec![Block::Simplex(vec![1.0, 2.0, 1.0])]);
        match self.model {
            MemModel::Amem => {}
            MemModel::ComponentMem => {
                t.push(Block::Above(0.0)).push(Block::Simplex(vec![1.0, 2.0, 1.0]));
            }
            MemModel::MemMidas { .. } => {
                t.push(Block::Free).push(Block::Free).push(Block::Above(OMEGA2_LOWER));
            }
        }
        if self.exog {
            t.push(Block::Free);
        }
        t
    }

    /// Filter inputs for this model from a panel.
    pub fn prepare(&self, series: &PanelSeries) -> Result<FilterData> {
        let d = FilterData::from_series(series, self.macro_k())?;
        if self.exog && d.z.is_none() {
            return Err(Error::invalid("model estimates delta1 but the panel has no exogenous series"));
        }
        Ok(d)
    }

    /// `theta -> MemParams`. `level` is the targeted mean (AMEM) and is
    /// unused otherwise.
    pub fn params(&self, theta: &[f64], level: f64) -> Result<MemParams> {
        let want = self.names().len();
        if theta.len() != want {
            return Err(Error::invalid(format!("expected {want} parameters, got {}", theta.len())));
        }
        let mut short = ShortRunParams::new(theta[0], theta[1], theta[2]);
        if self.exog {
            short.delta1 = Some(theta[want - 1]);
        }
        Ok(match self.model {
            MemModel::Amem => MemParams::Amem { short, level },
            MemModel::ComponentMem => MemParams::Component {
                short,
                long: LongRunComponentParams {
                    omega_tau: theta[3],
                    alpha1_tau: theta[4],
                    gamma1_tau: theta[5],
                    beta1_tau: theta[6],
                },
            },
            MemModel::MemMidas { k } => MemParams::Midas {
                short,
                long: MidasLongRunParams { m: theta[3], zeta: theta[4], lag: BetaLag { k, omega1: 1.0, omega2: theta[5] } },
            },
        })
    }

    /// Inverse of [`MemSpec::params`].
    pub fn theta(&self, params: &MemParams) -> Result<Vec<f64>> {
        let s = params.short();
        let mut th = vec![s.alpha1, s.gamma1, s.beta1];
        match (self.model, params) {
            (MemModel::Amem, MemParams::Amem { .. }) => {}
            (MemModel::ComponentMem, MemParams::Component { long, .. }) => {
                th.extend([long.omega_tau, long.alpha1_tau, long.gamma1_tau, long.beta1_tau])
            }
            (MemModel::MemMidas { k }, MemParams::Midas { long, .. }) if long.lag.k == k => {
                th.extend([long.m, long.zeta, long.lag.omega2])
            }
            _ => return Err(Error::invalid("parameters do not match the model")),
        }
        if self.exog {
            th.push(s.delta1.unwrap_or(0.0));
        }
        Ok(th)
    }

    /// Starting values scaled to the data.
    pub fn default_start(&self, data: &FilterData) -> Vec<f64> {
        let level = data.mean_x();
        let mut th = match self.model {
            MemModel::Amem => vec![0.1, 0.05, 0.8],
            MemModel::ComponentMem => vec![0.15, 0.05, 0.6, 0.02 * level, 0.03, 0.01, 0.945],
            MemModel::MemMidas { .. } => vec![0.1, 0.05, 0.8, level.ln(), 0.01, 5.0],
        };
        if self.exog {
            th.push(0.0);
        }
        th
    }

    /// Filtered path at `theta`; `level` is the estimation-window mean.
    pub fn path(&self, theta: &[f64], data: &FilterData, level: f64) -> Result<MeanPath> {
        self.params(theta, level)?.path(data, level)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn theta_round_trip() {
        for spec in [MemSpec::amem(), MemSpec::component(), MemSpec::midas(12), MemSpec { exog: true, ..MemSpec::midas(3) }] {
            let n = spec.names().len();
            assert_eq!(spec.transform().dim(), n);
            let th: Vec<f64> = match spec.model {
                MemModel::Amem => vec![0.1, 0.1, 0.7],
                MemModel::ComponentMem => vec![0.1, 0.1, 0.7, 0.2, 0.03, 0.02, 0.9],
                MemModel::MemMidas { .. } => {
                    let mut v = vec![0.1, 0.1, 0.7, 2.0, -0.2, 4.0];
                    if spec.exog {
                        v.push(0.3);
                    }
                    v
                }
            };
            let p = spec.params(&th, 10.0).unwrap();
            assert_eq!(spec.theta(&p).unwrap(), th);
        }
    }

    #[test]
    fn spec_serde() {
        let s: MemSpec = serde_json::from_str(r#"{"model":"mem-midas","k":36}"#).unwrap();
        assert_eq!(s, MemSpec::midas(36));
        let s: MemSpec = serde_json::from_str(r#"{"model":"component-mem","exog":true}"#).unwrap();
        assert!(s.exog);
    }
}
