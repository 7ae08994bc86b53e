use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::evaluation::LjungBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelId {
    Amem,
    ComponentMem,
    MemMidas,
    Ahar,
    Gjr,
    Gm,
    Dagm,
    Rgarch,
}

impl ModelId {
    pub const ALL: [ModelId; 8] = [
        ModelId::Amem,
        ModelId::ComponentMem,
        ModelId::MemMidas,
        ModelId::Ahar,
        ModelId::Gjr,
        ModelId::Gm,
        ModelId::Dagm,
        ModelId::Rgarch,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelId::Amem => "amem",
            ModelId::ComponentMem => "component-mem",
            ModelId::MemMidas => "mem-midas",
            ModelId::Ahar => "ahar",
            ModelId::Gjr => "gjr",
            ModelId::Gm => "gm",
            ModelId::Dagm => "dagm",
            ModelId::Rgarch => "rgarch",
        }
    }

    pub fn is_mem(self) -> bool {
        matches!(self, ModelId::Amem | ModelId::ComponentMem | ModelId::MemMidas)
    }

    /// Models fitted on returns whose output is a variance.
    pub fn is_garch(self) -> bool {
        matches!(self, ModelId::Gjr | ModelId::Gm | ModelId::Dagm | ModelId::Rgarch)
    }

    pub fn needs_macro(self) -> bool {
        matches!(self, ModelId::MemMidas | ModelId::Gm | ModelId::Dagm)
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        ModelId::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model id '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    GammaQml,
    LognormalMl,
    Gmm,
    GaussianQml,
    Ols,
}

impl Estimator {
    pub fn as_str(self) -> &'static str {
        match self {
            Estimator::GammaQml => "gamma-qml",
            Estimator::LognormalMl => "lognormal-ml",
            Estimator::Gmm => "gmm",
            Estimator::GaussianQml => "gaussian-qml",
            Estimator::Ols => "ols",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    /// Headline standard error (sandwich, or robust for OLS).
    pub se: Option<f64>,
    pub se_opg: Option<f64>,
    pub se_hessian: Option<f64>,
    pub se_sandwich: Option<f64>,
    #[serde(default)]
    pub at_bound: bool,
}

impl ParamEstimate {
    pub fn new(name: impl Into<String>, value: f64) -> Self {
        ParamEstimate {
            name: name.into(),
            value,
            se: None,
            se_opg: None,
            se_hessian: None,
            se_sandwich: None,
            at_bound: false,
        }
    }
}

/// Error-distribution shape: `phi` (Gamma) or `V` (log-normal).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapeEstimate {
    pub name: String,
    pub value: f64,
    /// The Gamma ML root, when it exists.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_ml: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    pub message: String,
    /// Norm of the estimating-equation moment at the optimum.
    pub score_norm: Option<f64>,
    /// Some parameter sits on the boundary of the admissible region.
    #[serde(default)]
    pub boundary: bool,
    /// Parameters whose gradient rows used a one-sided difference.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub one_sided: Vec<String>,
}

/// Fitted in-sample path. `mean` is `mu` for MEM and HAR, the conditional
/// variance `h` for GARCH-type models; `residuals` are `x / mu` or `r / sqrt(h)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FittedPath {
    pub dates: Vec<chrono::NaiveDate>,
    pub mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub xi: Option<Vec<f64>>,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub model: ModelId,
    pub estimator: Estimator,
    pub n_obs: usize,
    pub params: Vec<ParamEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<ShapeEstimate>,
    pub sigma2_hat: Option<f64>,
    /// Mean log-likelihood per observation.
    pub loglik: Option<f64>,
    /// Squared norm of the GMM moment vector.
    pub gmm_criterion: Option<f64>,
    pub identified: bool,
    pub ljung_box: Vec<LjungBox>,
    pub convergence: Convergence,
    /// Data-derived constants the fit conditions on (targeted level,
    /// return mean, ...).
    #[serde(default)]
    pub constants: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
    #[serde(skip)]
    pub path: FittedPath,
}

impl FitResult {
    pub fn theta(&self) -> Vec<f64> {
        self.params.iter().map(|p| p.value).collect()
    }

    pub fn param(&self, name: &str) -> Option<&ParamEstimate> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_id_strings() {
        for m in ModelId::ALL {
            assert_eq!(m.as_str().parse::<ModelId>().unwrap(), m);
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.as_str()));
        }
        assert!("garch-x".parse::<ModelId>().is_err());
    }

    #[test]
    fn fit_result_json_round_trip() {
        let mut r = FitResult {
            model: ModelId::Amem,
            estimator: Estimator::GammaQml,
            n_obs: 10,
            params: vec![ParamEstimate { se: Some(0.01), ..ParamEstimate::new("alpha1", 0.1) }],
            shape: Some(ShapeEstimate { name: "phi".into(), value: 5.0, phi_ml: None }),
            sigma2_hat: Some(0.2),
            loglik: Some(-1.5),
            gmm_criterion: None,
            identified: true,
            ljung_box: vec![LjungBox { lag: 5, statistic: 3.0, p_value: 0.7 }],
            convergence: Convergence { converged: true, iterations: 12, message: "ok".into(), ..Default::default() },
            constants: BTreeMap::from([("level".to_string(), 14.2)]),
            notes: vec![],
            path: FittedPath::default(),
        };
        let s = serde_json::to_string(&r).unwrap();
        let back: FitResult = serde_json::from_str(&s).unwrap();
        r.path = FittedPath::default();
        assert_eq!(back, r);
    }
}
