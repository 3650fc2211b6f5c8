//! Prior families shared by both model components.

use serde::{Deserialize, Serialize};

/// Which prior set a fit uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriorSet {
    /// Diffuse normals with variance 1e3, Uniform(0, 100) standard deviations,
    /// Gamma(1, 0.001) smoothing precisions.
    #[default]
    Default,
    /// Normals with variance 1e6, InverseGamma(1, 0.001) variances,
    /// Gamma(0.001, 0.001) smoothing precisions.
    Sensitivity,
}

impl PriorSet {
    pub fn coefficient_sd(self) -> f64 {
        match self {
            PriorSet::Default => 1e3_f64.sqrt(),
            PriorSet::Sensitivity => 1e3,
        }
    }

    pub fn scale_prior(self) -> ScalePrior {
        match self {
            PriorSet::Default => ScalePrior::UniformSd { upper: 100.0 },
            PriorSet::Sensitivity => ScalePrior::InverseGammaVariance {
                shape: 1.0,
                scale: 0.001,
            },
        }
    }

    pub fn smoothing_precision(self) -> GammaPrior {
        match self {
            PriorSet::Default => GammaPrior {
                shape: 1.0,
                rate: 0.001,
            },
            PriorSet::Sensitivity => GammaPrior {
                shape: 0.001,
                rate: 0.001,
            },
        }
    }
}

/// Prior on a standard deviation (or, equivalently, its variance).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ScalePrior {
    UniformSd { upper: f64 },
    InverseGammaVariance { shape: f64, scale: f64 },
}

impl ScalePrior {
    /// Log prior density of `u = ln(sd)`, Jacobian included, up to a
    /// constant.
    pub fn log_density_log_sd(&self, u: f64) -> f64 {
        match *self {
            ScalePrior::UniformSd { upper } => {
                if u.exp() < upper {
                    u
                } else {
                    f64::NEG_INFINITY
                }
            }
            ScalePrior::InverseGammaVariance { shape, scale } => {
                -2.0 * shape * u - scale * (-2.0 * u).exp()
            }
        }
    }

    /// Log prior density of the standard deviation itself, up to a constant.
    pub fn log_density_sd(&self, sd: f64) -> f64 {
        if !(sd > 0.0) {
            return f64::NEG_INFINITY;
        }
        self.log_density_log_sd(sd.ln()) - sd.ln()
    }
}

/// Gamma(shape, rate) prior on a precision.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaPrior {
    pub shape: f64,
    pub rate: f64,
}
