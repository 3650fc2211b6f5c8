use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::priors::PriorSet;

/// Which estimator a fit runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Variant {
    /// Observed concentrations plugged into the health model.
    #[serde(rename = "ME")]
    Me,
    /// Exposure posterior fed forward with outcome feedback cut.
    #[serde(rename = "H2M")]
    H2m,
    /// Both components estimated jointly.
    #[serde(rename = "H2Mjoint")]
    H2mJoint,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Me, Variant::H2m, Variant::H2mJoint];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Me => "ME",
            Variant::H2m => "H2M",
            Variant::H2mJoint => "H2Mjoint",
        }
    }

    pub fn models_exposure(self) -> bool {
        !matches!(self, Variant::Me)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "me" => Ok(Variant::Me),
            "h2m" => Ok(Variant::H2m),
            "h2mjoint" => Ok(Variant::H2mJoint),
            _ => Err(Error::InvalidConfig(format!("unknown variant {s:?}"))),
        }
    }
}

/// Knots for the time, temperature and humidity smooths; 0 drops a smooth.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnotCounts {
    pub time: usize,
    pub temperature: usize,
    pub humidity: usize,
}

impl Default for KnotCounts {
    fn default() -> Self {
        Self {
            time: 6,
            temperature: 3,
            humidity: 3,
        }
    }
}

impl KnotCounts {
    pub const NONE: KnotCounts = KnotCounts {
        time: 0,
        temperature: 0,
        humidity: 0,
    };
}

/// Exposure parameters held at known values instead of sampled.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FixedExposure {
    /// Measurement-error sd per pollutant, standardized units.
    pub sigma: Option<Vec<f64>>,
    /// Innovation covariance rows, standardized units.
    pub innovation_cov: Option<Vec<Vec<f64>>>,
    /// Mean coefficients, one row per pollutant.
    pub gamma: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    pub lag: usize,
    pub knots: KnotCounts,
    pub prior_set: PriorSet,
    pub burn_in: usize,
    /// Post-burn-in iterations; `retained / thin` draws are kept.
    pub retained: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    /// Iterations between proposal-scale adaptations during burn-in.
    pub adapt_window: usize,
    /// Days per latent block in the joint sampler.
    pub theta_block_len: usize,
    /// Coefficient on the lagged latent residual; 1 is a random walk.
    pub autoregressive: f64,
    /// Include the per-day random effect in the health model.
    pub overdispersion: bool,
    /// Prior sd of a pollutant effect per standardized concentration unit.
    pub beta_prior_sd: f64,
    /// Rescale the effect prior by each pollutant's sd when applied to
    /// original-unit effects.
    pub rescale_beta_prior: bool,
    /// Terms in the exposure mean model (0 to 5); unset picks 5 when the
    /// meteorology varies and 1 otherwise.
    pub mean_terms: Option<usize>,
    /// Keep every k-th retained latent exposure and imputation draw
    /// (0 keeps none).
    pub store_latent_every: usize,
    pub fixed: FixedExposure,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::H2mJoint,
            lag: 1,
            knots: KnotCounts::default(),
            prior_set: PriorSet::Default,
            burn_in: 50_000,
            retained: 10_000,
            thin: 1,
            chains: 2,
            seed: 1,
            adapt_window: 50,
            theta_block_len: 10,
            autoregressive: 1.0,
            overdispersion: true,
            beta_prior_sd: 0.1,
            rescale_beta_prior: true,
            mean_terms: None,
            store_latent_every: 0,
            fixed: FixedExposure::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.retained == 0 {
            return bad("retained must be at least 1".into());
        }
        if self.chains == 0 {
            return bad("chains must be at least 1".into());
        }
        if self.thin == 0 || self.thin > self.retained {
            return bad(format!("thin must lie in 1..={}", self.retained));
        }
        if self.lag == 0 {
            return bad("lag must be at least 1".into());
        }
        if self.adapt_window == 0 || self.theta_block_len == 0 {
            return bad("adapt_window and theta_block_len must be positive".into());
        }
        if !(self.autoregressive > 0.0 && self.autoregressive <= 1.0) {
            return bad(format!(
                "autoregressive must lie in (0, 1], got {}",
                self.autoregressive
            ));
        }
        if !(self.beta_prior_sd > 0.0 && self.beta_prior_sd.is_finite()) {
            return bad(format!("beta_prior_sd must be positive, got {}", self.beta_prior_sd));
        }
        if let Some(q) = self.mean_terms {
            if q > crate::pollutant::FULL_MEAN_TERMS {
                return bad(format!("mean_terms must be at most 5, got {q}"));
            }
        }
        Ok(())
    }

    /// Number of kept draws per chain.
    pub fn n_draws(&self) -> usize {
        self.retained / self.thin
    }

    pub fn total_iterations(&self) -> usize {
        self.burn_in + self.retained
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_published_protocol() {
        let c = ModelConfig::default();
        assert_eq!((c.burn_in, c.retained, c.thin, c.chains), (50_000, 10_000, 1, 2));
        assert_eq!(c.knots, KnotCounts { time: 6, temperature: 3, humidity: 3 });
        assert_eq!(c.lag, 1);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn rejects_invalid_schedules() {
        for c in [
            ModelConfig { retained: 0, ..Default::default() },
            ModelConfig { chains: 0, ..Default::default() },
            ModelConfig { thin: 0, ..Default::default() },
            ModelConfig { lag: 0, ..Default::default() },
            ModelConfig { autoregressive: 1.5, ..Default::default() },
        ] {
            assert!(matches!(c.validate(), Err(Error::InvalidConfig(_))));
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.as_str().parse::<Variant>().unwrap(), v);
            let json = serde_json::to_string(&v).unwrap();
            assert_eq!(json, format!("\"{}\"", v.as_str()));
        }
        assert!("joint".parse::<Variant>().is_err());
    }

    #[test]
    fn draw_count_accounts_for_thinning() {
        let c = ModelConfig { retained: 10, thin: 3, ..Default::default() };
        assert_eq!(c.n_draws(), 3);
    }
}
