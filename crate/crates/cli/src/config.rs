//! The single TOML file that configures every command.

use std::path::{Path, PathBuf};

use h2m_core::dataset::Schema;
use h2m_core::mcmc::{DrawFormat, FixedExposure, KnotCounts, ModelConfig, Variant};
use h2m_core::priors::PriorSet;
use h2m_core::simulation::{SimulationConfig, StudyConfig};
use h2m_core::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub path: Option<PathBuf>,
    pub date: String,
    pub outcome: String,
    pub temperature: String,
    pub humidity: String,
    pub holiday: String,
    /// Pollutant columns, in model order.
    pub pollutants: Vec<String>,
    /// Fit one model per pollutant instead of one multi-pollutant model.
    pub single_pollutant: bool,
}

impl Default for DataSection {
    fn default() -> Self {
        let s = Schema::default();
        Self {
            path: None,
            date: s.date,
            outcome: s.outcome,
            temperature: s.temperature,
            humidity: s.humidity,
            holiday: s.holiday,
            pollutants: s.pollutants,
            single_pollutant: false,
        }
    }
}

impl DataSection {
    pub fn schema(&self) -> Schema {
        Schema {
            date: self.date.clone(),
            outcome: self.outcome.clone(),
            temperature: self.temperature.clone(),
            humidity: self.humidity.clone(),
            holiday: self.holiday.clone(),
            pollutants: self.pollutants.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub variant: Variant,
    pub lag: usize,
    pub knots: KnotCounts,
    pub autoregressive: f64,
    pub overdispersion: bool,
    pub beta_prior_sd: f64,
    pub rescale_beta_prior: bool,
    pub mean_terms: Option<usize>,
    pub fixed: FixedExposure,
}

impl Default for ModelSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            variant: m.variant,
            lag: m.lag,
            knots: m.knots,
            autoregressive: m.autoregressive,
            overdispersion: m.overdispersion,
            beta_prior_sd: m.beta_prior_sd,
            rescale_beta_prior: m.rescale_beta_prior,
            mean_terms: m.mean_terms,
            fixed: m.fixed,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub set: PriorSet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McmcSection {
    pub burn_in: usize,
    pub retained: usize,
    pub thin: usize,
    pub chains: usize,
    pub seed: u64,
    pub adapt_window: usize,
    pub theta_block_len: usize,
    pub store_latent_every: usize,
    pub format: DrawFormat,
}

impl Default for McmcSection {
    fn default() -> Self {
        let m = ModelConfig::default();
        Self {
            burn_in: m.burn_in,
            retained: m.retained,
            thin: m.thin,
            chains: m.chains,
            seed: m.seed,
            adapt_window: m.adapt_window,
            theta_block_len: m.theta_block_len,
            store_latent_every: m.store_latent_every,
            format: DrawFormat::Csv,
        }
    }
}

/// Sampler lengths and variants for the replicated study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StudySection {
    pub variants: Vec<Variant>,
    pub burn_in: usize,
    pub retained: usize,
    pub chains: usize,
}

impl Default for StudySection {
    fn default() -> Self {
        let d = StudyConfig::desk();
        Self {
            variants: d.variants,
            burn_in: d.model.burn_in,
            retained: d.model.retained,
            chains: d.model.chains,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: DataSection,
    pub model: ModelSection,
    pub priors: PriorSection,
    pub mcmc: McmcSection,
    pub simulation: SimulationConfig,
    pub study: StudySection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    /// Settings for a fit of real data.
    pub fn model_config(&self) -> ModelConfig {
        let (m, c) = (&self.model, &self.mcmc);
        ModelConfig {
            variant: m.variant,
            lag: m.lag,
            knots: m.knots,
            prior_set: self.priors.set,
            burn_in: c.burn_in,
            retained: c.retained,
            thin: c.thin,
            chains: c.chains,
            seed: c.seed,
            adapt_window: c.adapt_window,
            theta_block_len: c.theta_block_len,
            autoregressive: m.autoregressive,
            overdispersion: m.overdispersion,
            beta_prior_sd: m.beta_prior_sd,
            rescale_beta_prior: m.rescale_beta_prior,
            mean_terms: m.mean_terms,
            store_latent_every: c.store_latent_every,
            fixed: m.fixed.clone(),
        }
    }

    pub fn study_config(&self) -> StudyConfig {
        let s = &self.study;
        StudyConfig {
            simulation: self.simulation.clone(),
            model: ModelConfig {
                burn_in: s.burn_in,
                retained: s.retained,
                chains: s.chains,
                thin: 1,
                store_latent_every: 0,
                ..self.model_config()
            },
            variants: s.variants.clone(),
        }
    }
}
