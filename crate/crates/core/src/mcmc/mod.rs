//! Metropolis-within-Gibbs samplers for the three model variants.

pub mod config;
pub mod data;
pub mod draws;
mod exposure;
pub mod kernels;
mod response;
mod sampler;

pub use config::{FixedExposure, KnotCounts, ModelConfig, Variant};
pub use data::{ModelData, NamedBasis};
pub use draws::{ChainDraws, DrawBlock, DrawFormat};
pub use kernels::{adapt_scale, mh_step, update_covariance, update_gaussian_block, AdaptiveScale, MhOutcome};
pub use sampler::{
    chain_tree, run_chain, run_chain_with_tree, run_exposure_stage, run_model, run_model_serial,
    ExposureStage,
};
