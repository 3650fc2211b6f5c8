//! The guide's chapters as doctests, so every snippet is compiled and run.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}
#[doc = include_str!("../../../book/src/data.md")]
pub mod data {}
#[doc = include_str!("../../../book/src/splines.md")]
pub mod splines {}
#[doc = include_str!("../../../book/src/exposure.md")]
pub mod exposure {}
#[doc = include_str!("../../../book/src/health.md")]
pub mod health {}
#[doc = include_str!("../../../book/src/fitting.md")]
pub mod fitting {}
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}
#[doc = include_str!("../../../book/src/simulation.md")]
pub mod simulation {}
#[doc = include_str!("../../../book/src/reproducibility.md")]
pub mod reproducibility {}
#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
