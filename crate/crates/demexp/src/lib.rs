//! Defensive model expansion: nonparametric Bayesian regression models
//! (Gaussian processes and tree ensembles) anchored to a linear submodel,
//! with fractional posteriors, spike-and-slab model selection, posterior
//! projection summaries, and a reproducible simulation harness.

pub mod chain;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod dist;
pub mod error;
pub mod experiments;
pub mod gbart;
pub mod gp;
pub mod kernels;
pub mod linalg;
pub mod plot;
pub mod seed;
pub mod spike_gp;
pub mod summaries;
pub mod tree;

pub use chain::{ChainDraw, McmcChain};
pub use error::{Error, Result};
pub use gp::{credible_interval, GaussianLaw, GpFit};
pub use kernels::KernelSpec;
pub use tree::TreeNode;
