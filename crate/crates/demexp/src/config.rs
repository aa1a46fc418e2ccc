//! JSON configuration file shared by the CLI commands. Every section has
//! full defaults, so a missing file or an empty object `{}` is valid;
//! command-line flags override file values.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::experiments::{BvmConfig, RateConfig, SelectionConfig};
use crate::gbart::GbartConfig;
use crate::spike_gp::SpikeGpConfig;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpCliConfig {
    /// Kernel description, e.g.
    /// `{"kind":"sum","children":[{"kind":"linear","sigma_beta_sq":100.0},
    /// {"kind":"se","rho":1.0,"amplitude":1.0}]}`.
    pub kernel: Value,
    /// Known noise SD (ignored when `estimate_sigma` is set).
    pub sigma: f64,
    pub alpha: f64,
    /// Use the least-squares residual SD instead of `sigma`.
    pub estimate_sigma: bool,
}

impl Default for GpCliConfig {
    fn default() -> Self {
        Self {
            kernel: serde_json::json!({
                "kind": "sum",
                "children": [
                    {"kind": "linear", "sigma_beta_sq": 100.0},
                    {"kind": "se", "rho": 1.0}
                ]
            }),
            sigma: 1.0,
            alpha: 1.0,
            estimate_sigma: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SummarizeConfig {
    pub depth_limit: usize,
    pub min_leaf: usize,
    /// Gradient tolerance of the KL projection.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SummarizeConfig {
    fn default() -> Self {
        Self {
            depth_limit: 3,
            min_leaf: 10,
            tol: 1e-8,
            max_iter: 100,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub rate: RateConfig,
    pub selection: SelectionConfig,
    pub bvm: BvmConfig,
    pub spike_gp: SpikeGpConfig,
    pub gbart: GbartConfig,
    pub gp: GpCliConfig,
    pub summarize: SummarizeConfig,
}

pub fn load_config(path: Option<&Path>) -> Result<FileConfig> {
    match path {
        None => Ok(FileConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}
