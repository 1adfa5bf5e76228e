//! Run manifests and the flag > file > default layering.
//!
//! ```toml
//! scenario = "demo.toml"        # relative to the manifest
//! out = "out/demo"
//! seed = 7                      # replaces the scenario's own seed
//!
//! [overrides]
//! posting_interval_s = 30
//! sweep_interval_s = 60
//! expiry_window_s = 240
//! gap_threshold_s = 300
//! ```

use std::path::{Path, PathBuf};

use clap::Args;
use serde::{Deserialize, Serialize};

use probesense_core::density::DensityConfig;
use probesense_core::pipeline::PipelineConfig;

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Eq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Overrides {
    /// Edge-agent batching period in seconds [default: 30]
    #[arg(long)]
    pub posting_interval_s: Option<u32>,
    /// Density sweep cadence in seconds [default: 60]
    #[arg(long)]
    pub sweep_interval_s: Option<u32>,
    /// Silence after which a device stops counting, in seconds [default: 240]
    #[arg(long)]
    pub expiry_window_s: Option<u32>,
    /// Longest same-scanner silence within one visit, in seconds [default: 300]
    #[arg(long)]
    pub gap_threshold_s: Option<u32>,
}

impl Overrides {
    /// `self` wins over `lower` key by key.
    pub fn over(&self, lower: &Overrides) -> Overrides {
        Overrides {
            posting_interval_s: self.posting_interval_s.or(lower.posting_interval_s),
            sweep_interval_s: self.sweep_interval_s.or(lower.sweep_interval_s),
            expiry_window_s: self.expiry_window_s.or(lower.expiry_window_s),
            gap_threshold_s: self.gap_threshold_s.or(lower.gap_threshold_s),
        }
    }

    /// Applies the set keys to `base` and validates the result.
    pub fn apply(&self, base: &PipelineConfig) -> Result<PipelineConfig, CliError> {
        let mut c = base.clone();
        if let Some(v) = self.posting_interval_s {
            c.posting_interval_s = v;
        }
        if let Some(v) = self.gap_threshold_s {
            c.gap_threshold_s = v;
        }
        c.density = DensityConfig::new(
            self.sweep_interval_s.unwrap_or(c.density.sweep_interval_s),
            self.expiry_window_s.unwrap_or(c.density.expiry_window_s),
        )
        .map_err(CliError::validation)?;
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub scenario: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    #[serde(default)]
    pub overrides: Overrides,
}

impl RunManifest {
    /// Parses `path`; relative paths inside are resolved against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let mut m: RunManifest = toml::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: PathBuf| if p.is_relative() { base.join(p) } else { p };
        m.scenario = m.scenario.map(rebase);
        m.out = m.out.map(rebase);
        Ok(m)
    }
}
