//! Effective configuration: config file, then flags.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use seld_core::calibration::CalibrationTable;
use seld_core::config::{DetectorChoice, RunConfig};
use seld_core::fusion::ThresholdSet;
use seld_core::geometry::ArrayGeometry;
use seld_core::io::{calibration::read_calibration, read_json, write_json};

use crate::{Common, DetectorArg};

/// Problems with the configuration or its referenced files; exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

pub fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

pub struct Settings {
    pub config: RunConfig,
    pub geometry: ArrayGeometry,
}

pub const DEFAULT_RADIUS_M: f64 = 0.042;

impl Settings {
    pub fn load(common: &Common) -> Result<Self> {
        let mut config = match &common.config {
            Some(path) => {
                let mut cfg: RunConfig = read_json(path).map_err(|e| config_error(e.to_string()))?;
                let base = path.parent().unwrap_or(Path::new(""));
                cfg.geometry = cfg.geometry.map(|p| base.join(p));
                cfg.calibration = cfg.calibration.map(|p| base.join(p));
                cfg
            }
            None => RunConfig::default(),
        };
        if let Some(p) = &common.geometry {
            config.geometry = Some(p.clone());
        }
        if let Some(p) = &common.calibration {
            config.calibration = Some(p.clone());
        }
        if let Some(d) = common.detector {
            config.detector = match d {
                DetectorArg::Baseline => DetectorChoice::Baseline,
                DetectorArg::Tensors => DetectorChoice::Tensors,
            };
        }
        if let Some(seed) = common.seed {
            config.seed = Some(seed);
        }
        if let Some(v) = common.sigma {
            config.kernel.sigma = v;
        }
        if let Some(v) = common.gamma {
            config.gamma = v;
        }
        if let Some(v) = common.tau_max {
            config.lattice.tau_max = v;
        }
        if let Some(v) = common.grid_g {
            config.lattice.num_points = v;
        }
        if let Some(v) = common.segment_frames {
            config.segment_frames = v;
        }
        if let Some(p) = &common.thresholds {
            let t: ThresholdSet = read_json(p).map_err(|e| config_error(e.to_string()))?;
            config.thresholds = Some(t);
        }

        let geometry = match &config.geometry {
            Some(p) => read_json(p).map_err(|e| config_error(e.to_string()))?,
            None => ArrayGeometry::tetrahedron(DEFAULT_RADIUS_M),
        };
        config
            .validate(Some(&geometry))
            .map_err(|e| config_error(format!("configuration: {e}")))?;
        Ok(Self { config, geometry })
    }

    /// Load the configured calibration table; a missing or unreadable table
    /// is a configuration error.
    pub fn calibration(&self) -> Result<CalibrationTable> {
        let path = self
            .config
            .calibration
            .as_ref()
            .ok_or_else(|| config_error("no calibration table given (use --calibration)"))?;
        let table = read_calibration(path).map_err(|e| config_error(e.to_string()))?;
        if table.tau_max() > self.config.lattice.tau_max + 1e-9 {
            return Err(config_error(format!(
                "calibration tau_max {} exceeds the configured {}",
                table.tau_max(),
                self.config.lattice.tau_max
            )));
        }
        Ok(table)
    }

    /// Create the output directory and echo the effective config into it.
    pub fn prepare_output(&self, out: &Path) -> Result<PathBuf> {
        std::fs::create_dir_all(out)
            .with_context(|| format!("creating output directory {}", out.display()))?;
        write_json(&out.join("effective_config.json"), &self.config)?;
        Ok(out.to_path_buf())
    }
}

/// Resolve a manifest entry relative to the manifest's directory.
pub fn relative_to(manifest: &Path, entry: &Path) -> PathBuf {
    manifest.parent().unwrap_or(Path::new("")).join(entry)
}
