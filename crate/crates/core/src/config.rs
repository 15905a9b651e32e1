//! Run configuration shared by every command.
//!
//! A bare `RunConfig::default()` holds the reference parameter set:
//! 48 kHz, 2048-sample frames, 960-sample hop, bins 1..513, τ_max = 20,
//! G = 101, σ = 2, γ = 5, L = 50.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::calibration::FitOptions;
use crate::detector::DetectorConfig;
use crate::doa::KernelConfig;
use crate::dsp::{StftConfig, TdoaLattice};
use crate::fusion::{ThresholdSet, TuningOptions};
use crate::geometry::{ArrayGeometry, DoaGrid};
use crate::io::labels::ClassMap;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub tau_max: f64,
    pub num_points: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            tau_max: 20.0,
            num_points: 101,
        }
    }
}

impl LatticeConfig {
    pub fn build(&self) -> Result<TdoaLattice> {
        TdoaLattice::new(self.tau_max, self.num_points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorChoice {
    #[default]
    Baseline,
    Tensors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub stft: StftConfig,
    pub lattice: LatticeConfig,
    pub kernel: KernelConfig,
    pub grid: DoaGrid,
    /// Per-class thresholds; `None` means 0.5 for every class.
    pub thresholds: Option<ThresholdSet>,
    /// Step of the threshold scan run by `tune-thresholds`.
    pub tuning_step: f64,
    /// Minimum event duration in frames.
    pub gamma: usize,
    /// Frames per evaluation segment.
    pub segment_frames: usize,
    pub num_classes: usize,
    pub class_names: Option<Vec<String>>,
    pub geometry: Option<PathBuf>,
    pub calibration: Option<PathBuf>,
    pub detector: DetectorChoice,
    pub baseline: DetectorConfig,
    pub fit: FitOptions,
    pub seed: Option<u64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            lattice: LatticeConfig::default(),
            kernel: KernelConfig::default(),
            grid: DoaGrid::default(),
            thresholds: None,
            tuning_step: 0.01,
            gamma: 5,
            segment_frames: 50,
            num_classes: 1,
            class_names: None,
            geometry: None,
            calibration: None,
            detector: DetectorChoice::default(),
            baseline: DetectorConfig::default(),
            fit: FitOptions::default(),
            seed: None,
        }
    }
}

impl RunConfig {
    /// Field-level and cross-field checks. With a geometry, τ_max must cover
    /// its largest physical delay.
    pub fn validate(&self, geometry: Option<&ArrayGeometry>) -> Result<()> {
        self.stft.validate()?;
        let lattice = self.lattice.build()?;
        self.kernel.validate()?;
        if self.grid.is_empty() {
            return Err(Error::invalid("DOA grid is empty"));
        }
        if self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be at least 1"));
        }
        if self.gamma == 0 {
            return Err(Error::invalid("gamma must be at least 1 frame"));
        }
        if self.segment_frames < self.gamma {
            return Err(Error::invalid(format!(
                "segment_frames ({}) must not be shorter than gamma ({})",
                self.segment_frames, self.gamma
            )));
        }
        if !(self.tuning_step > 0.0 && self.tuning_step <= 1.0) {
            return Err(Error::invalid("tuning_step must be in (0, 1]"));
        }
        if let Some(t) = &self.thresholds {
            t.validate(self.num_classes)?;
        }
        self.class_map()?;
        self.detector_config().validate()?;
        if self.baseline.single_class_mode && self.num_classes != 1 {
            return Err(Error::invalid(
                "baseline.single_class_mode requires num_classes = 1",
            ));
        }
        if let Some(g) = geometry {
            g.validate()?;
            let max = g.max_tdoa(self.stft.sample_rate_hz);
            if max > lattice.tau_max() {
                return Err(Error::invalid(format!(
                    "tau_max {} is below the geometry's largest delay {max:.3} samples",
                    lattice.tau_max()
                )));
            }
        }
        Ok(())
    }

    pub fn class_map(&self) -> Result<ClassMap> {
        match &self.class_names {
            None => Ok(ClassMap::numbered(self.num_classes)),
            Some(names) if names.len() == self.num_classes => ClassMap::named(names.clone()),
            Some(names) => Err(Error::dim("class_names", self.num_classes, names.len())),
        }
    }

    pub fn thresholds(&self) -> ThresholdSet {
        self.thresholds
            .clone()
            .unwrap_or_else(|| ThresholdSet::uniform(0.5, self.num_classes))
    }

    pub fn detector_config(&self) -> DetectorConfig {
        DetectorConfig {
            num_classes: self.num_classes,
            ..self.baseline.clone()
        }
    }

    pub fn tuning_options(&self) -> TuningOptions {
        TuningOptions {
            grid_step: self.tuning_step,
            gamma: self.gamma,
            segment_frames: self.segment_frames,
        }
    }
}
