//! Non-learned detector producing the same tensors a trained model would.
//!
//! Activity score: log energy of the pair's instantaneous cross-spectrum,
//! smoothed over a few frames and min-max normalised per recording between a
//! noise-floor percentile and the loudest frame. TDOA: GCC-PHAT peak of the
//! single frame.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::doa::TdoaTensor;
use crate::dsp::{accumulate_cross_spectrum, argmax_lattice, GccPhat, Spectrogram, TdoaLattice};
use crate::fusion::ScoreTensor;
use crate::{pair_order, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Percentile (0–100) of the smoothed log energy taken as the noise floor.
    pub noise_floor_percentile: f64,
    pub smoothing_frames: usize,
    pub single_class_mode: bool,
    /// Classes the scores are replicated over outside single-class mode.
    pub num_classes: usize,
    /// The normalisation span never shrinks below this many dB, so a
    /// recording without events stays near zero.
    pub min_dynamic_range_db: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            noise_floor_percentile: 20.0,
            smoothing_frames: 5,
            single_class_mode: true,
            num_classes: 1,
            min_dynamic_range_db: 12.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_floor_percentile > 0.0 && self.noise_floor_percentile < 100.0) {
            return Err(Error::invalid("noise_floor_percentile must be in (0, 100)"));
        }
        if self.smoothing_frames == 0 {
            return Err(Error::invalid("smoothing_frames must be at least 1"));
        }
        if !self.single_class_mode && self.num_classes == 0 {
            return Err(Error::invalid("num_classes must be at least 1"));
        }
        if !(self.min_dynamic_range_db > 0.0) {
            return Err(Error::invalid("min_dynamic_range_db must be positive"));
        }
        Ok(())
    }

    pub fn output_classes(&self) -> usize {
        if self.single_class_mode {
            1
        } else {
            self.num_classes
        }
    }
}

/// Centred moving average, window truncated at the ends.
fn smooth(values: &[f64], width: usize) -> Vec<f64> {
    let before = (width - 1) / 2;
    let after = width - 1 - before;
    (0..values.len())
        .map(|t| {
            let lo = t.saturating_sub(before);
            let hi = (t + after + 1).min(values.len());
            values[lo..hi].iter().sum::<f64>() / (hi - lo) as f64
        })
        .collect()
}

fn percentile(values: &[f64], pct: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((pct / 100.0) * (sorted.len() - 1) as f64).round() as usize;
    sorted[rank.min(sorted.len() - 1)]
}

pub fn detect(
    spec: &Spectrogram,
    lattice: &TdoaLattice,
    config: &DetectorConfig,
) -> Result<(ScoreTensor, TdoaTensor)> {
    config.validate()?;
    let frames = spec.num_frames();
    if frames == 0 {
        return Err(Error::invalid("spectrogram has no frames"));
    }
    let pairs = pair_order(spec.num_mics());
    let classes = config.output_classes();
    let gcc = GccPhat::for_config(lattice, spec.config());
    let mut scores = Array3::<f64>::zeros((frames, pairs.len(), classes));
    let mut tdoas = Array3::<f64>::from_elem((frames, pairs.len(), classes), f64::NAN);

    for (p, &pair) in pairs.iter().enumerate() {
        let mut level_db = Vec::with_capacity(frames);
        for t in 0..frames {
            let cs = accumulate_cross_spectrum(spec, pair, &[t])?;
            let energy: f64 = cs.values.iter().map(|v| v.norm()).sum();
            level_db.push(10.0 * (energy + 1e-30).log10());
            let out = gcc.evaluate(&cs)?;
            if out.skipped_bins < cs.values.len() {
                let tau = lattice.values()[argmax_lattice(&out.values, lattice)?];
                for c in 0..classes {
                    tdoas[(t, p, c)] = tau;
                }
            }
        }
        let smoothed = smooth(&level_db, config.smoothing_frames);
        let floor = percentile(&smoothed, config.noise_floor_percentile);
        let top = smoothed
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            .max(floor + config.min_dynamic_range_db);
        for (t, &v) in smoothed.iter().enumerate() {
            let s = ((v - floor) / (top - floor)).clamp(0.0, 1.0);
            for c in 0..classes {
                scores[(t, p, c)] = s;
            }
        }
    }

    Ok((
        ScoreTensor::new(scores)?,
        TdoaTensor::new(tdoas, lattice.tau_max())?,
    ))
}
