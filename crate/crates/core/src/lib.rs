//! Sound event localization and detection from pairs of microphones.
//!
//! The pipeline runs per microphone pair and fuses the pairs at the end:
//!
//! 1. [`dsp`] frames the audio, computes cross-spectra and GCC-PHAT on a
//!    fractional TDOA lattice.
//! 2. [`calibration`] maps every grid DOA to a vector of expected per-pair
//!    TDOAs, either measured (polynomial fit over azimuth) or analytic.
//! 3. A detector ([`detector`], or externally produced tensors) emits per-pair
//!    event scores and TDOAs.
//! 4. [`fusion`] averages scores across pairs, thresholds and post-filters them;
//!    [`doa`] scans the calibration grid with a Gaussian kernel.
//! 5. [`metrics`] computes ER, F, DOAE and frame recall.
//!
//! [`sim`] produces synthetic free-field scenes with exact ground truth.

// `!(x > 0.0)` is used on purpose so NaN fails the check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod config;
pub mod detector;
pub mod doa;
pub mod dsp;
mod error;
pub mod fusion;
pub mod geometry;
pub mod hungarian;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod polyfit;
pub mod sim;

pub use error::{Error, Result};

/// Canonical pair order `(0,1), (0,2), …, (0,M-1), (1,2), …` with `i < j`.
pub fn pair_order(num_mics: usize) -> Vec<(usize, usize)> {
    let mut pairs = Vec::with_capacity(num_mics * num_mics.saturating_sub(1) / 2);
    for i in 0..num_mics {
        for j in (i + 1)..num_mics {
            pairs.push((i, j));
        }
    }
    pairs
}
