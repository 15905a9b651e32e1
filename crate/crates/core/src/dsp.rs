//! Framing, STFT, pairwise cross-spectra and GCC-PHAT on a fractional-lag
//! lattice.
//!
//! Sign convention: the cross-spectrum of pair `(i, j)` is `X_i · conj(X_j)`
//! and GCC-PHAT uses the kernel `exp(+2πiτk/N)`. With the forward DFT
//! `X[k] = Σ x[n] e^{-2πikn/N}`, a peak at `τ > 0` means channel `i` lags
//! channel `j` by `τ` samples (the wavefront reaches `j` first).

use std::f64::consts::PI;

use ndarray::{Array3, ArrayView1};
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Hann,
    Rectangular,
}

impl Window {
    /// Periodic window of length `n`.
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StftConfig {
    pub sample_rate_hz: f64,
    pub frame_size: usize,
    pub hop_size: usize,
    /// First retained bin (inclusive).
    pub bin_lo: usize,
    /// Last retained bin (exclusive).
    pub bin_hi: usize,
    pub window: Window,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 48_000.0,
            frame_size: 2048,
            hop_size: 960,
            bin_lo: 1,
            bin_hi: 513,
            window: Window::Hann,
        }
    }
}

impl StftConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sample_rate_hz.is_finite() && self.sample_rate_hz > 0.0) {
            return Err(Error::invalid("sample_rate_hz must be positive"));
        }
        if self.frame_size == 0 || self.hop_size == 0 {
            return Err(Error::invalid("frame_size and hop_size must be positive"));
        }
        if self.hop_size > self.frame_size {
            return Err(Error::invalid(format!(
                "hop_size {} exceeds frame_size {}",
                self.hop_size, self.frame_size
            )));
        }
        if self.bin_lo >= self.bin_hi {
            return Err(Error::invalid(format!(
                "bin_lo {} must be below bin_hi {}",
                self.bin_lo, self.bin_hi
            )));
        }
        if self.bin_hi > self.frame_size / 2 + 1 {
            return Err(Error::invalid(format!(
                "bin_hi {} exceeds N/2 + 1 = {}",
                self.bin_hi,
                self.frame_size / 2 + 1
            )));
        }
        Ok(())
    }

    /// Number of retained bins, `K = bin_hi - bin_lo`.
    pub fn num_bins(&self) -> usize {
        self.bin_hi - self.bin_lo
    }

    /// `floor((len - N) / hop) + 1`, or zero when the signal is shorter than a frame.
    pub fn num_frames(&self, len: usize) -> usize {
        if len < self.frame_size {
            0
        } else {
            (len - self.frame_size) / self.hop_size + 1
        }
    }

    /// Time of the centre of frame `t`, in seconds.
    pub fn frame_center_sec(&self, t: usize) -> f64 {
        (t as f64 * self.hop_size as f64 + self.frame_size as f64 / 2.0) / self.sample_rate_hz
    }
}

/// Complex STFT coefficients indexed `[mic][frame][bin - bin_lo]`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    coefficients: Array3<Complex64>,
    config: StftConfig,
}

impl Spectrogram {
    pub fn from_coefficients(coefficients: Array3<Complex64>, config: StftConfig) -> Result<Self> {
        config.validate()?;
        let (m, _, k) = coefficients.dim();
        if m < 2 {
            return Err(Error::invalid("a spectrogram needs at least two microphones"));
        }
        if k != config.num_bins() {
            return Err(Error::dim("spectrogram bins", config.num_bins(), k));
        }
        Ok(Self {
            coefficients,
            config,
        })
    }

    pub fn num_mics(&self) -> usize {
        self.coefficients.dim().0
    }

    pub fn num_frames(&self) -> usize {
        self.coefficients.dim().1
    }

    pub fn num_bins(&self) -> usize {
        self.coefficients.dim().2
    }

    pub fn config(&self) -> &StftConfig {
        &self.config
    }

    pub fn coefficients(&self) -> &Array3<Complex64> {
        &self.coefficients
    }

    /// Retained bins of one microphone at one frame.
    pub fn frame(&self, mic: usize, t: usize) -> ArrayView1<'_, Complex64> {
        self.coefficients.slice(ndarray::s![mic, t, ..])
    }
}

/// Compute the STFT of every channel, keeping bins `[bin_lo, bin_hi)`.
pub fn compute_stft<S: AsRef<[f64]>>(signals: &[S], config: &StftConfig) -> Result<Spectrogram> {
    config.validate()?;
    if signals.len() < 2 {
        return Err(Error::invalid(format!(
            "need at least two channels, got {}",
            signals.len()
        )));
    }
    let len = signals[0].as_ref().len();
    if let Some((m, s)) = signals
        .iter()
        .enumerate()
        .find(|(_, s)| s.as_ref().len() != len)
    {
        return Err(Error::dim(
            format!("channel {m} length"),
            len,
            s.as_ref().len(),
        ));
    }
    if len < config.frame_size {
        return Err(Error::invalid(format!(
            "signal of {len} samples is shorter than one frame ({})",
            config.frame_size
        )));
    }

    let n = config.frame_size;
    let frames = config.num_frames(len);
    let bins = config.num_bins();
    let window = config.window.coefficients(n);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
    let mut buf = vec![Complex64::default(); n];
    let mut coefficients = Array3::<Complex64>::zeros((signals.len(), frames, bins));

    for (m, signal) in signals.iter().enumerate() {
        let signal = signal.as_ref();
        for t in 0..frames {
            let start = t * config.hop_size;
            for ((b, &x), &w) in buf
                .iter_mut()
                .zip(&signal[start..start + n])
                .zip(&window)
            {
                *b = Complex64::new(x * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            for (dst, src) in coefficients
                .slice_mut(ndarray::s![m, t, ..])
                .iter_mut()
                .zip(&buf[config.bin_lo..config.bin_hi])
            {
                *dst = *src;
            }
        }
    }

    Spectrogram::from_coefficients(coefficients, config.clone())
}

/// Discrete set of candidate TDOAs spanning `[-tau_max, +tau_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaLattice {
    tau_max: f64,
    values: Vec<f64>,
}

impl Default for TdoaLattice {
    fn default() -> Self {
        Self::new(20.0, 101).expect("default lattice is valid")
    }
}

impl TdoaLattice {
    pub fn new(tau_max: f64, num_points: usize) -> Result<Self> {
        if !(tau_max.is_finite() && tau_max > 0.0) {
            return Err(Error::invalid("tau_max must be positive"));
        }
        if num_points < 3 || num_points.is_multiple_of(2) {
            return Err(Error::invalid(format!(
                "lattice size must be odd and at least 3, got {num_points}"
            )));
        }
        let half = (num_points - 1) as f64;
        // (2i - (G-1)) / (G-1) keeps the lattice exactly symmetric with an exact zero.
        let values = (0..num_points)
            .map(|i| tau_max * (2.0 * i as f64 - half) / half)
            .collect();
        Ok(Self { tau_max, values })
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.tau_max / (self.values.len() - 1) as f64
    }
}

/// Cross-spectrum `Σ_t X_i[k]·conj(X_j[k])` of one pair over retained bins.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossSpectrum {
    pub pair: (usize, usize),
    pub frame_size: usize,
    pub bin_lo: usize,
    pub values: Vec<Complex64>,
}

impl CrossSpectrum {
    /// Cross-spectrum of the swapped pair `(j, i)`.
    pub fn swapped(&self) -> Self {
        Self {
            pair: (self.pair.1, self.pair.0),
            frame_size: self.frame_size,
            bin_lo: self.bin_lo,
            values: self.values.iter().map(|v| v.conj()).collect(),
        }
    }
}

pub fn accumulate_cross_spectrum(
    spec: &Spectrogram,
    pair: (usize, usize),
    frames: &[usize],
) -> Result<CrossSpectrum> {
    let (i, j) = pair;
    let m = spec.num_mics();
    if i >= m || j >= m || i == j {
        return Err(Error::invalid(format!(
            "pair {pair:?} out of range for {m} microphones"
        )));
    }
    if frames.is_empty() {
        return Err(Error::invalid("cross-spectrum needs a nonempty frame set"));
    }
    if let Some(&t) = frames.iter().find(|&&t| t >= spec.num_frames()) {
        return Err(Error::invalid(format!(
            "frame {t} out of range ({} frames)",
            spec.num_frames()
        )));
    }
    let mut values = vec![Complex64::default(); spec.num_bins()];
    for &t in frames {
        for ((acc, a), b) in values
            .iter_mut()
            .zip(spec.frame(i, t))
            .zip(spec.frame(j, t))
        {
            *acc += a * b.conj();
        }
    }
    Ok(CrossSpectrum {
        pair,
        frame_size: spec.config().frame_size,
        bin_lo: spec.config().bin_lo,
        values,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct GccOutput {
    /// Correlation at every lattice point.
    pub values: Vec<f64>,
    /// Bins left out of the sum because their magnitude was (near) zero.
    pub skipped_bins: usize,
}

/// Relative magnitude below which a bin is excluded from the PHAT sum.
pub const ZERO_BIN_EPS: f64 = 1e-12;

/// GCC-PHAT evaluator with the kernel `exp(2πiτk/N)` tabulated for one
/// lattice and bin range.
#[derive(Debug, Clone)]
pub struct GccPhat {
    lattice: TdoaLattice,
    frame_size: usize,
    bin_lo: usize,
    num_bins: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl GccPhat {
    pub fn new(lattice: &TdoaLattice, frame_size: usize, bin_lo: usize, bin_hi: usize) -> Self {
        let num_bins = bin_hi - bin_lo;
        let mut cos = Vec::with_capacity(lattice.len() * num_bins);
        let mut sin = Vec::with_capacity(lattice.len() * num_bins);
        for &tau in lattice.values() {
            for k in bin_lo..bin_hi {
                let phase = 2.0 * PI * tau * k as f64 / frame_size as f64;
                cos.push(phase.cos());
                sin.push(phase.sin());
            }
        }
        Self {
            lattice: lattice.clone(),
            frame_size,
            bin_lo,
            num_bins,
            cos,
            sin,
        }
    }

    pub fn for_config(lattice: &TdoaLattice, config: &StftConfig) -> Self {
        Self::new(lattice, config.frame_size, config.bin_lo, config.bin_hi)
    }

    pub fn lattice(&self) -> &TdoaLattice {
        &self.lattice
    }

    pub fn evaluate(&self, cs: &CrossSpectrum) -> Result<GccOutput> {
        if cs.values.len() != self.num_bins {
            return Err(Error::dim("cross-spectrum bins", self.num_bins, cs.values.len()));
        }
        if cs.frame_size != self.frame_size || cs.bin_lo != self.bin_lo {
            return Err(Error::invalid(format!(
                "cross-spectrum (N={}, bin_lo={}) does not match kernel (N={}, bin_lo={})",
                cs.frame_size, cs.bin_lo, self.frame_size, self.bin_lo
            )));
        }

        let mean_mag =
            cs.values.iter().map(|v| v.norm()).sum::<f64>() / self.num_bins.max(1) as f64;
        let floor = ZERO_BIN_EPS * mean_mag;
        let mut skipped_bins = 0;
        let (re, im): (Vec<f64>, Vec<f64>) = cs
            .values
            .iter()
            .map(|v| {
                let mag = v.norm();
                if mag <= floor || mag == 0.0 {
                    skipped_bins += 1;
                    (0.0, 0.0)
                } else {
                    (v.re / mag, v.im / mag)
                }
            })
            .unzip();

        let values = self
            .cos
            .chunks_exact(self.num_bins)
            .zip(self.sin.chunks_exact(self.num_bins))
            .map(|(c, s)| {
                let mut acc = 0.0;
                for k in 0..self.num_bins {
                    acc += c[k] * re[k] - s[k] * im[k];
                }
                acc
            })
            .collect();

        Ok(GccOutput {
            values,
            skipped_bins,
        })
    }
}

/// One-shot GCC-PHAT; prefer [`GccPhat`] when evaluating many cross-spectra.
pub fn gcc_phat(cs: &CrossSpectrum, lattice: &TdoaLattice) -> Result<GccOutput> {
    GccPhat::new(lattice, cs.frame_size, cs.bin_lo, cs.bin_lo + cs.values.len()).evaluate(cs)
}

/// Index of the lattice maximum; ties go to the smallest `|τ|`, then to the
/// negative side.
pub fn argmax_lattice(gcc: &[f64], lattice: &TdoaLattice) -> Result<usize> {
    if gcc.len() != lattice.len() {
        return Err(Error::dim("gcc length", lattice.len(), gcc.len()));
    }
    let taus = lattice.values();
    let mut best = 0;
    for idx in 1..gcc.len() {
        let (v, b) = (gcc[idx], gcc[best]);
        let better = v > b
            || (v == b
                && (taus[idx].abs() < taus[best].abs()
                    || (taus[idx].abs() == taus[best].abs() && taus[idx] < taus[best])));
        if better || b.is_nan() {
            best = idx;
        }
    }
    Ok(best)
}

/// TDOA (samples) at the GCC-PHAT maximum.
pub fn estimate_tdoa(gcc: &[f64], lattice: &TdoaLattice) -> Result<f64> {
    argmax_lattice(gcc, lattice).map(|idx| lattice.values()[idx])
}
