//! Synthetic free-field scenes with scripted events at grid DOAs.
//!
//! Each event is rendered once, then delayed per microphone with a
//! frequency-domain phase ramp so every channel carries exactly the
//! far-field arrival delay. Independent white Gaussian noise is added per
//! channel. Labels and oracle tensors follow directly from the script.

use std::f64::consts::PI;

use ndarray::Array3;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::doa::TdoaTensor;
use crate::dsp::StftConfig;
use crate::fusion::ScoreTensor;
use crate::geometry::{predict_freefield, ArrayGeometry, Doa, DoaGrid};
use crate::io::labels::{rasterize_labels, ClassMap, LabelRecord, Reference};
use crate::{Error, Result};

/// Power of the loudest event when the script does not pin the noise level.
const REFERENCE_EVENT_POWER: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SourceKind {
    #[default]
    WhiteNoise,
    Tone {
        frequency_hz: f64,
    },
    ImpulseTrain {
        period_sec: f64,
    },
}

/// Event direction: a grid index or on-grid angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DoaSpec {
    Index { q: usize },
    Angles { azimuth_deg: f64, elevation_deg: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEvent {
    pub class: usize,
    pub onset_sec: f64,
    pub offset_sec: f64,
    pub doa: DoaSpec,
    #[serde(default)]
    pub source: SourceKind,
    pub snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneScript {
    pub duration_sec: f64,
    #[serde(default)]
    pub events: Vec<ScriptEvent>,
    #[serde(default)]
    pub seed: u64,
    /// Per-channel noise power in dB re full scale. When absent the noise is
    /// set so the loudest event has power 0.01 at its SNR; a script without
    /// events is then silent.
    #[serde(default)]
    pub noise_dbfs: Option<f64>,
}

impl SceneScript {
    /// Check the script and resolve every event to a grid index.
    pub fn resolve(&self, grid: &DoaGrid, num_classes: usize) -> Result<Vec<usize>> {
        if !(self.duration_sec.is_finite() && self.duration_sec > 0.0) {
            return Err(Error::invalid("script duration must be positive"));
        }
        let mut qs = Vec::with_capacity(self.events.len());
        for (i, ev) in self.events.iter().enumerate() {
            let fail = |msg: String| Error::invalid(format!("event {i}: {msg}"));
            if ev.class >= num_classes {
                return Err(fail(format!(
                    "class {} out of range ({num_classes} classes)",
                    ev.class
                )));
            }
            if !(0.0 <= ev.onset_sec && ev.onset_sec < ev.offset_sec) {
                return Err(fail(format!(
                    "onset {} must be before offset {}",
                    ev.onset_sec, ev.offset_sec
                )));
            }
            if ev.offset_sec > self.duration_sec {
                return Err(fail(format!(
                    "offset {} exceeds the scene duration {}",
                    ev.offset_sec, self.duration_sec
                )));
            }
            if !ev.snr_db.is_finite() {
                return Err(fail("SNR must be finite".into()));
            }
            match ev.source {
                SourceKind::Tone { frequency_hz } if !(frequency_hz > 0.0) => {
                    return Err(fail("tone frequency must be positive".into()))
                }
                SourceKind::ImpulseTrain { period_sec } if !(period_sec > 0.0) => {
                    return Err(fail("impulse period must be positive".into()))
                }
                _ => {}
            }
            let q = match ev.doa {
                DoaSpec::Index { q } if q < grid.len() => q,
                DoaSpec::Index { q } => {
                    return Err(fail(format!("DOA index {q} is not on the grid")))
                }
                DoaSpec::Angles {
                    azimuth_deg,
                    elevation_deg,
                } => grid
                    .find(Doa::new(azimuth_deg, elevation_deg))
                    .ok_or_else(|| {
                        fail(format!(
                            "DOA ({azimuth_deg}°, {elevation_deg}°) is not on the grid"
                        ))
                    })?,
            };
            qs.push(q);
        }
        for (a, ea) in self.events.iter().enumerate() {
            for (b, eb) in self.events.iter().enumerate().skip(a + 1) {
                if ea.class == eb.class
                    && ea.onset_sec < eb.offset_sec
                    && eb.onset_sec < ea.offset_sec
                {
                    return Err(Error::invalid(format!(
                        "events {a} and {b} overlap in class {}",
                        ea.class
                    )));
                }
            }
        }
        Ok(qs)
    }
}

#[derive(Debug, Clone)]
pub struct SimOptions {
    pub stft: StftConfig,
    pub grid: DoaGrid,
    pub tau_max: f64,
    pub num_classes: usize,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            stft: StftConfig::default(),
            grid: DoaGrid::default(),
            tau_max: 20.0,
            num_classes: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedScene {
    pub signals: Vec<Vec<f64>>,
    pub labels: Vec<LabelRecord>,
    pub reference: Reference,
    pub oracle_scores: ScoreTensor,
    pub oracle_tdoas: TdoaTensor,
    /// Grid index of every script event.
    pub event_doas: Vec<usize>,
}

impl SimulatedScene {
    pub fn num_frames(&self) -> usize {
        self.reference.frames.nrows()
    }
}

/// Smallest odd `3^a 5^b 7^c` not below `n`.
fn smooth_odd_len(n: usize) -> usize {
    let mut m = n.max(1) | 1;
    loop {
        let mut r = m;
        for f in [3, 5, 7] {
            while r.is_multiple_of(f) {
                r /= f;
            }
        }
        if r == 1 {
            return m;
        }
        m += 2;
    }
}

/// Delay `signal` by `delay` samples (fractional, either sign).
///
/// The signal is placed after `pad` zeros in a buffer of at least
/// `len + 2·pad` samples; the buffer length is odd so the phase ramp stays
/// Hermitian and the output exactly real. The delay is circular over the
/// returned buffer, which therefore holds all of the signal energy.
pub fn fractional_delay(signal: &[f64], delay: f64, pad: usize) -> Vec<f64> {
    let len = smooth_odd_len(signal.len() + 2 * pad);
    let mut buf = vec![Complex64::default(); len];
    for (b, &x) in buf[pad..].iter_mut().zip(signal) {
        b.re = x;
    }
    let mut planner = FftPlanner::<f64>::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let half = len / 2;
    for (k, b) in buf.iter_mut().enumerate() {
        let freq = if k <= half {
            k as f64
        } else {
            k as f64 - len as f64
        };
        *b *= Complex64::from_polar(1.0, -2.0 * PI * freq * delay / len as f64);
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    let scale = 1.0 / len as f64;
    buf.iter().map(|c| c.re * scale).collect()
}

fn render_source(kind: SourceKind, len: usize, sample_rate: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    match kind {
        SourceKind::WhiteNoise => (0..len).map(|_| StandardNormal.sample(rng)).collect(),
        SourceKind::Tone { frequency_hz } => {
            let phase: f64 = rng.random_range(0.0..2.0 * PI);
            (0..len)
                .map(|n| {
                    2f64.sqrt() * (2.0 * PI * frequency_hz * n as f64 / sample_rate + phase).sin()
                })
                .collect()
        }
        SourceKind::ImpulseTrain { period_sec } => {
            let period = ((period_sec * sample_rate).round() as usize).max(1);
            let amp = (period as f64).sqrt();
            let offset = rng.random_range(0..period);
            (0..len)
                .map(|n| if n % period == offset { amp } else { 0.0 })
                .collect()
        }
    }
}

fn noise_power(script: &SceneScript) -> f64 {
    if let Some(db) = script.noise_dbfs {
        return 10f64.powf(db / 10.0);
    }
    script
        .events
        .iter()
        .map(|e| e.snr_db)
        .reduce(f64::max)
        .map_or(0.0, |snr| REFERENCE_EVENT_POWER / 10f64.powf(snr / 10.0))
}

pub fn synthesize(
    script: &SceneScript,
    geometry: &ArrayGeometry,
    options: &SimOptions,
) -> Result<SimulatedScene> {
    geometry.validate()?;
    options.stft.validate()?;
    let fs = options.stft.sample_rate_hz;
    let qs = script.resolve(&options.grid, options.num_classes)?;
    for (i, &q) in qs.iter().enumerate() {
        let tdoa = predict_freefield(geometry, options.grid.lookup(q)?, fs);
        if let Some(t) = tdoa.iter().find(|t| t.abs() > options.tau_max) {
            return Err(Error::invalid(format!(
                "event {i}: TDOA {t:.2} samples exceeds tau_max {}",
                options.tau_max
            )));
        }
    }

    let total = (script.duration_sec * fs).round() as usize;
    let num_frames = options.stft.num_frames(total);
    if num_frames == 0 {
        return Err(Error::invalid(format!(
            "scene of {total} samples is shorter than one frame"
        )));
    }
    let mics = geometry.num_mics();
    let mut rng = ChaCha8Rng::seed_from_u64(script.seed);
    let noise_p = noise_power(script);
    let pad = options.stft.frame_size / 2;
    let mut signals = vec![vec![0.0; total]; mics];

    for (ev, &q) in script.events.iter().zip(&qs) {
        let start = (ev.onset_sec * fs).round() as usize;
        let end = ((ev.offset_sec * fs).round() as usize).min(total);
        if end <= start {
            continue;
        }
        let gain = (noise_p * 10f64.powf(ev.snr_db / 10.0)).sqrt();
        let source: Vec<f64> = render_source(ev.source, end - start, fs, &mut rng)
            .into_iter()
            .map(|x| gain * x)
            .collect();
        let delays = geometry.arrival_delays(options.grid.lookup(q)?, fs);
        for (channel, &delay) in signals.iter_mut().zip(&delays) {
            let delayed = fractional_delay(&source, delay, pad);
            for (n, v) in delayed.into_iter().enumerate() {
                let pos = start as isize + n as isize - pad as isize;
                if (0..total as isize).contains(&pos) {
                    channel[pos as usize] += v;
                }
            }
        }
    }

    if noise_p > 0.0 {
        let sd = noise_p.sqrt();
        for channel in signals.iter_mut() {
            for x in channel.iter_mut() {
                let n: f64 = StandardNormal.sample(&mut rng);
                *x += sd * n;
            }
        }
    }

    let classes = ClassMap::numbered(options.num_classes);
    let labels: Vec<LabelRecord> = script
        .events
        .iter()
        .zip(&qs)
        .map(|(ev, &q)| {
            let doa = options.grid.lookup(q).expect("resolved on grid");
            LabelRecord {
                class: classes.name(ev.class).to_string(),
                onset_sec: ev.onset_sec,
                offset_sec: ev.offset_sec,
                azimuth_deg: doa.azimuth_deg,
                elevation_deg: doa.elevation_deg,
            }
        })
        .collect();
    let reference = rasterize_labels(
        &labels,
        &options.stft,
        &classes,
        Some(&options.grid),
        num_frames,
    )?;

    let pairs = geometry.num_pairs();
    let mut scores = Array3::<f64>::zeros((num_frames, pairs, options.num_classes));
    let mut tdoas = Array3::<f64>::from_elem((num_frames, pairs, options.num_classes), f64::NAN);
    for (ev, &q) in script.events.iter().zip(&qs) {
        let tau = predict_freefield(geometry, options.grid.lookup(q)?, fs);
        for t in 0..num_frames {
            let center = options.stft.frame_center_sec(t);
            if center >= ev.onset_sec && center < ev.offset_sec {
                for p in 0..pairs {
                    scores[(t, p, ev.class)] = 1.0;
                    tdoas[(t, p, ev.class)] = tau[p];
                }
            }
        }
    }

    Ok(SimulatedScene {
        signals,
        labels,
        reference,
        oracle_scores: ScoreTensor::new(scores)?,
        oracle_tdoas: TdoaTensor::new(tdoas, options.tau_max)?,
        event_doas: qs,
    })
}
