//! Multichannel WAV input (PCM 16/24/32-bit, float32) and float32 output.

use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Audio {
    /// One sample vector per channel, scaled to [-1, 1].
    pub channels: Vec<Vec<f64>>,
    pub sample_rate: u32,
}

pub fn read_wav(path: &Path) -> Result<Audio> {
    let reader = WavReader::open(path).map_err(|e| wav_error(path, e))?;
    let spec = reader.spec();
    let n = spec.channels as usize;
    if n == 0 {
        return Err(Error::format(path, "field `channels`: zero channels"));
    }
    let interleaved: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(f64::from))
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| wav_error(path, e))?,
        (SampleFormat::Int, bits @ (8 | 16 | 24 | 32)) => {
            let scale = 1.0 / (1u64 << (bits - 1)) as f64;
            reader
                .into_samples::<i32>()
                .map(|s| s.map(|v| v as f64 * scale))
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| wav_error(path, e))?
        }
        (fmt, bits) => {
            return Err(Error::format(
                path,
                format!("unsupported codec {fmt:?} with {bits} bits per sample"),
            ))
        }
    };
    let mut channels = vec![Vec::with_capacity(interleaved.len() / n); n];
    for (i, v) in interleaved.into_iter().enumerate() {
        channels[i % n].push(v);
    }
    Ok(Audio {
        channels,
        sample_rate: spec.sample_rate,
    })
}

/// Write channels as 32-bit float PCM.
pub fn write_wav(path: &Path, channels: &[Vec<f64>], sample_rate: u32) -> Result<()> {
    let Some(first) = channels.first() else {
        return Err(Error::invalid("cannot write a WAV file without channels"));
    };
    if let Some(c) = channels.iter().position(|c| c.len() != first.len()) {
        return Err(Error::dim(format!("channel {c} length"), first.len(), channels[c].len()));
    }
    let spec = WavSpec {
        channels: channels.len() as u16,
        sample_rate,
        bits_per_sample: 32,
        sample_format: SampleFormat::Float,
    };
    let mut writer = WavWriter::create(path, spec).map_err(|e| wav_error(path, e))?;
    for i in 0..first.len() {
        for c in channels {
            writer
                .write_sample(c[i] as f32)
                .map_err(|e| wav_error(path, e))?;
        }
    }
    writer.finalize().map_err(|e| wav_error(path, e))
}

fn wav_error(path: &Path, e: hound::Error) -> Error {
    match e {
        hound::Error::IoError(io) => Error::io(path, io),
        other => Error::format(path, other.to_string()),
    }
}
