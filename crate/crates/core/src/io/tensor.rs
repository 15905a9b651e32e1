//! Detector output tensors on disk: a JSON header plus a raw little-endian
//! f32 body laid out `[frame][pair][class]`. NaN marks a missing TDOA.

use std::path::{Path, PathBuf};

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use super::{check_version, read_json, write_json, FORMAT_VERSION};
use crate::doa::TdoaTensor;
use crate::fusion::ScoreTensor;
use crate::{pair_order, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TensorKind {
    Scores,
    Tdoas,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorHeader {
    pub version: u32,
    pub kind: TensorKind,
    /// `[frames, pairs, classes]`.
    pub dims: [usize; 3],
    /// Microphone indices of every pair, 0-based.
    pub pair_order: Vec<(usize, usize)>,
    /// TDOA bound in samples; scores carry it too so a file pair is checked
    /// against the same lattice.
    pub tau_max: f64,
    pub dtype: String,
    /// Body file, relative to the header's directory.
    pub data: String,
}

const DTYPE: &str = "f32le";

/// Body path for a header path: same stem, `.f32` extension.
pub fn body_path(header: &Path) -> PathBuf {
    header.with_extension("f32")
}

fn write_tensor(header_path: &Path, kind: TensorKind, data: &Array3<f64>, tau_max: f64) -> Result<()> {
    let (t, p, c) = data.dim();
    let num_mics = mics_for_pairs(p)
        .ok_or_else(|| Error::invalid(format!("{p} pairs do not match any microphone count")))?;
    let body = body_path(header_path);
    let header = TensorHeader {
        version: FORMAT_VERSION,
        kind,
        dims: [t, p, c],
        pair_order: pair_order(num_mics),
        tau_max,
        dtype: DTYPE.into(),
        data: body
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default(),
    };
    let mut bytes = Vec::with_capacity(t * p * c * 4);
    for v in data.iter() {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    std::fs::write(&body, bytes).map_err(|e| Error::io(&body, e))?;
    write_json(header_path, &header)
}

fn read_tensor(header_path: &Path, kind: TensorKind) -> Result<(Array3<f64>, TensorHeader)> {
    let header: TensorHeader = read_json(header_path)?;
    check_version(header_path, header.version)?;
    let fail = |detail: String| Error::format(header_path, detail);
    if header.kind != kind {
        return Err(fail(format!(
            "field `kind`: expected {kind:?}, found {:?}",
            header.kind
        )));
    }
    if header.dtype != DTYPE {
        return Err(fail(format!("field `dtype`: unsupported {:?}", header.dtype)));
    }
    let [t, p, c] = header.dims;
    let expected_pairs = mics_for_pairs(p).map(pair_order);
    if expected_pairs.as_ref() != Some(&header.pair_order) {
        return Err(fail(format!(
            "field `pair_order`: does not list the {p} pairs in canonical order"
        )));
    }
    let body = header_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(&header.data);
    let bytes = std::fs::read(&body).map_err(|e| Error::io(&body, e))?;
    let expected = t * p * c * 4;
    if bytes.len() != expected {
        return Err(Error::format(
            &body,
            format!(
                "field `dims`: {t}x{p}x{c} needs {expected} bytes, body has {}",
                bytes.len()
            ),
        ));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    let array = Array3::from_shape_vec((t, p, c), values).expect("length checked");
    Ok((array, header))
}

fn mics_for_pairs(p: usize) -> Option<usize> {
    (2..=p + 1).find(|m| m * (m - 1) / 2 == p)
}

pub fn write_scores(header_path: &Path, scores: &ScoreTensor, tau_max: f64) -> Result<()> {
    write_tensor(header_path, TensorKind::Scores, scores.scores(), tau_max)
}

pub fn write_tdoas(header_path: &Path, tdoas: &TdoaTensor, tau_max: f64) -> Result<()> {
    write_tensor(header_path, TensorKind::Tdoas, tdoas.tdoas(), tau_max)
}

pub fn read_scores(header_path: &Path) -> Result<(ScoreTensor, TensorHeader)> {
    let (array, header) = read_tensor(header_path, TensorKind::Scores)?;
    // f32 storage may push 1.0 a hair above; clamp before validating.
    let array = array.mapv(|v| if v > 1.0 && v < 1.0 + 1e-6 { 1.0 } else { v });
    let tensor = ScoreTensor::new(array).map_err(|e| Error::format(header_path, e.to_string()))?;
    Ok((tensor, header))
}

pub fn read_tdoas(header_path: &Path) -> Result<(TdoaTensor, TensorHeader)> {
    let (array, header) = read_tensor(header_path, TensorKind::Tdoas)?;
    let tensor = TdoaTensor::new(array, header.tau_max + 1e-5)
        .map_err(|e| Error::format(header_path, e.to_string()))?;
    Ok((tensor, header))
}
