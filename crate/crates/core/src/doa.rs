//! DOA estimation: score every calibration grid point against the per-pair
//! TDOA estimates with a Gaussian kernel and keep the best one.

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::calibration::CalibrationTable;
use crate::fusion::Activity;
use crate::geometry::Doa;
use crate::{Error, Result};

/// Per-pair TDOA estimates `[frame][pair][class]` in samples; NaN marks
/// entries the detector did not produce.
#[derive(Debug, Clone, PartialEq)]
pub struct TdoaTensor {
    tdoas: Array3<f64>,
}

impl TdoaTensor {
    pub fn new(tdoas: Array3<f64>, tau_max: f64) -> Result<Self> {
        if let Some(((t, p, c), v)) = tdoas
            .indexed_iter()
            .find(|(_, v)| v.is_infinite() || v.abs() > tau_max + 1e-9)
        {
            return Err(Error::invalid(format!(
                "TDOA {v} at [{t}][{p}][{c}] exceeds tau_max {tau_max}"
            )));
        }
        Ok(Self { tdoas })
    }

    pub fn tdoas(&self) -> &Array3<f64> {
        &self.tdoas
    }

    pub fn num_frames(&self) -> usize {
        self.tdoas.dim().0
    }

    pub fn num_pairs(&self) -> usize {
        self.tdoas.dim().1
    }

    pub fn num_classes(&self) -> usize {
        self.tdoas.dim().2
    }

    /// True when every pair carries a TDOA for `(t, c)`.
    pub fn is_valid(&self, t: usize, c: usize) -> bool {
        (0..self.num_pairs()).all(|p| self.tdoas[(t, p, c)].is_finite())
    }

    pub fn vector(&self, t: usize, c: usize) -> Vec<f64> {
        (0..self.num_pairs()).map(|p| self.tdoas[(t, p, c)]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelConfig {
    /// Kernel standard deviation in samples.
    pub sigma: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self { sigma: 2.0 }
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::invalid("kernel sigma must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassDoa {
    pub class: usize,
    pub doa: Doa,
}

/// Estimated DOAs per frame, at most one per class, sorted by class.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DoaOutput {
    pub frames: Vec<Vec<ClassDoa>>,
}

impl DoaOutput {
    pub fn with_frames(num_frames: usize) -> Self {
        Self {
            frames: vec![Vec::new(); num_frames],
        }
    }

    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    /// Number of DOAs emitted over all frames.
    pub fn count(&self) -> usize {
        self.frames.iter().map(Vec::len).sum()
    }

    pub fn doas_at(&self, t: usize) -> Vec<Doa> {
        self.frames[t].iter().map(|d| d.doa).collect()
    }
}

/// Kernel score of one grid row: `Σ_p exp(-(τ̂_p − τ^q_p)² / 2σ²)`.
pub fn kernel_score(estimate: &[f64], row: &[f64], kernel: &KernelConfig) -> f64 {
    let inv = 1.0 / (2.0 * kernel.sigma * kernel.sigma);
    estimate
        .iter()
        .zip(row)
        .map(|(a, b)| (-(a - b) * (a - b) * inv).exp())
        .sum()
}

/// Grid index with the largest kernel score; ties keep the smallest index.
pub fn scan_doa(estimate: &[f64], table: &CalibrationTable, kernel: &KernelConfig) -> Result<usize> {
    if estimate.len() != table.num_pairs() {
        return Err(Error::dim("TDOA vector", table.num_pairs(), estimate.len()));
    }
    if estimate.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("TDOA vector contains invalid entries"));
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for q in 0..table.grid().len() {
        let s = kernel_score(estimate, table.row(q), kernel);
        if s > best.0 {
            best = (s, q);
        }
    }
    Ok(best.1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DoaDiagnostics {
    /// Active (frame, class) cells skipped because the TDOA was missing.
    pub missing_tdoa: usize,
}

/// One DOA per active `(t, c)` with a valid TDOA vector.
pub fn estimate_doas(
    tensor: &TdoaTensor,
    activity: &Activity,
    table: &CalibrationTable,
    kernel: &KernelConfig,
) -> Result<(DoaOutput, DoaDiagnostics)> {
    kernel.validate()?;
    if activity.dim() != (tensor.num_frames(), tensor.num_classes()) {
        return Err(Error::dim(
            "activity",
            format!("{}x{}", tensor.num_frames(), tensor.num_classes()),
            format!("{}x{}", activity.nrows(), activity.ncols()),
        ));
    }
    if tensor.num_pairs() != table.num_pairs() {
        return Err(Error::dim("TDOA tensor pairs", table.num_pairs(), tensor.num_pairs()));
    }
    let mut out = DoaOutput::with_frames(tensor.num_frames());
    let mut diag = DoaDiagnostics::default();
    for ((t, c), &active) in activity.indexed_iter() {
        if !active {
            continue;
        }
        if !tensor.is_valid(t, c) {
            diag.missing_tdoa += 1;
            continue;
        }
        let q = scan_doa(&tensor.vector(t, c), table, kernel)?;
        out.frames[t].push(ClassDoa {
            class: c,
            doa: table.grid().lookup(q)?,
        });
    }
    Ok((out, diag))
}
