//! Per-pair TDOA calibration over the DOA grid.
//!
//! Raw TDOAs measured from single-source frames are noisy and incomplete, so
//! each (pair, elevation) row is smoothed by a high-order polynomial in
//! azimuth. The row is tiled three times (−540° … +530°) before fitting so the
//! polynomial sees a periodic signal and does not bend at ±180°. Outliers
//! against the first fit are dropped and the row is fitted again.

use serde::{Deserialize, Serialize};

use crate::dsp::{accumulate_cross_spectrum, estimate_tdoa, GccPhat, Spectrogram, TdoaLattice};
use crate::geometry::{predict_freefield, ArrayGeometry, DoaGrid};
use crate::polyfit::{fit_weighted, ChebyshevPoly};
use crate::{pair_order, Error, Result};

pub const DEFAULT_POLY_ORDER: usize = 27;

/// Azimuth interval the tripled rows are fitted over.
pub const FIT_DOMAIN_DEG: [f64; 2] = [-540.0, 540.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Provenance {
    Measured,
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    /// Raw TDOA estimate in samples.
    pub tdoa: f64,
    /// Number of frames the cross-spectrum was accumulated over.
    pub weight: f64,
}

/// Raw per-(pair, DOA) TDOA measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationObservations {
    num_mics: usize,
    grid_len: usize,
    entries: Vec<Option<Observation>>,
}

impl CalibrationObservations {
    pub fn new(num_mics: usize, grid_len: usize) -> Self {
        let pairs = num_mics * num_mics.saturating_sub(1) / 2;
        Self {
            num_mics,
            grid_len,
            entries: vec![None; pairs * grid_len],
        }
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_pairs(&self) -> usize {
        self.num_mics * self.num_mics.saturating_sub(1) / 2
    }

    pub fn grid_len(&self) -> usize {
        self.grid_len
    }

    pub fn is_empty(&self) -> bool {
        self.entries.iter().all(Option::is_none)
    }

    /// Number of (pair, q) cells holding an observation.
    pub fn count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }

    pub fn get(&self, pair_index: usize, q: usize) -> Option<Observation> {
        self.entries[pair_index * self.grid_len + q]
    }

    pub fn set(&mut self, pair_index: usize, q: usize, obs: Observation) -> Result<()> {
        if pair_index >= self.num_pairs() || q >= self.grid_len {
            return Err(Error::invalid(format!(
                "observation ({pair_index}, {q}) out of range"
            )));
        }
        if !(obs.weight >= 0.0) || !obs.tdoa.is_finite() {
            return Err(Error::invalid("observation weight must be non-negative"));
        }
        self.entries[pair_index * self.grid_len + q] = Some(obs);
        Ok(())
    }
}

/// Accumulate cross-spectra over all frames annotated with each grid DOA and
/// take the GCC-PHAT peak as the raw TDOA.
///
/// Each recording comes with one annotation per frame: `Some(q)` when exactly
/// one source is active at grid point `q`, `None` otherwise.
pub fn collect_observations(
    recordings: &[(Spectrogram, Vec<Option<usize>>)],
    grid: &DoaGrid,
    lattice: &TdoaLattice,
) -> Result<CalibrationObservations> {
    let Some((first, _)) = recordings.first() else {
        return Ok(CalibrationObservations::new(0, grid.len()));
    };
    let num_mics = first.num_mics();
    let config = first.config().clone();
    for (r, (spec, ann)) in recordings.iter().enumerate() {
        if spec.num_mics() != num_mics {
            return Err(Error::dim(
                format!("recording {r} microphones"),
                num_mics,
                spec.num_mics(),
            ));
        }
        if *spec.config() != config {
            return Err(Error::invalid(format!(
                "recording {r} uses a different STFT configuration"
            )));
        }
        if ann.len() != spec.num_frames() {
            return Err(Error::dim(
                format!("recording {r} annotations"),
                spec.num_frames(),
                ann.len(),
            ));
        }
        if let Some(q) = ann.iter().flatten().find(|&&q| q >= grid.len()) {
            return Err(Error::invalid(format!(
                "recording {r}: annotation {q} is not on the {}-point grid",
                grid.len()
            )));
        }
    }

    let pairs = pair_order(num_mics);
    let gcc = GccPhat::for_config(lattice, &config);
    let mut obs = CalibrationObservations::new(num_mics, grid.len());
    for q in 0..grid.len() {
        let frame_sets: Vec<Vec<usize>> = recordings
            .iter()
            .map(|(_, ann)| {
                ann.iter()
                    .enumerate()
                    .filter(|(_, a)| **a == Some(q))
                    .map(|(t, _)| t)
                    .collect()
            })
            .collect();
        let weight: usize = frame_sets.iter().map(Vec::len).sum();
        if weight == 0 {
            continue;
        }
        for (p, &pair) in pairs.iter().enumerate() {
            let mut total: Option<crate::dsp::CrossSpectrum> = None;
            for ((spec, _), frames) in recordings.iter().zip(&frame_sets) {
                if frames.is_empty() {
                    continue;
                }
                let cs = accumulate_cross_spectrum(spec, pair, frames)?;
                match total.as_mut() {
                    None => total = Some(cs),
                    Some(acc) => acc
                        .values
                        .iter_mut()
                        .zip(&cs.values)
                        .for_each(|(a, b)| *a += b),
                }
            }
            let cs = total.expect("weight > 0 implies at least one frame");
            let out = gcc.evaluate(&cs)?;
            let tdoa = estimate_tdoa(&out.values, lattice)?;
            obs.set(
                p,
                q,
                Observation {
                    tdoa,
                    weight: weight as f64,
                },
            )?;
        }
    }
    Ok(obs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub order: usize,
    /// Outlier if `|residual| > max(mad_factor · median|residual|, min_threshold)`.
    pub mad_factor: f64,
    /// Lower bound on the outlier threshold, in samples.
    pub min_threshold: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            order: DEFAULT_POLY_ORDER,
            mad_factor: 3.0,
            min_threshold: 0.5,
        }
    }
}

/// Audit record for one fitted (pair, elevation) row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowFit {
    pub pair: (usize, usize),
    pub elevation_index: usize,
    pub first: ChebyshevPoly,
    pub second: ChebyshevPoly,
    /// Azimuth indices rejected after the first fit.
    pub outlier_azimuths: Vec<usize>,
    /// Weighted RMS residual of the first fit over all observations.
    pub rms_first: f64,
    /// Weighted RMS residual of the second fit over the retained observations.
    pub rms_second: f64,
}

/// Expected per-pair TDOA for every grid DOA.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationTable {
    grid: DoaGrid,
    num_mics: usize,
    tau_max: f64,
    lattice_points: usize,
    provenance: Provenance,
    /// Row-major `[q][pair]`.
    tdoa: Vec<f64>,
    fits: Vec<RowFit>,
}

impl CalibrationTable {
    pub fn from_parts(
        grid: DoaGrid,
        num_mics: usize,
        lattice: &TdoaLattice,
        provenance: Provenance,
        tdoa: Vec<f64>,
        fits: Vec<RowFit>,
    ) -> Result<Self> {
        if num_mics < 2 {
            return Err(Error::invalid("calibration needs at least two microphones"));
        }
        let p = num_mics * (num_mics - 1) / 2;
        if tdoa.len() != grid.len() * p {
            return Err(Error::dim("calibration tdoa", grid.len() * p, tdoa.len()));
        }
        if let Some(v) = tdoa
            .iter()
            .find(|v| !v.is_finite() || v.abs() > lattice.tau_max() + 1e-9)
        {
            return Err(Error::invalid(format!(
                "calibration entry {v} outside ±tau_max = {}",
                lattice.tau_max()
            )));
        }
        Ok(Self {
            grid,
            num_mics,
            tau_max: lattice.tau_max(),
            lattice_points: lattice.len(),
            provenance,
            tdoa,
            fits,
        })
    }

    /// Table straight from the free-field model, clamped to `±tau_max`.
    pub fn analytic(
        geometry: &ArrayGeometry,
        grid: &DoaGrid,
        lattice: &TdoaLattice,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        geometry.validate()?;
        let tau_max = lattice.tau_max();
        let mut tdoa = Vec::with_capacity(grid.len() * geometry.num_pairs());
        for q in 0..grid.len() {
            let doa = grid.lookup(q)?;
            tdoa.extend(
                predict_freefield(geometry, doa, sample_rate_hz)
                    .into_iter()
                    .map(|t| t.clamp(-tau_max, tau_max)),
            );
        }
        Self::from_parts(
            grid.clone(),
            geometry.num_mics(),
            lattice,
            Provenance::Analytic,
            tdoa,
            Vec::new(),
        )
    }

    pub fn grid(&self) -> &DoaGrid {
        &self.grid
    }

    pub fn num_mics(&self) -> usize {
        self.num_mics
    }

    pub fn num_pairs(&self) -> usize {
        self.num_mics * (self.num_mics - 1) / 2
    }

    pub fn pairs(&self) -> Vec<(usize, usize)> {
        pair_order(self.num_mics)
    }

    pub fn tau_max(&self) -> f64 {
        self.tau_max
    }

    pub fn lattice_points(&self) -> usize {
        self.lattice_points
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn fits(&self) -> &[RowFit] {
        &self.fits
    }

    /// All entries, row-major `[q][pair]`.
    pub fn entries(&self) -> &[f64] {
        &self.tdoa
    }

    /// Per-pair TDOA vector of grid point `q`, in canonical pair order.
    pub fn lookup(&self, q: usize) -> Result<&[f64]> {
        if q >= self.grid.len() {
            return Err(Error::invalid(format!(
                "DOA index {q} out of range ({} grid points)",
                self.grid.len()
            )));
        }
        Ok(self.row(q))
    }

    pub(crate) fn row(&self, q: usize) -> &[f64] {
        let p = self.num_pairs();
        &self.tdoa[q * p..(q + 1) * p]
    }

    /// Smallest Euclidean distance between two rows; zero means two DOAs are
    /// indistinguishable to the kernel scan.
    pub fn min_row_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..self.grid.len() {
            for b in (a + 1)..self.grid.len() {
                let d: f64 = self
                    .row(a)
                    .iter()
                    .zip(self.row(b))
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                best = best.min(d.sqrt());
            }
        }
        best
    }
}

fn weighted_rms(residuals: &[f64], weights: &[f64]) -> f64 {
    let wsum: f64 = weights.iter().sum();
    if wsum == 0.0 {
        return 0.0;
    }
    (residuals
        .iter()
        .zip(weights)
        .map(|(r, w)| w * r * r)
        .sum::<f64>()
        / wsum)
        .sqrt()
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n == 0 {
        0.0
    } else if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn tripled_fit(
    azimuths: &[f64],
    tdoas: &[f64],
    weights: &[f64],
    order: usize,
) -> Result<ChebyshevPoly> {
    let mut xs = Vec::with_capacity(3 * azimuths.len());
    let mut ys = Vec::with_capacity(3 * azimuths.len());
    let mut ws = Vec::with_capacity(3 * azimuths.len());
    for shift in [-360.0, 0.0, 360.0] {
        xs.extend(azimuths.iter().map(|a| a + shift));
        ys.extend_from_slice(tdoas);
        ws.extend_from_slice(weights);
    }
    fit_weighted(&xs, &ys, &ws, order, FIT_DOMAIN_DEG)
}

/// Fit one row: returns `(first, second, outlier positions, rms_first, rms_second)`.
fn fit_row(
    azimuths: &[f64],
    tdoas: &[f64],
    weights: &[f64],
    options: &FitOptions,
) -> Result<(ChebyshevPoly, ChebyshevPoly, Vec<usize>, f64, f64)> {
    let first = tripled_fit(azimuths, tdoas, weights, options.order)?;
    let residuals: Vec<f64> = azimuths
        .iter()
        .zip(tdoas)
        .map(|(&a, &t)| t - first.eval(a))
        .collect();
    let rms_first = weighted_rms(&residuals, weights);
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    let threshold = (options.mad_factor * median(&mut abs)).max(options.min_threshold);
    let outliers: Vec<usize> = residuals
        .iter()
        .enumerate()
        .filter(|(_, r)| r.abs() > threshold)
        .map(|(i, _)| i)
        .collect();

    let keep = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .enumerate()
            .filter(|(i, _)| !outliers.contains(i))
            .map(|(_, x)| *x)
            .collect()
    };
    let (az2, td2, w2) = (keep(azimuths), keep(tdoas), keep(weights));
    let second = tripled_fit(&az2, &td2, &w2, options.order)?;
    let res2: Vec<f64> = az2
        .iter()
        .zip(&td2)
        .map(|(&a, &t)| t - second.eval(a))
        .collect();
    let rms_second = weighted_rms(&res2, &w2);
    Ok((first, second, outliers, rms_first, rms_second))
}

/// Smallest number of distinct azimuths a row needs so the tripled design has
/// at least `order + 1` points.
pub fn min_azimuths(order: usize) -> usize {
    (order + 1).div_ceil(3)
}

pub fn fit_calibration(
    obs: &CalibrationObservations,
    grid: &DoaGrid,
    lattice: &TdoaLattice,
    options: &FitOptions,
) -> Result<CalibrationTable> {
    if obs.num_mics() < 2 {
        return Err(Error::invalid("no calibration observations"));
    }
    if obs.grid_len() != grid.len() {
        return Err(Error::dim("observation grid", grid.len(), obs.grid_len()));
    }
    let pairs = pair_order(obs.num_mics());
    let p_count = pairs.len();
    let tau_max = lattice.tau_max();
    let needed = min_azimuths(options.order);
    let mut tdoa = vec![0.0; grid.len() * p_count];
    let mut fits = Vec::with_capacity(p_count * grid.num_elevations());

    for (p, &pair) in pairs.iter().enumerate() {
        for e in 0..grid.num_elevations() {
            let mut az = Vec::new();
            let mut az_idx = Vec::new();
            let mut td = Vec::new();
            let mut w = Vec::new();
            for a in 0..grid.num_azimuths() {
                if let Some(o) = obs.get(p, grid.index(a, e)).filter(|o| o.weight > 0.0) {
                    az.push(grid.azimuths_deg[a]);
                    az_idx.push(a);
                    td.push(o.tdoa);
                    w.push(o.weight);
                }
            }
            let missing = || -> Vec<f64> {
                (0..grid.num_azimuths())
                    .filter(|a| !az_idx.contains(a))
                    .map(|a| grid.azimuths_deg[a])
                    .collect()
            };
            if az.len() < needed {
                return Err(Error::InsufficientObservations {
                    pair,
                    elevation_deg: grid.elevations_deg[e],
                    detail: format!("{} of {needed} required azimuths observed", az.len()),
                    missing_azimuths_deg: missing(),
                });
            }
            let (first, second, outliers, rms_first, rms_second) =
                match fit_row(&az, &td, &w, options) {
                    Ok(fit) => fit,
                    Err(Error::RankDeficient(detail)) => {
                        return Err(Error::RankDeficient(format!(
                            "pair {pair:?}, elevation {}°: {detail}",
                            grid.elevations_deg[e]
                        )))
                    }
                    Err(other) => return Err(other),
                };
            for a in 0..grid.num_azimuths() {
                let q = grid.index(a, e);
                tdoa[q * p_count + p] = second.eval(grid.azimuths_deg[a]).clamp(-tau_max, tau_max);
            }
            fits.push(RowFit {
                pair,
                elevation_index: e,
                first,
                second,
                outlier_azimuths: outliers.iter().map(|&i| az_idx[i]).collect(),
                rms_first,
                rms_second,
            });
        }
    }

    CalibrationTable::from_parts(
        grid.clone(),
        obs.num_mics(),
        lattice,
        Provenance::Measured,
        tdoa,
        fits,
    )
}
