//! Segment-based detection metrics (ER, F) and localization metrics (DOAE
//! with optimal assignment, frame recall).

use serde::{Deserialize, Serialize};

use crate::doa::DoaOutput;
use crate::fusion::Activity;
use crate::geometry::Doa;
use crate::hungarian::min_cost_assignment;
use crate::{Error, Result};

/// Arguments of `acos` this close to ±1 are snapped to ±1.
const ACOS_SNAP: f64 = 1e-12;

/// Counts for one segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SegmentCount {
    pub tp: usize,
    /// Reference events that were missed.
    pub fn_: usize,
    /// Estimated events absent from the reference.
    pub fp: usize,
    pub n: usize,
    pub s: usize,
    pub d: usize,
    pub i: usize,
}

impl SegmentCount {
    pub fn from_tp_fn_fp(tp: usize, fn_: usize, fp: usize, n: usize) -> Self {
        Self {
            tp,
            fn_,
            fp,
            n,
            s: fn_.min(fp),
            d: fn_.saturating_sub(fp),
            i: fp.saturating_sub(fn_),
        }
    }
}

pub fn segment_counts(est: &Activity, reference: &Activity) -> Result<Vec<SegmentCount>> {
    if est.dim() != reference.dim() {
        return Err(Error::dim(
            "segment activity",
            format!("{}x{}", reference.nrows(), reference.ncols()),
            format!("{}x{}", est.nrows(), est.ncols()),
        ));
    }
    Ok(est
        .rows()
        .into_iter()
        .zip(reference.rows())
        .map(|(e, r)| {
            let (mut tp, mut fn_, mut fp, mut n) = (0, 0, 0, 0);
            for (&e, &r) in e.iter().zip(r.iter()) {
                tp += (e && r) as usize;
                fn_ += (!e && r) as usize;
                fp += (e && !r) as usize;
                n += r as usize;
            }
            SegmentCount::from_tp_fn_fp(tp, fn_, fp, n)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CountTotals {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub n: usize,
    pub s: usize,
    pub d: usize,
    pub i: usize,
}

pub fn totals(counts: &[SegmentCount]) -> CountTotals {
    counts.iter().fold(CountTotals::default(), |acc, c| CountTotals {
        tp: acc.tp + c.tp,
        fn_: acc.fn_ + c.fn_,
        fp: acc.fp + c.fp,
        n: acc.n + c.n,
        s: acc.s + c.s,
        d: acc.d + c.d,
        i: acc.i + c.i,
    })
}

/// `2TP / (2TP + FN + FP)`, defined as 1 when nothing is active on either side.
pub fn class_f_score(tp: usize, fn_: usize, fp: usize) -> f64 {
    let denom = 2 * tp + fn_ + fp;
    if denom == 0 {
        1.0
    } else {
        2.0 * tp as f64 / denom as f64
    }
}

/// Segment error rate; undefined when the reference holds no events.
pub fn error_rate(counts: &[SegmentCount]) -> Result<f64> {
    let t = totals(counts);
    if t.n == 0 {
        return Err(Error::Undefined("error rate: reference contains no events"));
    }
    Ok((t.s + t.d + t.i) as f64 / t.n as f64)
}

pub fn f_score(counts: &[SegmentCount]) -> f64 {
    let t = totals(counts);
    class_f_score(t.tp, t.fn_, t.fp)
}

pub fn compute_er_f(counts: &[SegmentCount]) -> Result<(f64, f64)> {
    Ok((error_rate(counts)?, f_score(counts)))
}

/// Great-circle angle between two directions, in degrees.
pub fn angular_distance(a: Doa, b: Doa) -> f64 {
    let (phi_a, theta_a) = (a.azimuth_deg.to_radians(), a.elevation_deg.to_radians());
    let (phi_b, theta_b) = (b.azimuth_deg.to_radians(), b.elevation_deg.to_radians());
    let mut cos_h =
        theta_a.sin() * theta_b.sin() + theta_a.cos() * theta_b.cos() * (phi_a - phi_b).cos();
    if cos_h > 1.0 - ACOS_SNAP {
        cos_h = 1.0;
    } else if cos_h < -1.0 + ACOS_SNAP {
        cos_h = -1.0;
    }
    cos_h.acos().to_degrees()
}

/// Matched angular cost for one frame: optimal assignment over
/// `min(|est|, |ref|)` pairs.
pub fn frame_assignment_cost(est: &[Doa], reference: &[Doa]) -> f64 {
    if est.is_empty() || reference.is_empty() {
        return 0.0;
    }
    let cost: Vec<Vec<f64>> = est
        .iter()
        .map(|&e| reference.iter().map(|&r| angular_distance(e, r)).collect())
        .collect();
    min_cost_assignment(&cost).0
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DoaeBreakdown {
    /// Sum of matched angular costs over all frames, degrees.
    pub total_cost_deg: f64,
    pub estimated: usize,
    pub matched: usize,
    pub unmatched_estimates: usize,
    pub unmatched_references: usize,
}

impl DoaeBreakdown {
    pub fn doae(&self) -> Result<f64> {
        if self.estimated == 0 {
            return Err(Error::Undefined("DOA error: no estimated DOAs"));
        }
        Ok(self.total_cost_deg / self.estimated as f64)
    }
}

pub fn doae_breakdown(est: &DoaOutput, reference: &[Vec<Doa>]) -> Result<DoaeBreakdown> {
    if est.num_frames() != reference.len() {
        return Err(Error::dim("DOA frames", reference.len(), est.num_frames()));
    }
    let mut b = DoaeBreakdown::default();
    for (t, r) in reference.iter().enumerate() {
        let e = est.doas_at(t);
        b.estimated += e.len();
        b.matched += e.len().min(r.len());
        b.unmatched_estimates += e.len().saturating_sub(r.len());
        b.unmatched_references += r.len().saturating_sub(e.len());
        b.total_cost_deg += frame_assignment_cost(&e, r);
    }
    Ok(b)
}

/// `DOAE = (Σ_t D_E^t)^{-1} Σ_t H(DOA_R^t, DOA_E^t)`.
pub fn compute_doae(est: &DoaOutput, reference: &[Vec<Doa>]) -> Result<f64> {
    doae_breakdown(est, reference)?.doae()
}

/// Fraction of frames whose estimated DOA count equals the reference count.
pub fn compute_fr(est: &DoaOutput, reference: &[Vec<Doa>]) -> Result<f64> {
    if est.num_frames() != reference.len() {
        return Err(Error::dim("DOA frames", reference.len(), est.num_frames()));
    }
    if reference.is_empty() {
        return Err(Error::Undefined("frame recall: no frames"));
    }
    let hits = reference
        .iter()
        .enumerate()
        .filter(|(t, r)| est.frames[*t].len() == r.len())
        .count();
    Ok(hits as f64 / reference.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsDiagnostics {
    pub segments: usize,
    pub frames: usize,
    pub counts: CountTotals,
    pub doa: DoaeBreakdown,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// `None` when the reference contains no events.
    pub er: Option<f64>,
    pub f: f64,
    /// `None` when nothing was estimated.
    pub doae: Option<f64>,
    pub fr: f64,
    pub diagnostics: MetricsDiagnostics,
}

impl MetricsReport {
    /// Aligned plain-text rendering.
    pub fn to_table(&self) -> String {
        let er = self.er.map_or("undefined (no reference events)".to_string(), |v| format!("{v:.4}"));
        let doae = self
            .doae
            .map_or("undefined (no estimates)".to_string(), |v| format!("{v:.2}°"));
        let c = &self.diagnostics.counts;
        let d = &self.diagnostics.doa;
        let rows = [
            ("ER", er),
            ("F", format!("{:.4}", self.f)),
            ("DOAE", doae),
            ("FR", format!("{:.4}", self.fr)),
            ("segments", self.diagnostics.segments.to_string()),
            ("frames", self.diagnostics.frames.to_string()),
            (
                "TP/FN/FP/N",
                format!("{}/{}/{}/{}", c.tp, c.fn_, c.fp, c.n),
            ),
            ("S/D/I", format!("{}/{}/{}", c.s, c.d, c.i)),
            (
                "DOAs est/matched",
                format!("{}/{}", d.estimated, d.matched),
            ),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter()
            .map(|(k, v)| format!("{k:<width$}  {v}\n"))
            .collect()
    }
}

pub fn evaluate(
    est_segments: &Activity,
    ref_segments: &Activity,
    est_doas: &DoaOutput,
    ref_doas: &[Vec<Doa>],
) -> Result<MetricsReport> {
    let counts = segment_counts(est_segments, ref_segments)?;
    let er = match error_rate(&counts) {
        Ok(v) => Some(v),
        Err(Error::Undefined(_)) => None,
        Err(e) => return Err(e),
    };
    let doa = doae_breakdown(est_doas, ref_doas)?;
    Ok(MetricsReport {
        er,
        f: f_score(&counts),
        doae: doa.doae().ok(),
        fr: compute_fr(est_doas, ref_doas)?,
        diagnostics: MetricsDiagnostics {
            segments: counts.len(),
            frames: ref_doas.len(),
            counts: totals(&counts),
            doa,
        },
    })
}
