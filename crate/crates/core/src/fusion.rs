//! Event detection: per-pair score fusion, class thresholds, the minimum
//! duration post-filter and frame-to-segment reduction.

use ndarray::{Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

use crate::metrics::{class_f_score, segment_counts};
use crate::{Error, Result};

/// Frame- or segment-level binary activity, indexed `[time][class]`.
pub type Activity = Array2<bool>;

/// Per-pair event probabilities indexed `[frame][pair][class]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTensor {
    scores: Array3<f64>,
}

impl ScoreTensor {
    pub fn new(scores: Array3<f64>) -> Result<Self> {
        if let Some(((t, p, c), v)) = scores
            .indexed_iter()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::invalid(format!(
                "score {v} at [{t}][{p}][{c}] is outside [0, 1]"
            )));
        }
        if scores.dim().1 == 0 {
            return Err(Error::invalid("score tensor has no pairs"));
        }
        Ok(Self { scores })
    }

    pub fn scores(&self) -> &Array3<f64> {
        &self.scores
    }

    pub fn num_frames(&self) -> usize {
        self.scores.dim().0
    }

    pub fn num_pairs(&self) -> usize {
        self.scores.dim().1
    }

    pub fn num_classes(&self) -> usize {
        self.scores.dim().2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdSet(pub Vec<f64>);

impl ThresholdSet {
    pub fn uniform(value: f64, num_classes: usize) -> Self {
        Self(vec![value; num_classes])
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if self.0.len() != num_classes {
            return Err(Error::dim("thresholds", num_classes, self.0.len()));
        }
        if let Some(v) = self.0.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::invalid(format!("threshold {v} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Fused scores, frame activity and segment activity of one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct EventTimeline {
    pub fused: Array2<f64>,
    pub frames: Activity,
    pub segments: Activity,
    pub segment_frames: usize,
}

impl EventTimeline {
    pub fn num_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn num_classes(&self) -> usize {
        self.frames.ncols()
    }
}

/// Mean over pairs: `e^t[c] = (1/P) Σ_p e^t_p[c]`.
pub fn fuse_scores(tensor: &ScoreTensor) -> Array2<f64> {
    let p = tensor.num_pairs() as f64;
    tensor.scores.sum_axis(Axis(1)).mapv(|s| (s / p).clamp(0.0, 1.0))
}

/// `E^t[c] = 1` iff `e^t[c] ≥ ε[c]`.
pub fn threshold(fused: &Array2<f64>, thresholds: &ThresholdSet) -> Result<Activity> {
    thresholds.validate(fused.ncols())?;
    let mut out = Activity::from_elem(fused.dim(), false);
    for ((t, c), &e) in fused.indexed_iter() {
        out[(t, c)] = e >= thresholds.0[c];
    }
    Ok(out)
}

/// Drop every run of consecutive active frames shorter than `gamma`.
/// Gaps are never filled.
pub fn postfilter(activity: &Activity, gamma: usize) -> Activity {
    let mut out = activity.clone();
    if gamma <= 1 {
        return out;
    }
    let frames = activity.nrows();
    for c in 0..activity.ncols() {
        let mut t = 0;
        while t < frames {
            if !activity[(t, c)] {
                t += 1;
                continue;
            }
            let start = t;
            while t < frames && activity[(t, c)] {
                t += 1;
            }
            if t - start < gamma {
                for s in start..t {
                    out[(s, c)] = false;
                }
            }
        }
    }
    out
}

/// OR-reduce blocks of `segment_frames` frames; a trailing partial block
/// forms its own segment.
pub fn to_segments(activity: &Activity, segment_frames: usize) -> Activity {
    let l = segment_frames.max(1);
    let segments = activity.nrows().div_ceil(l);
    let mut out = Activity::from_elem((segments, activity.ncols()), false);
    for ((t, c), &a) in activity.indexed_iter() {
        if a {
            out[(t / l, c)] = true;
        }
    }
    out
}

/// Full detection chain for one recording.
pub fn detect_events(
    tensor: &ScoreTensor,
    thresholds: &ThresholdSet,
    gamma: usize,
    segment_frames: usize,
) -> Result<EventTimeline> {
    if segment_frames == 0 {
        return Err(Error::invalid("segment length must be at least one frame"));
    }
    let fused = fuse_scores(tensor);
    let frames = postfilter(&threshold(&fused, thresholds)?, gamma);
    let segments = to_segments(&frames, segment_frames);
    Ok(EventTimeline {
        fused,
        frames,
        segments,
        segment_frames,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningOptions {
    pub grid_step: f64,
    pub gamma: usize,
    pub segment_frames: usize,
}

impl Default for TuningOptions {
    fn default() -> Self {
        Self {
            grid_step: 0.01,
            gamma: 5,
            segment_frames: 50,
        }
    }
}

/// Per-class threshold scan over `{0, step, 2·step, …, 1}` maximising the
/// class-wise segment F-score on a validation set. Ties keep the smallest
/// threshold.
pub fn tune_thresholds(
    validation: &[(ScoreTensor, Activity)],
    options: &TuningOptions,
) -> Result<ThresholdSet> {
    let Some((first, _)) = validation.first() else {
        return Err(Error::invalid("threshold tuning needs a nonempty validation set"));
    };
    if !(options.grid_step > 0.0 && options.grid_step <= 1.0) {
        return Err(Error::invalid("grid_step must be in (0, 1]"));
    }
    let classes = first.num_classes();
    let mut fused = Vec::with_capacity(validation.len());
    for (i, (tensor, reference)) in validation.iter().enumerate() {
        if tensor.num_classes() != classes {
            return Err(Error::dim(
                format!("validation item {i} classes"),
                classes,
                tensor.num_classes(),
            ));
        }
        let expected = tensor.num_frames().div_ceil(options.segment_frames.max(1));
        if reference.dim() != (expected, classes) {
            return Err(Error::dim(
                format!("validation item {i} reference segments"),
                format!("{expected}x{classes}"),
                format!("{}x{}", reference.nrows(), reference.ncols()),
            ));
        }
        fused.push(fuse_scores(tensor));
    }

    let steps = (1.0 / options.grid_step).round() as usize;
    let candidates: Vec<f64> = (0..=steps)
        .map(|i| (i as f64 * options.grid_step).min(1.0))
        .collect();

    let mut chosen = vec![0.0; classes];
    for (c, slot) in chosen.iter_mut().enumerate() {
        let mut best = (f64::NEG_INFINITY, 0.0);
        for &eps in &candidates {
            let mut totals = (0usize, 0usize, 0usize);
            for (e, (_, reference)) in fused.iter().zip(validation) {
                let column = e.column(c);
                let mut act = Activity::from_elem((column.len(), 1), false);
                for (t, &v) in column.iter().enumerate() {
                    act[(t, 0)] = v >= eps;
                }
                let seg = to_segments(&postfilter(&act, options.gamma), options.segment_frames);
                let reference = reference.column(c).to_owned().insert_axis(Axis(1));
                let counts = segment_counts(&seg, &reference)?;
                totals.0 += counts.iter().map(|s| s.tp).sum::<usize>();
                totals.1 += counts.iter().map(|s| s.fn_).sum::<usize>();
                totals.2 += counts.iter().map(|s| s.fp).sum::<usize>();
            }
            let f = class_f_score(totals.0, totals.1, totals.2);
            if f > best.0 {
                best = (f, eps);
            }
        }
        *slot = best.1;
    }
    Ok(ThresholdSet(chosen))
}
