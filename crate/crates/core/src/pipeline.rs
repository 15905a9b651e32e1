//! Detection pipeline: scores and TDOAs in, event timeline and DOAs out.

use crate::calibration::CalibrationTable;
use crate::config::RunConfig;
use crate::detector::detect;
use crate::doa::{estimate_doas, DoaDiagnostics, DoaOutput, TdoaTensor};
use crate::dsp::compute_stft;
use crate::fusion::{detect_events, EventTimeline, ScoreTensor};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub timeline: EventTimeline,
    pub doas: DoaOutput,
    pub diagnostics: DoaDiagnostics,
}

/// Fuse, threshold, post-filter and localise detector tensors.
pub fn run_tensors(
    scores: &ScoreTensor,
    tdoas: &TdoaTensor,
    table: &CalibrationTable,
    config: &RunConfig,
) -> Result<PipelineOutput> {
    let (t, p, c) = scores.scores().dim();
    if tdoas.tdoas().dim() != (t, p, c) {
        let (a, b, d) = tdoas.tdoas().dim();
        return Err(Error::dim(
            "TDOA tensor",
            format!("{t}x{p}x{c}"),
            format!("{a}x{b}x{d}"),
        ));
    }
    if c != config.num_classes {
        return Err(Error::dim("score tensor classes", config.num_classes, c));
    }
    if p != table.num_pairs() {
        return Err(Error::dim("score tensor pairs", table.num_pairs(), p));
    }
    let timeline = detect_events(scores, &config.thresholds(), config.gamma, config.segment_frames)?;
    let (doas, diagnostics) = estimate_doas(tdoas, &timeline.frames, table, &config.kernel)?;
    Ok(PipelineOutput {
        timeline,
        doas,
        diagnostics,
    })
}

/// Run the baseline detector on raw audio, then the tensor pipeline.
pub fn run_audio(
    signals: &[Vec<f64>],
    table: &CalibrationTable,
    config: &RunConfig,
) -> Result<(PipelineOutput, ScoreTensor, TdoaTensor)> {
    if signals.len() != table.num_mics() {
        return Err(Error::dim("audio channels", table.num_mics(), signals.len()));
    }
    let spec = compute_stft(signals, &config.stft)?;
    let lattice = config.lattice.build()?;
    let (scores, tdoas) = detect(&spec, &lattice, &config.detector_config())?;
    let out = run_tensors(&scores, &tdoas, table, config)?;
    Ok((out, scores, tdoas))
}
