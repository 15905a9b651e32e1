use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use serde_json::json;

use seld_core::calibration::{collect_observations, fit_calibration, CalibrationTable};
use seld_core::config::DetectorChoice;
use seld_core::detector::detect as run_detector;
use seld_core::dsp::{compute_stft, Spectrogram};
use seld_core::fusion::{to_segments, tune_thresholds as tune, EventTimeline, ScoreTensor};
use seld_core::io::calibration::write_calibration;
use seld_core::io::labels::{rasterize_labels, read_labels, write_labels, LabelRecord};
use seld_core::io::results::{read_results, write_results};
use seld_core::io::tensor::{read_scores, read_tdoas, write_scores, write_tdoas};
use seld_core::io::wav::{read_wav, write_wav, Audio};
use seld_core::io::{read_json, write_json};
use seld_core::metrics::evaluate;
use seld_core::pipeline::{run_audio, run_tensors};
use seld_core::sim::{synthesize, SceneScript, SimOptions};

use crate::settings::{config_error, relative_to, Settings};
use crate::Common;

pub fn simulate(common: &Common, script_path: &Path) -> Result<()> {
    let settings = Settings::load(common)?;
    let cfg = &settings.config;
    let mut script: SceneScript = read_json(script_path).map_err(|e| config_error(e.to_string()))?;
    if let Some(seed) = cfg.seed {
        script.seed = seed;
    }
    let options = SimOptions {
        stft: cfg.stft.clone(),
        grid: cfg.grid.clone(),
        tau_max: cfg.lattice.tau_max,
        num_classes: cfg.num_classes,
    };
    let scene = synthesize(&script, &settings.geometry, &options)?;
    let out = settings.prepare_output(&common.out)?;

    let classes = cfg.class_map()?;
    let labels: Vec<LabelRecord> = scene
        .labels
        .iter()
        .zip(&script.events)
        .map(|(l, ev)| LabelRecord {
            class: classes.name(ev.class).to_string(),
            ..l.clone()
        })
        .collect();
    write_wav(&out.join("audio.wav"), &scene.signals, cfg.stft.sample_rate_hz as u32)?;
    write_labels(&out.join("labels.csv"), &labels)?;
    write_scores(&out.join("scores.json"), &scene.oracle_scores, cfg.lattice.tau_max)?;
    write_tdoas(&out.join("tdoas.json"), &scene.oracle_tdoas, cfg.lattice.tau_max)?;
    print_json(&json!({
        "seed": script.seed,
        "channels": scene.signals.len(),
        "samples": scene.signals.first().map_or(0, Vec::len),
        "frames": scene.num_frames(),
        "events": scene.event_doas.len(),
        "out": out,
    }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Recording {
    audio: std::path::PathBuf,
    labels: std::path::PathBuf,
}

pub fn calibrate(common: &Common, manifest: Option<&Path>, analytic: bool) -> Result<()> {
    let settings = Settings::load(common)?;
    let cfg = &settings.config;
    let lattice = cfg.lattice.build()?;
    let table = if analytic {
        CalibrationTable::analytic(&settings.geometry, &cfg.grid, &lattice, cfg.stft.sample_rate_hz)?
    } else {
        let manifest = manifest.context("calibrate needs --manifest or --analytic")?;
        let entries: Vec<Recording> =
            read_json(manifest).map_err(|e| config_error(e.to_string()))?;
        let classes = cfg.class_map()?;
        let mut recordings = Vec::with_capacity(entries.len());
        for entry in &entries {
            let spec = load_spectrogram(&settings, &relative_to(manifest, &entry.audio))?;
            let labels = read_labels(&relative_to(manifest, &entry.labels))?;
            let reference =
                rasterize_labels(&labels, &cfg.stft, &classes, Some(&cfg.grid), spec.num_frames())?;
            let annotations = reference
                .doas
                .iter()
                .map(|d| match d.as_slice() {
                    [only] => cfg.grid.find(*only),
                    _ => None,
                })
                .collect();
            recordings.push((spec, annotations));
        }
        let obs = collect_observations(&recordings, &cfg.grid, &lattice)?;
        fit_calibration(&obs, &cfg.grid, &lattice, &cfg.fit)?
    };

    let out = settings.prepare_output(&common.out)?;
    write_calibration(&out.join("calibration.json"), &table)?;
    let mut stdout = std::io::stdout().lock();
    if table.fits().is_empty() {
        writeln!(stdout, "analytic table: {} grid points, {} pairs", table.grid().len(), table.num_pairs())?;
    } else {
        writeln!(stdout, "{:<8} {:>9} {:>10} {:>10} {:>8}", "pair", "elevation", "rms_first", "rms_second", "outliers")?;
        for fit in table.fits() {
            writeln!(
                stdout,
                "{:<8} {:>9} {:>10.4} {:>10.4} {:>8}",
                format!("{}-{}", fit.pair.0, fit.pair.1),
                table.grid().elevations_deg[fit.elevation_index],
                fit.rms_first,
                fit.rms_second,
                fit.outlier_azimuths.len()
            )?;
        }
    }
    writeln!(stdout, "wrote {}", out.join("calibration.json").display())?;
    Ok(())
}

pub fn detect(
    common: &Common,
    audio: Option<&Path>,
    scores: Option<&Path>,
    tdoas: Option<&Path>,
) -> Result<()> {
    let settings = Settings::load(common)?;
    let cfg = &settings.config;
    let table = settings.calibration()?;
    let (output, written) = match cfg.detector {
        DetectorChoice::Baseline => {
            let Some(audio) = audio else {
                return Err(config_error("the baseline detector needs --audio"));
            };
            let audio = load_audio(&settings, audio)?;
            let (output, s, t) = run_audio(&audio.channels, &table, cfg)?;
            (output, Some((s, t)))
        }
        DetectorChoice::Tensors => {
            let (Some(scores), Some(tdoas)) = (scores, tdoas) else {
                return Err(config_error("the tensors detector needs --scores and --tdoas"));
            };
            let (s, _) = read_scores(scores)?;
            let (t, _) = read_tdoas(tdoas)?;
            (run_tensors(&s, &t, &table, cfg)?, None)
        }
    };

    let out = settings.prepare_output(&common.out)?;
    write_results(&out.join("results.csv"), &output.timeline.frames, &output.doas)?;
    write_timeline(&out.join("timeline.csv"), &output.timeline)?;
    if let Some((s, t)) = &written {
        write_scores(&out.join("scores.json"), s, cfg.lattice.tau_max)?;
        write_tdoas(&out.join("tdoas.json"), t, cfg.lattice.tau_max)?;
    }
    print_json(&json!({
        "frames": output.timeline.num_frames(),
        "active_frame_classes": output.timeline.frames.iter().filter(|&&a| a).count(),
        "doas": output.doas.count(),
        "missing_tdoa": output.diagnostics.missing_tdoa,
        "out": out,
    }))
}

pub fn eval(
    common: &Common,
    results: &Path,
    labels: &Path,
    num_frames: Option<usize>,
    audio: Option<&Path>,
) -> Result<()> {
    let settings = Settings::load(common)?;
    let cfg = &settings.config;
    let classes = cfg.class_map()?;
    let records = read_labels(labels)?;
    let frames = match (num_frames, audio) {
        (Some(t), _) => t,
        (None, Some(path)) => {
            let audio = load_audio(&settings, path)?;
            cfg.stft.num_frames(audio.channels[0].len())
        }
        (None, None) => frames_covering(&settings, &records, results)?,
    };
    let reference = rasterize_labels(&records, &cfg.stft, &classes, None, frames)?;
    let (activity, doas) = read_results(results, frames, classes.len())?;
    let report = evaluate(
        &to_segments(&activity, cfg.segment_frames),
        &to_segments(&reference.frames, cfg.segment_frames),
        &doas,
        &reference.doas,
    )?;
    let out = settings.prepare_output(&common.out)?;
    write_json(&out.join("metrics.json"), &report)?;
    print_json(&serde_json::to_value(&report)?)?;
    print!("{}", report.to_table());
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ValidationItem {
    labels: std::path::PathBuf,
    #[serde(default)]
    scores: Option<std::path::PathBuf>,
    #[serde(default)]
    audio: Option<std::path::PathBuf>,
}

pub fn tune_thresholds(common: &Common, manifest: &Path) -> Result<()> {
    let settings = Settings::load(common)?;
    let cfg = &settings.config;
    let classes = cfg.class_map()?;
    let lattice = cfg.lattice.build()?;
    let items: Vec<ValidationItem> = read_json(manifest).map_err(|e| config_error(e.to_string()))?;
    let mut validation = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let scores: ScoreTensor = match (&item.scores, &item.audio) {
            (Some(s), None) => read_scores(&relative_to(manifest, s))?.0,
            (None, Some(a)) => {
                let spec = load_spectrogram(&settings, &relative_to(manifest, a))?;
                run_detector(&spec, &lattice, &cfg.detector_config())?.0
            }
            _ => bail!(config_error(format!(
                "manifest item {i}: give exactly one of \"scores\" or \"audio\""
            ))),
        };
        let records = read_labels(&relative_to(manifest, &item.labels))?;
        let reference =
            rasterize_labels(&records, &cfg.stft, &classes, None, scores.num_frames())?;
        validation.push((scores, to_segments(&reference.frames, cfg.segment_frames)));
    }
    let thresholds = tune(&validation, &cfg.tuning_options())?;
    let out = settings.prepare_output(&common.out)?;
    write_json(&out.join("thresholds.json"), &thresholds)?;
    print_json(&serde_json::to_value(&thresholds)?)
}

fn load_audio(settings: &Settings, path: &Path) -> Result<Audio> {
    let audio = read_wav(path)?;
    let expected = settings.config.stft.sample_rate_hz;
    if audio.sample_rate as f64 != expected {
        return Err(config_error(format!(
            "{}: sample rate {} Hz, configuration expects {expected} Hz",
            path.display(),
            audio.sample_rate
        )));
    }
    Ok(audio)
}

fn load_spectrogram(settings: &Settings, path: &Path) -> Result<Spectrogram> {
    let audio = load_audio(settings, path)?;
    Ok(compute_stft(&audio.channels, &settings.config.stft)?)
}

/// Enough frames to hold every labelled event and every result row.
fn frames_covering(settings: &Settings, records: &[LabelRecord], results: &Path) -> Result<usize> {
    let stft = &settings.config.stft;
    let last_offset = records.iter().map(|r| r.offset_sec).fold(0.0, f64::max);
    let half = stft.frame_size as f64 / 2.0;
    let from_labels = ((last_offset * stft.sample_rate_hz - half) / stft.hop_size as f64)
        .ceil()
        .max(0.0) as usize;
    let mut reader = csv::Reader::from_path(results)
        .with_context(|| format!("reading {}", results.display()))?;
    let mut from_results = 0;
    for row in reader.records() {
        let row = row.with_context(|| format!("reading {}", results.display()))?;
        if let Some(t) = row.get(0).and_then(|v| v.parse::<usize>().ok()) {
            from_results = from_results.max(t + 1);
        }
    }
    Ok(from_labels.max(from_results))
}

fn write_timeline(path: &Path, timeline: &EventTimeline) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?;
    w.write_record(["frame_index", "class", "fused_score", "active"])?;
    for ((t, c), score) in timeline.fused.indexed_iter() {
        w.write_record([
            t.to_string(),
            c.to_string(),
            score.to_string(),
            u8::from(timeline.frames[(t, c)]).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn print_json(value: &serde_json::Value) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}
