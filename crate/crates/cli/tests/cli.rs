use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn seld(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_seld"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, value: &Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn stdout_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stdout);
    let end = text.rfind("\n}").map_or(text.len(), |i| i + 2);
    serde_json::from_str(&text[..end]).unwrap_or_else(|e| panic!("{e}: {text}"))
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn scene_script(seed: u64) -> Value {
    json!({
        "duration_sec": 6.0,
        "seed": seed,
        "events": [
            { "class": 0, "onset_sec": 0.5, "offset_sec": 2.0, "doa": { "q": 10 }, "snr_db": 20.0 },
            { "class": 0, "onset_sec": 3.0, "offset_sec": 5.2,
              "doa": { "azimuth_deg": -90.0, "elevation_deg": 20.0 }, "snr_db": 20.0 }
        ]
    })
}

#[test]
fn help_lists_every_flag() {
    let out = seld(&["--help"]);
    assert_ok(&out);
    let help = String::from_utf8_lossy(&out.stdout);
    for flag in [
        "--config", "--geometry", "--calibration", "--detector", "--seed", "--out", "--sigma",
        "--gamma", "--tau-max", "--grid-g", "--segment-frames",
    ] {
        assert!(help.contains(flag), "missing {flag}");
    }
    for cmd in ["simulate", "calibrate", "detect", "eval", "tune-thresholds"] {
        assert!(help.contains(cmd), "missing {cmd}");
    }
}

#[test]
fn oracle_round_trip_scores_perfectly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script = write(d, "script.json", &scene_script(1));
    let scene = d.join("scene");
    assert_ok(&seld(&["simulate", "--script", arg(&script), "--out", arg(&scene)]));
    for f in ["audio.wav", "labels.csv", "scores.json", "scores.f32", "tdoas.json", "tdoas.f32", "effective_config.json"] {
        assert!(scene.join(f).exists(), "{f} missing");
    }

    let cal = d.join("cal");
    assert_ok(&seld(&["calibrate", "--analytic", "--out", arg(&cal)]));
    let det = d.join("det");
    assert_ok(&seld(&[
        "detect",
        "--detector", "tensors",
        "--scores", arg(&scene.join("scores.json")),
        "--tdoas", arg(&scene.join("tdoas.json")),
        "--calibration", arg(&cal.join("calibration.json")),
        "--out", arg(&det),
    ]));
    let results = std::fs::read_to_string(det.join("results.csv")).unwrap();
    assert!(results.lines().skip(1).all(|l| l.ends_with(",-80,-40") || l.ends_with(",-90,20")));

    let out = seld(&[
        "eval",
        "--results", arg(&det.join("results.csv")),
        "--labels", arg(&scene.join("labels.csv")),
        "--audio", arg(&scene.join("audio.wav")),
        "--out", arg(&d.join("eval")),
    ]);
    assert_ok(&out);
    let report = stdout_json(&out);
    assert_eq!(report["er"], json!(0.0));
    assert_eq!(report["f"], json!(1.0));
    assert_eq!(report["doae"], json!(0.0));
    assert_eq!(report["fr"], json!(1.0));
    let effective: Value =
        serde_json::from_str(&std::fs::read_to_string(det.join("effective_config.json")).unwrap()).unwrap();
    assert_eq!(effective["detector"], json!("tensors"));
}

#[test]
fn off_grid_event_exits_2_naming_event() {
    let dir = tempfile::tempdir().unwrap();
    let mut script = scene_script(1);
    script["events"][1]["doa"] = json!({ "azimuth_deg": -95.0, "elevation_deg": 20.0 });
    let path = write(dir.path(), "script.json", &script);
    let out = seld(&["simulate", "--script", arg(&path), "--out", arg(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("event 1"));
}

#[test]
fn seed_override_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script = write(d, "script.json", &scene_script(1));
    let render = |name: &str, seed: &str| {
        let out_dir = d.join(name);
        assert_ok(&seld(&["simulate", "--script", arg(&script), "--seed", seed, "--out", arg(&out_dir)]));
        std::fs::read(out_dir.join("audio.wav")).unwrap()
    };
    let a = render("a", "5");
    assert_eq!(a, render("b", "5"));
    assert_ne!(a, render("c", "6"));
}

#[test]
fn unreadable_or_missing_calibration_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let script = write(d, "script.json", &scene_script(2));
    let scene = d.join("scene");
    assert_ok(&seld(&["simulate", "--script", arg(&script), "--out", arg(&scene)]));
    let bad = d.join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let (audio, out_dir) = (scene.join("audio.wav"), d.join("o"));
    for cal in [Some(bad.as_path()), None] {
        let mut args = vec!["detect", "--audio", arg(&audio), "--out", arg(&out_dir)];
        if let Some(c) = cal {
            args.extend(["--calibration", arg(c)]);
        }
        assert_eq!(seld(&args).status.code(), Some(2));
    }
}

#[test]
fn invalid_override_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = seld(&["calibrate", "--analytic", "--grid-g", "100", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = seld(&["calibrate", "--analytic", "--gamma", "80", "--out", arg(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn empty_results_report_undefined_doae() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let results = d.join("results.csv");
    std::fs::write(&results, "frame_index,class,azimuth_deg,elevation_deg\n").unwrap();
    let labels = d.join("labels.csv");
    std::fs::write(&labels, "class,onset_sec,offset_sec,azimuth_deg,elevation_deg\n0,0.5,1.5,10,0\n").unwrap();
    let out = seld(&["eval", "--results", arg(&results), "--labels", arg(&labels), "--num-frames", "100", "--out", arg(d)]);
    assert_ok(&out);
    let report = stdout_json(&out);
    assert_eq!(report["f"], json!(0.0));
    assert_eq!(report["doae"], Value::Null);
    assert!(String::from_utf8_lossy(&out.stdout).contains("undefined (no estimates)"));
}

#[test]
fn eval_fixture_counts() {
    // Segments of 50 frames, two classes.
    //   segment 0: ref {0}, est {0, 1} → TP 1, FP 1 → I 1
    //   segment 1: ref {1}, est {}     → FN 1       → D 1
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = write(d, "config.json", &json!({
        "num_classes": 2,
        "class_names": ["dog", "bell"],
        "baseline": { "single_class_mode": false }
    }));
    let labels = d.join("labels.csv");
    std::fs::write(
        &labels,
        "class,onset_sec,offset_sec,azimuth_deg,elevation_deg\ndog,0.0,0.5,0,0\nbell,1.2,1.5,90,0\n",
    )
    .unwrap();
    let results = d.join("results.csv");
    std::fs::write(&results, "frame_index,class,azimuth_deg,elevation_deg\n5,0,0,0\n6,1,,\n").unwrap();
    let out = seld(&[
        "eval", "--config", arg(&config), "--results", arg(&results), "--labels", arg(&labels),
        "--num-frames", "100", "--out", arg(d),
    ]);
    assert_ok(&out);
    let report = stdout_json(&out);
    let counts = &report["diagnostics"]["counts"];
    assert_eq!(
        (counts["tp"].as_u64(), counts["fn_"].as_u64(), counts["fp"].as_u64(), counts["n"].as_u64()),
        (Some(1), Some(1), Some(1), Some(2))
    );
    assert_eq!((counts["s"].as_u64(), counts["d"].as_u64(), counts["i"].as_u64()), (Some(0), Some(1), Some(1)));
    assert_eq!(report["er"], json!(1.0));
    assert_eq!(report["f"], json!(0.5));
}

/// Horizon-only grid so a short sweep covers every DOA.
fn horizon_config(d: &Path) -> PathBuf {
    let azimuths: Vec<f64> = (0..36).map(|i| -180.0 + 10.0 * i as f64).collect();
    write(d, "config.json", &json!({ "grid": { "azimuths_deg": azimuths, "elevations_deg": [0.0] } }))
}

fn horizon_sweep(d: &Path) -> PathBuf {
    let events: Vec<Value> = (0..36)
        .map(|q| {
            let on = 0.1 + 0.4 * q as f64;
            json!({ "class": 0, "onset_sec": on, "offset_sec": on + 0.3, "doa": { "q": q }, "snr_db": 20.0 })
        })
        .collect();
    write(d, "sweep.json", &json!({ "duration_sec": 14.6, "seed": 9, "events": events }))
}

#[test]
fn measured_calibration_matches_analytic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = horizon_config(d);
    let sweep = horizon_sweep(d);
    let scene = d.join("scene");
    assert_ok(&seld(&["simulate", "--config", arg(&config), "--script", arg(&sweep), "--out", arg(&scene)]));
    let manifest = write(d, "manifest.json", &json!([{ "audio": "scene/audio.wav", "labels": "scene/labels.csv" }]));

    let measured = d.join("measured");
    let out = seld(&["calibrate", "--config", arg(&config), "--manifest", arg(&manifest), "--out", arg(&measured)]);
    assert_ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("rms_second"));
    let analytic = d.join("analytic");
    assert_ok(&seld(&["calibrate", "--config", arg(&config), "--analytic", "--out", arg(&analytic)]));

    let load = |p: &Path| -> Vec<f64> {
        let v: Value = serde_json::from_str(&std::fs::read_to_string(p.join("calibration.json")).unwrap()).unwrap();
        v["tdoa"].as_array().unwrap().iter().flat_map(|r| r.as_array().unwrap().iter().map(|x| x.as_f64().unwrap())).collect()
    };
    let (m, a) = (load(&measured), load(&analytic));
    assert_eq!(m.len(), 36 * 6);
    let worst = m.iter().zip(&a).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(worst < 0.5, "{worst}");

    // The full default grid has eight elevations without any recordings.
    let out = seld(&["calibrate", "--manifest", arg(&manifest), "--out", arg(&d.join("full"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("missing azimuths"), "{stderr}");
}

#[test]
fn tuned_thresholds_leave_silence_empty() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    // Validation scene with events, pinned noise level shared with the silent scene.
    let mut script = scene_script(3);
    script["noise_dbfs"] = json!(-40.0);
    let script = write(d, "val.json", &script);
    assert_ok(&seld(&["simulate", "--script", arg(&script), "--out", arg(&d.join("val"))]));
    // Validation also needs event-free audio, otherwise every low threshold ties.
    let quiet = write(d, "quiet.json", &json!({ "duration_sec": 6.0, "seed": 5, "noise_dbfs": -40.0 }));
    assert_ok(&seld(&["simulate", "--script", arg(&quiet), "--out", arg(&d.join("quiet"))]));
    let manifest = write(d, "tune.json", &json!([
        { "audio": "val/audio.wav", "labels": "val/labels.csv" },
        { "audio": "quiet/audio.wav", "labels": "quiet/labels.csv" }
    ]));
    let out = seld(&["tune-thresholds", "--manifest", arg(&manifest), "--out", arg(&d.join("tuned"))]);
    assert_ok(&out);
    let thresholds = d.join("tuned").join("thresholds.json");
    assert!(thresholds.exists());

    let silent = write(d, "silent.json", &json!({ "duration_sec": 6.0, "seed": 4, "noise_dbfs": -40.0 }));
    assert_ok(&seld(&["simulate", "--script", arg(&silent), "--out", arg(&d.join("silent"))]));
    assert_ok(&seld(&["calibrate", "--analytic", "--out", arg(&d.join("cal"))]));
    let out = seld(&[
        "detect",
        "--audio", arg(&d.join("silent").join("audio.wav")),
        "--calibration", arg(&d.join("cal").join("calibration.json")),
        "--thresholds", arg(&thresholds),
        "--out", arg(&d.join("det")),
    ]);
    assert_ok(&out);
    let results = std::fs::read_to_string(d.join("det").join("results.csv")).unwrap();
    assert_eq!(results, "frame_index,class,azimuth_deg,elevation_deg\n");
}
