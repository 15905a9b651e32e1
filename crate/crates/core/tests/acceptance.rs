//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs without the libtest harness so the report is printed on every
//! `cargo test`. The process exits non-zero if any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use ndarray::Array2;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use seld_core::calibration::{
    fit_calibration, CalibrationObservations, CalibrationTable, FitOptions, Observation,
};
use seld_core::config::RunConfig;
use seld_core::dsp::{
    accumulate_cross_spectrum, compute_stft, estimate_tdoa, CrossSpectrum, GccPhat, StftConfig,
    TdoaLattice,
};
use seld_core::fusion::{to_segments, tune_thresholds, Activity, ScoreTensor, TuningOptions};
use seld_core::geometry::{predict_freefield, ArrayGeometry, Doa, DoaGrid};
use seld_core::metrics::{
    angular_distance, error_rate, evaluate, f_score, frame_assignment_cost, segment_counts,
    totals, SegmentCount,
};
use seld_core::pipeline::{run_audio, run_tensors};
use seld_core::sim::{
    fractional_delay, synthesize, DoaSpec, SceneScript, ScriptEvent, SimOptions, SimulatedScene,
    SourceKind,
};
use seld_core::{pair_order, Result};

const FS: f64 = 48_000.0;

struct Outcome {
    passed: bool,
    detail: String,
}

type Criterion = (&'static str, &'static str, fn() -> Result<Outcome>);

fn outcome(passed: bool, detail: String) -> Outcome {
    Outcome { passed, detail }
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("C1", "GCC-PHAT matches per-term oracle", c1_gcc_oracle),
        ("C2", "TDOA recovery at 20 dB", c2_tdoa_recovery),
        ("C3", "calibration fit with outliers", c3_calibration),
        ("C4", "end-to-end exactness with oracle tensors", c4_oracle_pipeline),
        ("C5", "baseline detector end to end at 20 dB", c5_baseline),
        ("C6", "metrics fixtures, Hungarian and role swap", c6_metrics),
        ("C8", "60 s scene within the time budget", c8_performance),
    ];
    let mut failed = 0;
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(o) if o.passed => println!("[PASS] {id} {name}: {} ({secs:.2} s)", o.detail),
            Ok(o) => {
                failed += 1;
                println!("[FAIL] {id} {name}: {} ({secs:.2} s)", o.detail);
            }
            Err(e) => {
                failed += 1;
                println!("[FAIL] {id} {name}: error {e}");
            }
        }
        if id == "C6" {
            println!(
                "[INFO] C7 published development-set scores (ER 0.21, F 87.2%, DOAE 6.8°, FR 84.7%): \
                 not reproducible here, they need the DCASE data and trained networks"
            );
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
    println!("all criteria passed");
}

/// 100 random cross-spectra, K = 512, G = 101: lattice evaluation against an
/// explicit `Σ Re(exp(2πiτk/N)·v/|v|)` per term.
fn c1_gcc_oracle() -> Result<Outcome> {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let lattice = TdoaLattice::new(20.0, 101)?;
    let (n, lo, hi) = (2048, 1, 513);
    let spectra: Vec<CrossSpectrum> = (0..100)
        .map(|_| CrossSpectrum {
            pair: (0, 1),
            frame_size: n,
            bin_lo: lo,
            values: (lo..hi)
                .map(|_| {
                    let mag = rng.random_range(1e-3..10.0);
                    Complex64::from_polar(mag, rng.random_range(-PI..PI))
                })
                .collect(),
        })
        .collect();

    let start = Instant::now();
    let gcc = GccPhat::new(&lattice, n, lo, hi);
    let outputs = spectra
        .iter()
        .map(|cs| gcc.evaluate(cs))
        .collect::<Result<Vec<_>>>()?;
    let elapsed = start.elapsed().as_secs_f64();

    let mut worst: f64 = 0.0;
    for (cs, out) in spectra.iter().zip(&outputs) {
        let oracle: Vec<f64> = lattice
            .values()
            .iter()
            .map(|&tau| {
                cs.values
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        let k = (i + lo) as f64;
                        (Complex64::new(0.0, 2.0 * PI * tau * k / n as f64).exp() * (v / v.norm())).re
                    })
                    .sum()
            })
            .collect();
        let peak = oracle.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in out.values.iter().zip(&oracle) {
            worst = worst.max((a - b).abs() / peak);
        }
    }
    Ok(outcome(
        worst <= 1e-6 && elapsed < 5.0,
        format!("max relative error {worst:.2e} (limit 1e-6), runtime {elapsed:.3} s (limit 5 s)"),
    ))
}

/// Per-frame GCC-PHAT TDOA of delayed white noise: within 0.4 samples on at
/// least 95 % of active frames.
fn c2_tdoa_recovery() -> Result<Outcome> {
    let lattice = TdoaLattice::default();
    let stft = StftConfig::default();
    let gcc = GccPhat::for_config(&lattice, &stft);
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let (mut hits, mut total) = (0usize, 0usize);

    let mut tally = |spec: &seld_core::dsp::Spectrogram, frames: &[usize], truth: f64| -> Result<()> {
        for &t in frames {
            let cs = accumulate_cross_spectrum(spec, (0, 1), &[t])?;
            let est = estimate_tdoa(&gcc.evaluate(&cs)?.values, &lattice)?;
            total += 1;
            if (est - truth).abs() <= 0.4 + 1e-9 {
                hits += 1;
            }
        }
        Ok(())
    };

    // Direct delays: every integer in [-15, 15] plus fractional values.
    let mut delays: Vec<f64> = (-15..=15).map(f64::from).collect();
    delays.extend([-14.6, -11.25, -7.5, -3.3, -0.7, 0.5, 2.9, 6.1, 9.75, 13.4, 14.9]);
    let len = 48_000;
    for &d in &delays {
        let src: Vec<f64> = (0..len).map(|_| StandardNormal.sample(&mut rng)).collect();
        let pad = 64;
        // Channel 0 lags channel 1 by d samples.
        let lagged = fractional_delay(&src, d, pad);
        let lead = fractional_delay(&src, 0.0, pad);
        let sd = 0.1; // unit-power source, 20 dB SNR
        let mut noisy = |x: Vec<f64>| -> Vec<f64> {
            x[pad..pad + len]
                .iter()
                .map(|v| {
                    let n: f64 = StandardNormal.sample(&mut rng);
                    v + sd * n
                })
                .collect()
        };
        let channels = [noisy(lagged), noisy(lead)];
        let spec = compute_stft(&channels, &stft)?;
        let frames: Vec<usize> = (0..spec.num_frames()).collect();
        tally(&spec, &frames, d)?;
    }

    // Scene simulator: two microphones 10.7 cm apart, every grid azimuth on
    // the horizon.
    let geometry = ArrayGeometry::new(vec![[0.0535, 0.0, 0.0], [-0.0535, 0.0, 0.0]], 343.0)?;
    let grid = DoaGrid::default();
    let options = SimOptions::default();
    for a in 0..grid.num_azimuths() {
        let q = grid.index(a, 4);
        let script = SceneScript {
            duration_sec: 1.6,
            events: vec![ScriptEvent {
                class: 0,
                onset_sec: 0.2,
                offset_sec: 1.4,
                doa: DoaSpec::Index { q },
                source: SourceKind::WhiteNoise,
                snr_db: 20.0,
            }],
            seed: 2000 + a as u64,
            noise_dbfs: None,
        };
        let scene = synthesize(&script, &geometry, &options)?;
        let truth = predict_freefield(&geometry, grid.lookup(q)?, FS)[0];
        let spec = compute_stft(&scene.signals, &stft)?;
        let active: Vec<usize> = (0..scene.num_frames())
            .filter(|&t| scene.reference.frames[(t, 0)])
            .collect();
        tally(&spec, &active, truth)?;
    }

    let ratio = hits as f64 / total as f64;
    Ok(outcome(
        ratio >= 0.95,
        format!(
            "{hits}/{total} frames within 0.4 samples = {:.2}% (limit 95%), {} direct delays + 36 simulated DOAs",
            100.0 * ratio,
            delays.len()
        ),
    ))
}

/// Analytic tetrahedron curves with 5 % of the points per pair replaced by
/// ±τ_max: max table error below 0.5 samples, second fit no worse than the
/// first on every row.
fn c3_calibration() -> Result<Outcome> {
    let geometry = ArrayGeometry::tetrahedron(0.042);
    let grid = DoaGrid::default();
    let lattice = TdoaLattice::default();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let truth: Vec<Vec<f64>> = (0..grid.len())
        .map(|q| predict_freefield(&geometry, grid.lookup(q).unwrap(), FS))
        .collect();
    let pairs = geometry.num_pairs();
    let outliers_per_pair = (0.05 * grid.len() as f64).round() as usize;

    let mut obs = CalibrationObservations::new(geometry.num_mics(), grid.len());
    for p in 0..pairs {
        let mut qs: Vec<usize> = (0..grid.len()).collect();
        qs.shuffle(&mut rng);
        let corrupt = &qs[..outliers_per_pair];
        for (q, row) in truth.iter().enumerate() {
            let tdoa = if corrupt.contains(&q) {
                if rng.random_bool(0.5) { lattice.tau_max() } else { -lattice.tau_max() }
            } else {
                row[p]
            };
            obs.set(p, q, Observation { tdoa, weight: 1.0 })?;
        }
    }
    let table = fit_calibration(&obs, &grid, &lattice, &FitOptions::default())?;

    let mut max_err: f64 = 0.0;
    for (q, row) in truth.iter().enumerate() {
        for (a, b) in table.lookup(q)?.iter().zip(row) {
            max_err = max_err.max((a - b).abs());
        }
    }
    let pair_index = |pair: (usize, usize)| pair_order(geometry.num_mics()).iter().position(|&x| x == pair).unwrap();
    let mut rows_ok = 0;
    let mut worst_row = (f64::NEG_INFINITY, 0.0, 0.0);
    for fit in table.fits() {
        let p = pair_index(fit.pair);
        let rms = |poly: &seld_core::polyfit::ChebyshevPoly| {
            let sq: f64 = (0..grid.num_azimuths())
                .map(|a| {
                    let q = grid.index(a, fit.elevation_index);
                    (poly.eval(grid.azimuths_deg[a]) - truth[q][p]).powi(2)
                })
                .sum();
            (sq / grid.num_azimuths() as f64).sqrt()
        };
        let (first, second) = (rms(&fit.first), rms(&fit.second));
        if second <= first {
            rows_ok += 1;
        }
        if second - first > worst_row.0 {
            worst_row = (second - first, first, second);
        }
    }
    let rows = table.fits().len();
    Ok(outcome(
        max_err < 0.5 && rows_ok == rows && rows == pairs * grid.num_elevations(),
        format!(
            "{outliers_per_pair} outliers per pair, max |error| {max_err:.4} samples (limit 0.5), \
             second-fit RMS ≤ first-fit RMS on {rows_ok}/{rows} rows"
        ),
    ))
}

fn event(class: usize, on: f64, off: f64, q: usize, snr_db: f64) -> ScriptEvent {
    ScriptEvent {
        class,
        onset_sec: on,
        offset_sec: off,
        doa: DoaSpec::Index { q },
        source: SourceKind::WhiteNoise,
        snr_db,
    }
}

/// Scripted scenes through the pipeline with oracle tensors and an analytic
/// table: DOAE 0°, FR 1, ER 0, F 1 exactly.
fn c4_oracle_pipeline() -> Result<Outcome> {
    let geometry = ArrayGeometry::tetrahedron(0.042);
    let grid = DoaGrid::default();
    let lattice = TdoaLattice::default();
    let table = CalibrationTable::analytic(&geometry, &grid, &lattice, FS)?;
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut details = Vec::new();
    let mut all_ok = true;
    for (s, classes) in [(0, 1), (1, 1), (2, 3), (3, 3), (4, 2)].into_iter().map(|(s, c)| (s as u64, c)) {
        let mut events = Vec::new();
        for c in 0..classes {
            let mut t = rng.random_range(0.0..1.0);
            while t < 16.0 {
                let len = rng.random_range(0.3..3.0);
                if t + len > 18.0 {
                    break;
                }
                events.push(event(c, t, t + len, rng.random_range(0..grid.len()), 20.0));
                t += len + rng.random_range(0.2..2.0);
            }
        }
        let script = SceneScript {
            duration_sec: 18.0,
            events,
            seed: 4000 + s,
            noise_dbfs: None,
        };
        let options = SimOptions {
            num_classes: classes,
            ..SimOptions::default()
        };
        let scene = synthesize(&script, &geometry, &options)?;
        let config = RunConfig {
            num_classes: classes,
            baseline: seld_core::detector::DetectorConfig {
                single_class_mode: classes == 1,
                ..Default::default()
            },
            ..RunConfig::default()
        };
        let out = run_tensors(&scene.oracle_scores, &scene.oracle_tdoas, &table, &config)?;
        let report = evaluate(
            &out.timeline.segments,
            &to_segments(&scene.reference.frames, config.segment_frames),
            &out.doas,
            &scene.reference.doas,
        )?;
        let ok = report.doae == Some(0.0) && report.fr == 1.0 && report.er == Some(0.0) && report.f == 1.0;
        all_ok &= ok;
        details.push(format!(
            "scene {s} ({classes} cl, {} ev): DOAE {:?} FR {} ER {:?} F {}",
            script.events.len(),
            report.doae,
            report.fr,
            report.er,
            report.f
        ));
    }
    Ok(outcome(all_ok, details.join("; ")))
}

/// Random single-class scene: white-noise events at random grid DOAs.
fn random_scene(seed: u64, snr_db: f64, duration: f64) -> Result<SimulatedScene> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut events = Vec::new();
    let mut t = rng.random_range(0.5..2.0);
    loop {
        let len = rng.random_range(1.0..4.0);
        if t + len > duration - 0.5 {
            break;
        }
        events.push(event(0, t, t + len, rng.random_range(0..324), snr_db));
        t += len + rng.random_range(1.0..4.0);
    }
    let script = SceneScript {
        duration_sec: duration,
        events,
        seed,
        noise_dbfs: None,
    };
    synthesize(&script, &ArrayGeometry::tetrahedron(0.042), &SimOptions::default())
}

/// Baseline detector on 20 dB single-class scenes with thresholds tuned on
/// separate validation scenes: segment F ≥ 0.9, median DOAE ≤ 10°.
fn c5_baseline() -> Result<Outcome> {
    let geometry = ArrayGeometry::tetrahedron(0.042);
    let mut config = RunConfig::default();
    let lattice = config.lattice.build()?;
    let table = CalibrationTable::analytic(&geometry, &config.grid, &lattice, FS)?;

    let mut validation: Vec<(ScoreTensor, Activity)> = Vec::new();
    for seed in 500..504 {
        let scene = random_scene(seed, 20.0, 30.0)?;
        let spec = compute_stft(&scene.signals, &config.stft)?;
        let (scores, _) = seld_core::detector::detect(&spec, &lattice, &config.detector_config())?;
        validation.push((scores, to_segments(&scene.reference.frames, config.segment_frames)));
    }
    let thresholds = tune_thresholds(&validation, &TuningOptions::default())?;
    config.thresholds = Some(thresholds.clone());

    let mut counts: Vec<SegmentCount> = Vec::new();
    let mut doaes = Vec::new();
    for seed in 550..558 {
        let scene = random_scene(seed, 20.0, 30.0)?;
        let (out, _, _) = run_audio(&scene.signals, &table, &config)?;
        let reference = to_segments(&scene.reference.frames, config.segment_frames);
        counts.extend(segment_counts(&out.timeline.segments, &reference)?);
        let report = evaluate(&out.timeline.segments, &reference, &out.doas, &scene.reference.doas)?;
        doaes.push(report.doae.unwrap_or(f64::INFINITY));
    }
    let f = f_score(&counts);
    let mut sorted = doaes.clone();
    sorted.sort_by(f64::total_cmp);
    let median = if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let tot = totals(&counts);
    Ok(outcome(
        f >= 0.9 && median <= 10.0,
        format!(
            "threshold {:.2}, F {f:.4} (limit 0.9, TP/FN/FP {}/{}/{}), median per-scene DOAE {median:.2}° (limit 10°) over {:?}",
            thresholds.0[0],
            tot.tp,
            tot.fn_,
            tot.fp,
            doaes.iter().map(|d| (d * 100.0).round() / 100.0).collect::<Vec<_>>()
        ),
    ))
}

fn grid_from(rows: &[&[u8]]) -> Activity {
    Array2::from_shape_fn((rows.len(), rows[0].len()), |(l, c)| rows[l][c] == 1)
}

fn random_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<Doa> {
    (0..n)
        .map(|_| Doa::new(rng.random_range(-180.0..180.0), rng.random_range(-90.0..90.0)))
        .collect()
}

/// Exhaustive minimum over injective maps of the smaller set into the larger.
fn brute_force_cost(est: &[Doa], reference: &[Doa]) -> f64 {
    fn go(small: &[Doa], large: &[Doa], used: &mut Vec<bool>, i: usize, swap: bool) -> f64 {
        if i == small.len() {
            return 0.0;
        }
        let mut best = f64::INFINITY;
        for j in 0..large.len() {
            if used[j] {
                continue;
            }
            used[j] = true;
            let c = if swap {
                angular_distance(large[j], small[i])
            } else {
                angular_distance(small[i], large[j])
            };
            best = best.min(c + go(small, large, used, i + 1, swap));
            used[j] = false;
        }
        best
    }
    if est.is_empty() || reference.is_empty() {
        return 0.0;
    }
    if est.len() <= reference.len() {
        go(est, reference, &mut vec![false; reference.len()], 0, false)
    } else {
        go(reference, est, &mut vec![false; est.len()], 0, true)
    }
}

fn c6_metrics() -> Result<Outcome> {
    let mut failures: Vec<String> = Vec::new();
    let mut check = |name: &str, ok: bool| {
        if !ok {
            failures.push(name.to_string());
        }
    };

    // Hand-enumerated fixtures.
    let c = segment_counts(&grid_from(&[&[1, 1, 1]]), &grid_from(&[&[1, 1, 1]]))?[0];
    check("perfect segment", (c.tp, c.fn_, c.fp, c.n) == (3, 0, 0, 3));
    let c = segment_counts(&grid_from(&[&[0]]), &grid_from(&[&[1]]))?[0];
    check("missed event", (c.fn_, c.fp, c.s, c.d, c.i) == (1, 0, 0, 1, 0));
    let c = segment_counts(&grid_from(&[&[1, 1]]), &grid_from(&[&[0, 0]]))?[0];
    check("two insertions", (c.fp, c.s, c.d, c.i) == (2, 0, 0, 2));
    let counts = segment_counts(&grid_from(&[&[0], &[1]]), &grid_from(&[&[1], &[1]]))?;
    check("two-segment run", error_rate(&counts)? == 0.5);
    // N = 2: segment 0 deletes, segment 1 inserts alongside a hit.
    let counts = segment_counts(&grid_from(&[&[0, 0], &[1, 1]]), &grid_from(&[&[1, 0], &[1, 0]]))?;
    let t = totals(&counts);
    check("deletion and insertion", (t.n, t.s, t.d, t.i) == (2, 0, 1, 1) && error_rate(&counts)? == 1.0);
    // Four segments, three classes:
    //   seg 0: TP 1, FN 1, FP 1 → S 1
    //   seg 1: FN 1           → D 1
    //   seg 2: FP 1           → I 1
    //   seg 3: TP 2
    let est = grid_from(&[&[1, 0, 1], &[0, 0, 0], &[0, 1, 0], &[0, 1, 1]]);
    let reference = grid_from(&[&[1, 1, 0], &[1, 0, 0], &[0, 0, 0], &[0, 1, 1]]);
    let counts = segment_counts(&est, &reference)?;
    let t = totals(&counts);
    check(
        "multi-segment totals",
        (t.tp, t.fn_, t.fp, t.n, t.s, t.d, t.i) == (3, 2, 2, 5, 1, 1, 1),
    );
    check("multi-segment ER", error_rate(&counts)? == 0.6);
    check("multi-segment F", f_score(&counts) == 0.6);
    let (a, b) = (Doa::new(0.0, 0.0), Doa::new(90.0, 0.0));
    check("angle identical", angular_distance(a, a) == 0.0);
    check("angle antipodal", (angular_distance(a, Doa::new(180.0, 0.0)) - 180.0).abs() < 1e-12);
    check("angle right", (angular_distance(a, b) - 90.0).abs() < 1e-12);
    check("swapped order", frame_assignment_cost(&[a, b], &[b, a]) == 0.0);

    // Hungarian against exhaustive search.
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let ne = rng.random_range(1..=4);
        let nr = rng.random_range(1..=4);
        let (e, r) = (random_set(&mut rng, ne), random_set(&mut rng, nr));
        worst = worst.max((frame_assignment_cost(&e, &r) - brute_force_cost(&e, &r)).abs());
    }
    check("Hungarian matches brute force", worst < 1e-9);

    // ER and F under the swapped FN/FP roles.
    let mut swaps_ok = 0;
    for _ in 0..100 {
        let (segs, classes) = (rng.random_range(1..12), rng.random_range(1..6));
        let est = Array2::from_shape_fn((segs, classes), |_| rng.random_bool(0.4));
        let reference = Array2::from_shape_fn((segs, classes), |_| rng.random_bool(0.4));
        let counts = segment_counts(&est, &reference)?;
        let swapped: Vec<SegmentCount> = counts
            .iter()
            .map(|c| SegmentCount::from_tp_fn_fp(c.tp, c.fp, c.fn_, c.n))
            .collect();
        let er_equal = match (error_rate(&counts), error_rate(&swapped)) {
            (Ok(a), Ok(b)) => a == b,
            (Err(_), Err(_)) => true,
            _ => false,
        };
        if er_equal && f_score(&counts) == f_score(&swapped) {
            swaps_ok += 1;
        }
    }
    check("role swap invariance", swaps_ok == 100);

    Ok(outcome(
        failures.is_empty(),
        if failures.is_empty() {
            format!("12 hand fixtures exact, Hungarian vs brute force max diff {worst:.1e} over 1000 frames, role swap invariant on 100/100 grids")
        } else {
            format!("failed: {}", failures.join(", "))
        },
    ))
}

/// One 60 s, 4-channel, 48 kHz scene: STFT, baseline detection, fusion and
/// the DOA scan within 10 s.
fn c8_performance() -> Result<Outcome> {
    let geometry = ArrayGeometry::tetrahedron(0.042);
    let scene = random_scene(808, 20.0, 60.0)?;
    let config = RunConfig::default();
    let table = CalibrationTable::analytic(&geometry, &config.grid, &config.lattice.build()?, FS)?;
    let start = Instant::now();
    let (out, _, _) = run_audio(&scene.signals, &table, &config)?;
    let secs = start.elapsed().as_secs_f64();
    Ok(outcome(
        secs < 10.0,
        format!(
            "{} frames, {} DOA scans in {secs:.2} s (limit 10 s)",
            out.timeline.num_frames(),
            out.doas.count()
        ),
    ))
}
