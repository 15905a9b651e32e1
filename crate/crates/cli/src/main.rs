use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod settings;

use settings::ConfigError;

/// Pairwise-microphone sound event detection and localisation.
#[derive(Debug, Parser)]
#[command(name = "seld", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

/// Options accepted by every subcommand. Flags override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Common {
    /// Run configuration (JSON). Missing fields take their defaults.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Array geometry (JSON); defaults to a 4.2 cm tetrahedron.
    #[arg(long, global = true, value_name = "PATH")]
    pub geometry: Option<PathBuf>,
    /// Calibration table (JSON) used for DOA estimation.
    #[arg(long, global = true, value_name = "PATH")]
    pub calibration: Option<PathBuf>,
    /// Where scores and TDOAs come from.
    #[arg(long, global = true, value_enum)]
    pub detector: Option<DetectorArg>,
    /// Random seed for simulation.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR", default_value = "seld-out")]
    pub out: PathBuf,
    /// DOA kernel width in samples.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Minimum event duration in frames.
    #[arg(long, global = true)]
    pub gamma: Option<usize>,
    /// Largest TDOA on the lattice, in samples.
    #[arg(long = "tau-max", global = true)]
    pub tau_max: Option<f64>,
    /// Number of TDOA lattice points (odd).
    #[arg(long = "grid-g", global = true)]
    pub grid_g: Option<usize>,
    /// Frames per evaluation segment.
    #[arg(long = "segment-frames", global = true)]
    pub segment_frames: Option<usize>,
    /// Per-class thresholds (JSON array), e.g. from `tune-thresholds`.
    #[arg(long, global = true, value_name = "PATH")]
    pub thresholds: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DetectorArg {
    Baseline,
    Tensors,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Render a scripted scene: audio, labels and oracle tensors.
    Simulate {
        /// Scene script (JSON).
        #[arg(long, value_name = "PATH")]
        script: PathBuf,
    },
    /// Build a calibration table from recordings or from the geometry.
    Calibrate {
        /// JSON list of {"audio": PATH, "labels": PATH} recordings.
        #[arg(long, value_name = "PATH", required_unless_present = "analytic")]
        manifest: Option<PathBuf>,
        /// Compute the table from the free-field model of the geometry.
        #[arg(long, conflicts_with = "manifest")]
        analytic: bool,
    },
    /// Detect events and estimate their DOAs.
    Detect {
        /// Multichannel WAV input for the baseline detector.
        #[arg(long, value_name = "PATH")]
        audio: Option<PathBuf>,
        /// Score tensor header for `--detector tensors`.
        #[arg(long, value_name = "PATH")]
        scores: Option<PathBuf>,
        /// TDOA tensor header for `--detector tensors`.
        #[arg(long, value_name = "PATH")]
        tdoas: Option<PathBuf>,
    },
    /// Score a results file against reference labels.
    Eval {
        /// Results CSV written by `detect`.
        #[arg(long, value_name = "PATH")]
        results: PathBuf,
        /// Reference label CSV.
        #[arg(long, value_name = "PATH")]
        labels: PathBuf,
        /// Number of frames; by default it covers both files.
        #[arg(long, conflicts_with = "audio")]
        num_frames: Option<usize>,
        /// Take the number of frames from this recording.
        #[arg(long, value_name = "PATH")]
        audio: Option<PathBuf>,
    },
    /// Pick per-class thresholds that maximise segment F on validation data.
    TuneThresholds {
        /// JSON list of {"labels": PATH} plus "scores" (tensor header) or "audio".
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate { script } => commands::simulate(&cli.common, &script),
        Command::Calibrate { manifest, analytic } => {
            commands::calibrate(&cli.common, manifest.as_deref(), analytic)
        }
        Command::Detect {
            audio,
            scores,
            tdoas,
        } => commands::detect(&cli.common, audio.as_deref(), scores.as_deref(), tdoas.as_deref()),
        Command::Eval {
            results,
            labels,
            num_frames,
            audio,
        } => commands::eval(&cli.common, &results, &labels, num_frames, audio.as_deref()),
        Command::TuneThresholds { manifest } => commands::tune_thresholds(&cli.common, &manifest),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 2 for configuration and validation errors, 3 for runtime and data errors.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if cause.is::<ConfigError>() {
            return 2;
        }
        if let Some(core) = cause.downcast_ref::<seld_core::Error>() {
            return if core.is_validation() { 2 } else { 3 };
        }
    }
    3
}
