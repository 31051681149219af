//! Batch entry points for the `vlfuse` binary.
//!
//! Each `cmd_*` function writes its text tables to `stdout`, logs to the
//! error stream, and returns the process exit code: 0 on success,
//! [`EXIT_CONFIG`] for configuration problems (bad or missing config,
//! missing input files, invalid parameters) and [`EXIT_DATA`] for
//! malformed or unusable input data.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use vlfuse::detection_io::DetectionSource;

pub use commands::{cmd_calibrate, cmd_eval3d, cmd_eval_pr, cmd_run, cmd_simulate};

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;

/// Output file names.
pub const TRACKS_2D_FILE: &str = "tracks_2d.txt";
pub const TRACKS_3D_FILE: &str = "tracks_3d.txt";
pub const PR_CSV_FILE: &str = "pr.csv";
pub const ERRORS_CSV_FILE: &str = "errors.csv";
pub const CALIBRATION_RESULT_FILE: &str = "calibration_result.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Data(_) => EXIT_DATA,
        }
    }
}

#[derive(Debug, Clone, Parser)]
#[command(name = "vlfuse", version, about = "Camera-LiDAR object tracking and evaluation")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Flags shared by every subcommand; they override `--config` values.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalArgs {
    /// TOML config file (flags take precedence over its values)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Detection source: selects tracker parameters and table labels
    #[arg(long, global = true, value_parser = parse_source)]
    pub source: Option<DetectionSource>,
    /// Report the fused LiDAR point instead of the filtered 3D position
    #[arg(long = "raw-3d", global = true)]
    pub raw_3d: bool,
    /// Simulation seed
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Omit the generation-time header from outputs
    #[arg(long = "no-timestamp", global = true)]
    pub no_timestamp: bool,
}

fn parse_source(s: &str) -> Result<DetectionSource, String> {
    s.parse()
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Track detections in 2D, fuse LiDAR points and track in 3D
    Run(RunArgs),
    /// Precision/recall of a candidate detector against a reference detector
    EvalPr(EvalPrArgs),
    /// 3D position error of tracks against motion capture
    #[command(name = "eval-3d")]
    Eval3d(Eval3dArgs),
    /// Generate a synthetic scene
    Simulate(SimulateArgs),
    /// Solve an extrinsic calibration
    Calibrate(CalibrateArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub detections: Option<PathBuf>,
    #[arg(long)]
    pub scans: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Camera frame period in seconds (default: inferred)
    #[arg(long)]
    pub frame_period: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableKind {
    Iou,
    Conf,
    Both,
}

#[derive(Debug, Clone, Default, Args)]
pub struct EvalPrArgs {
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long)]
    pub candidate: Option<PathBuf>,
    /// Render tables from a previously written PR CSV instead of computing
    #[arg(long)]
    pub from_csv: Option<PathBuf>,
    /// Which tables to print [default: both]
    #[arg(long, value_enum)]
    pub table: Option<TableKind>,
    /// Confidence threshold of the IoU-sweep table [default: 0.3]
    #[arg(long)]
    pub iou_table_confidence: Option<f64>,
    /// IoU threshold of the confidence-sweep table [default: 0.5]
    #[arg(long)]
    pub confidence_table_iou: Option<f64>,
    /// Largest timestamp difference of paired frames, seconds [default: 0.025]
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Skip the SORT-tracked row group
    #[arg(long)]
    pub no_tracking: bool,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Eval3dArgs {
    /// 3D track file; repeat for several row groups
    #[arg(long)]
    pub tracks: Vec<PathBuf>,
    /// Row-group label for each `--tracks`, in order
    #[arg(long)]
    pub group: Vec<String>,
    #[arg(long)]
    pub poses: Option<PathBuf>,
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    /// Render the table from a previously written error CSV
    #[arg(long)]
    pub from_csv: Option<PathBuf>,
    /// Nearest-neighbour association gate, metres [default: 2]
    #[arg(long)]
    pub gate: Option<f64>,
    /// Class-to-subject mapping, `CLASS=SUBJECT` (e.g. `0=helmet_1`)
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimulateArgs {
    /// Scene description (default: one person walking across the view)
    #[arg(long)]
    pub scene: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CalibrationMode {
    /// Camera to rig markers from motion pairs
    HandEye,
    /// LiDAR to camera from plane observations
    PointToPlane,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CalibrateArgs {
    #[arg(long, value_enum)]
    pub mode: Option<CalibrationMode>,
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Existing calibration file to update with the solved transform
    #[arg(long)]
    pub calibration: Option<PathBuf>,
}

/// Runs a parsed command line.
pub fn dispatch(cli: &Cli, stdout: &mut dyn Write) -> i32 {
    match &cli.command {
        Command::Run(a) => cmd_run(&cli.global, a, stdout),
        Command::EvalPr(a) => cmd_eval_pr(&cli.global, a, stdout),
        Command::Eval3d(a) => cmd_eval3d(&cli.global, a, stdout),
        Command::Simulate(a) => cmd_simulate(&cli.global, a, stdout),
        Command::Calibrate(a) => cmd_calibrate(&cli.global, a, stdout),
    }
}

/// Parses `args` (program name first) and runs the command. Usage errors
/// exit with [`EXIT_CONFIG`].
pub fn run_from_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => dispatch(&cli, stdout),
        Err(e) => {
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(stderr, "{text}");
                EXIT_CONFIG
            } else {
                // --help and --version
                let _ = write!(stdout, "{text}");
                0
            }
        }
    }
}
