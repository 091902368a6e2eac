//! `evsub`: batch subsampling, calibration and reporting for event-camera
//! recordings.
//!
//! Exit status is 0 on success, 1 for data errors (unreadable or malformed
//! input, infeasible calibration targets) and 2 for usage errors.

mod commands;
mod files;
mod params;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::params::MethodParams;
use crate::report::ReportFormat;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        CliError::Data(e)
    }
}

impl From<evsub::Error> for CliError {
    fn from(e: evsub::Error) -> Self {
        match e {
            evsub::Error::InvalidConfig(msg) => CliError::Usage(msg),
            other => CliError::Data(other.into()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "evsub", version, about = "Event-camera subsampling toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// Global seed for every randomized step
    #[arg(long, global = true, env = "EVSUB_SEED")]
    pub seed: Option<u64>,

    /// Worker threads for per-file work (default: all cores)
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Report format
    #[arg(long, global = true, value_enum, default_value_t = ReportFormat::Csv)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EventFormat {
    Evs1,
    Csv,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Subsample event files with one method
    Subsample(SubsampleArgs),
    /// Find the free parameter that hits a target mean event count
    Calibrate(CalibrateArgs),
    /// Per-file event statistics
    Stats(StatsArgs),
    /// Normalized area under accuracy-vs-log10(count) curves
    Nauc(NaucArgs),
    /// Memory and per-event MAC cost of a method
    Cost(CostArgs),
    /// Kept counts for every spatial offset or temporal phase
    SweepOffsets(SweepArgs),
    /// Generate a labeled synthetic scene
    Synth(SynthArgs),
    /// Histogram of per-file event counts, optionally after subsampling
    Histogram(HistogramArgs),
    /// Export a file as a (2B, H, W) voxel grid in .npy format
    Voxel(VoxelArgs),
}

#[derive(Args, Debug)]
pub struct SubsampleArgs {
    /// Input files or directories
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Output file for a single input, otherwise an output directory
    #[arg(short, long)]
    pub output: PathBuf,
    /// Output event format (default: from the output name or the input)
    #[arg(long, value_enum)]
    pub out_format: Option<EventFormat>,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    /// Dataset files or directories
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Target mean kept events per file
    #[arg(long)]
    pub target: f64,
    /// Relative tolerance on the achieved mean
    #[arg(long, default_value_t = 0.02)]
    pub rel_tol: f64,
    #[arg(long, default_value_t = 40)]
    pub max_iters: usize,
    /// Lower end of the search interval
    #[arg(long, allow_hyphen_values = true)]
    pub lo: Option<f64>,
    /// Upper end of the search interval
    #[arg(long, allow_hyphen_values = true)]
    pub hi: Option<f64>,
    /// Write the config fragment here instead of stdout
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct NaucArgs {
    /// CSV files with mean_count,accuracy rows
    #[arg(required = true)]
    pub curves: Vec<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CostArgs {
    #[arg(long, default_value_t = 240)]
    pub width: u16,
    #[arg(long, default_value_t = 180)]
    pub height: u16,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    pub input: PathBuf,
    /// Horizontal period
    #[arg(long)]
    pub rx: Option<u16>,
    /// Vertical period
    #[arg(long)]
    pub ry: Option<u16>,
    /// Temporal window in milliseconds (sweeps phases instead)
    #[arg(long)]
    pub wt_ms: Option<f64>,
    /// Temporal ratio
    #[arg(long)]
    pub rt: Option<u64>,
    /// Also write every offset's output stream into this directory
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output event file
    #[arg(short, long)]
    pub output: PathBuf,
    /// Label sidecar (default: <output stem>.labels.csv)
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long, default_value_t = 64)]
    pub width: u16,
    #[arg(long, default_value_t = 48)]
    pub height: u16,
    #[arg(long, default_value_t = 1000.0)]
    pub duration_ms: f64,
    /// Uniform background events per second
    #[arg(long, default_value_t = 0.0)]
    pub noise_rate: f64,
    /// Probability of a positive event
    #[arg(long, default_value_t = 0.5)]
    pub pos_fraction: f64,
    /// Moving circle: X0,Y0,X1,Y1,RADIUS,RATE (rate in events/s)
    #[arg(long)]
    pub dot: Vec<String>,
    /// Moving L corner: X0,Y0,X1,Y1,ARM,RATE
    #[arg(long)]
    pub corner: Vec<String>,
    /// Moving segment: X0,Y0,X1,Y1,LENGTH,ANGLE_RAD,RATE
    #[arg(long)]
    pub edge: Vec<String>,
}

#[derive(Args, Debug)]
pub struct HistogramArgs {
    #[arg(required = true)]
    pub inputs: Vec<PathBuf>,
    /// Strictly increasing bin edges, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub edges: Vec<f64>,
    #[command(flatten)]
    pub params: MethodParams,
}

#[derive(Args, Debug)]
pub struct VoxelArgs {
    pub input: PathBuf,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Temporal bins per polarity
    #[arg(long, default_value_t = 9)]
    pub bins: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Data(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
