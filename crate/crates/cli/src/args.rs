use std::path::PathBuf;

use clap::builder::TypedValueParser as _;
use clap::{Args, Parser, Subcommand};
use monorange_core::graph::DEFAULT_HUBER_THRESHOLD;
use monorange_core::scale::{DEFAULT_ASSOCIATION_TOLERANCE, DEFAULT_MIN_SAMPLES};
use monorange_core::text::FULL_PRECISION;

/// Recover the metric scale of a monocular VO trajectory from ranges to a
/// single fixed anchor, then refine poses and map jointly.
#[derive(Debug, Parser)]
#[command(name = "monorange", version, about)]
pub struct Cli {
    /// Seed for the simulator; overrides the config file's seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Increase log output (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,

    /// Significant digits of floating-point values in output files.
    #[arg(long, global = true, default_value_t = FULL_PRECISION,
          value_parser = clap::value_parser!(u8).range(1..=17).map(usize::from))]
    pub precision: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic world, its measurements and a drifting VO estimate.
    Simulate(SimulateArgs),
    /// Select the initial global scale from range measurements.
    EstimateScale(EstimateScaleArgs),
    /// Scale the VO map and refine it over re-projection and range errors.
    Optimize(OptimizeArgs),
    /// Position RMSE of a trajectory against ground truth.
    Evaluate(EvaluateArgs),
    /// Write plot-ready CSV files.
    PlotData(PlotDataArgs),
    /// Locate the anchor from surveyed tag positions and distances.
    Trilaterate(TrilaterateArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulation config (TOML).
    pub config: PathBuf,
    /// Directory receiving the generated files.
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EstimateScaleArgs {
    /// Up-to-scale VO trajectory.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Range log.
    #[arg(long)]
    pub ranges: PathBuf,
    /// Anchor position and tag lever arm.
    #[arg(long)]
    pub extrinsics: PathBuf,
    /// Destination of the scale estimate.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Minimum number of usable ranges.
    #[arg(long, default_value_t = DEFAULT_MIN_SAMPLES)]
    pub min_samples: usize,
    /// Maximum gap between a range and its keyframe, seconds.
    #[arg(long, default_value_t = DEFAULT_ASSOCIATION_TOLERANCE)]
    pub tolerance: f64,
    /// Drop candidates farther than K scaled MADs from their branch median.
    #[arg(long, value_name = "K")]
    pub mad: Option<f64>,
    /// Keep a negative selected scale instead of aborting.
    #[arg(long)]
    pub allow_negative_scale: bool,
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Up-to-scale VO trajectory.
    #[arg(long)]
    pub trajectory: PathBuf,
    /// Camera intrinsics, VO map points and pixel observations.
    #[arg(long)]
    pub observations: PathBuf,
    #[arg(long)]
    pub ranges: PathBuf,
    #[arg(long)]
    pub extrinsics: PathBuf,
    /// Scale estimate written by `estimate-scale`.
    #[arg(long)]
    pub scale: PathBuf,
    /// Directory receiving the refined trajectory, map and optimizer log.
    #[arg(short, long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub initial_lambda: f64,
    /// Use a Huber loss on range residuals.
    #[arg(long)]
    pub robust_range: bool,
    /// Huber threshold on whitened range residuals.
    #[arg(long, default_value_t = DEFAULT_HUBER_THRESHOLD, requires = "robust_range")]
    pub huber_threshold: f64,
    /// Solve the normal equations densely instead of by Schur complement.
    #[arg(long)]
    pub dense: bool,
    /// Maximum gap between a range and its keyframe, seconds.
    #[arg(long, default_value_t = DEFAULT_ASSOCIATION_TOLERANCE)]
    pub tolerance: f64,
    /// Also write the scaled, unrefined factor graph to this file.
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Maximum timestamp gap for pairing poses, seconds.
    #[arg(long, default_value_t = 0.01)]
    pub tolerance: f64,
    /// Rigidly align the estimate to ground truth first (no scale).
    #[arg(long)]
    pub align: bool,
    /// Also write the report to this file.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PlotDataArgs {
    #[arg(long)]
    pub ground_truth: PathBuf,
    /// Up-to-scale VO trajectory.
    #[arg(long)]
    pub vo: PathBuf,
    #[arg(long)]
    pub ranges: PathBuf,
    #[arg(long)]
    pub extrinsics: PathBuf,
    /// Optimizer log written by `optimize`.
    #[arg(long)]
    pub lm_log: PathBuf,
    /// Scale estimate; adds the VO trajectory scaled by it.
    #[arg(long)]
    pub scale: Option<PathBuf>,
    /// Refined trajectory.
    #[arg(long)]
    pub refined: Option<PathBuf>,
    /// Maximum gap between a range and its keyframe, seconds.
    #[arg(long, default_value_t = DEFAULT_ASSOCIATION_TOLERANCE)]
    pub tolerance: f64,
    #[arg(short, long)]
    pub out_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrilaterateArgs {
    /// Survey file with `x y z distance` lines.
    pub survey: PathBuf,
    /// Write an extrinsics file with the estimated anchor.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Tag lever arm recorded in the extrinsics output.
    #[arg(long, num_args = 3, value_names = ["X", "Y", "Z"], allow_negative_numbers = true)]
    pub lever_arm: Option<Vec<f64>>,
}
