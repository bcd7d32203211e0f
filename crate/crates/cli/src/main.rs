//! `densreg` command-line harness.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use densreg::Error;

#[derive(Debug, Parser)]
#[command(name = "densreg", version, about = "Density-sensitive semisupervised kernel regression")]
pub struct Cli {
    /// TOML configuration; command-line flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Base seed for sampling and splitting.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Directory for generated files.
    #[arg(long, global = true, env = "DENSREG_OUTPUT_DIR", default_value = ".")]
    pub output_dir: PathBuf,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic instance: labeled.csv, unlabeled.csv, instance.json.
    Gen(GenArgs),
    /// Fit the estimator at a fixed (alpha, h) and predict at query points.
    Fit(FitArgs),
    /// Select (alpha, h) by hold-out validation.
    Cv(CvArgs),
    /// Run the configured experiment grid and write a results CSV.
    Sweep(SweepArgs),
    /// Pairwise density-sensitive distances between points.
    Dist(DistArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Generator name: uniform_components, lower_bound or smooth.
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FallbackArg {
    LabeledMean,
    Undefined,
}

/// Density-estimate and graph options shared by fit, cv and dist.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub unlabeled: PathBuf,
    /// Grid cells per axis.
    #[arg(long)]
    pub resolution: Option<usize>,
    /// Grid padding around the data, as a fraction of its extent.
    #[arg(long)]
    pub pad_fraction: Option<f64>,
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Overrides the scheduled KDE bandwidth.
    #[arg(long, value_parser = positive)]
    pub kde_bandwidth: Option<f64>,
    /// Graph connectivity: 4, 8 or 16.
    #[arg(long)]
    pub connectivity: Option<String>,
    /// Snap queries off the interior to the nearest interior node within this radius.
    #[arg(long, value_parser = positive)]
    pub snap_radius: Option<f64>,
    /// Write the density estimate and masks as JSON.
    #[arg(long)]
    pub emit_grid: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long, value_parser = positive, allow_negative_numbers = true)]
    pub h: f64,
    /// Query points (x1..xd); defaults to the labeled points.
    #[arg(long)]
    pub queries: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub fallback: Option<FallbackArg>,
    /// Clip predictions to [-M, M].
    #[arg(long, value_parser = positive)]
    pub truncate: Option<f64>,
    /// Output file (stdout if absent).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[arg(long)]
    pub labeled: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Candidate alphas (comma separated); must include 0.
    #[arg(long, value_delimiter = ',', value_parser = non_negative, allow_negative_numbers = true)]
    pub alphas: Option<Vec<f64>>,
    /// Candidate bandwidths (comma separated); automatic per alpha if absent.
    #[arg(long, value_delimiter = ',', value_parser = positive, allow_negative_numbers = true)]
    pub bandwidths: Option<Vec<f64>>,
    #[arg(long)]
    pub bandwidth_count: Option<usize>,
    #[arg(long)]
    pub split_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub fallback: Option<FallbackArg>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub generator: Option<String>,
    #[arg(long, value_delimiter = ',')]
    pub n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub m: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Methods (comma separated): ss_cv, ss_fixed, euclidean_cv.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    #[arg(long)]
    pub n_mc: Option<usize>,
    /// Results CSV; defaults to results.csv in the output directory.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DistArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Points (x1..xd) whose pairwise distances are reported.
    #[arg(long)]
    pub points: PathBuf,
    #[arg(long, value_parser = non_negative, allow_negative_numbers = true)]
    pub alpha: f64,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("`{s}` is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("`{s}` is not finite"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be >= 0, got {v}"))
    }
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {v}"))
    }
}

/// 2 usage/configuration, 3 data validation, 4 runtime.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        Error::Parse { .. }
        | Error::Validation(_)
        | Error::Schema(_)
        | Error::Domain(_)
        | Error::Geometry(_)
        | Error::Split(_) => 3,
        _ => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
