//! `weldqa`: dataset preparation, augmentation, evaluation and accept/reject
//! decisions for weld-seam pore inspection.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use weldqa_core::qa::SizeMeasure;

use config::{FileConfig, RunConfig};

/// A missing or inconsistent argument; reported like a clap usage error.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[derive(Debug, Parser)]
#[command(name = "weldqa", version, about = "Weld-seam pore inspection toolkit")]
pub struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,

    /// Master seed for every random choice (default 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads (default: available cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    /// Output directory.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count objects per size bucket (small/medium/large) for each dataset.
    Stats(StatsArgs),
    /// Crop, convert to 3 channels and stretch contrast.
    Prep(PrepArgs),
    /// Write a dataset scaled ×k by seeded two-op augmentation.
    Augment(AugmentArgs),
    /// Partition a dataset into train/val/test.
    Split(SplitArgs),
    /// AP/AR of a detections file against a dataset.
    Eval(EvalArgs),
    /// Tabulate several evaluation reports side by side.
    Compare(CompareArgs),
    /// Accept/reject verdicts from calibrated pore sizes.
    Assess(AssessArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// VOC dataset directory, optionally prefixed `NAME=`. Repeatable.
    #[arg(long, required = true, value_name = "[NAME=]PATH")]
    pub dataset: Vec<String>,
}

#[derive(Debug, Args)]
pub struct PrepArgs {
    /// Source VOC dataset directory.
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,

    /// Crop window `x,y,w,h` (default: 300×300 centred on the top edge).
    #[arg(long, value_name = "X,Y,W,H", value_parser = parse_crop)]
    pub crop: Option<[u32; 4]>,

    /// Skip the contrast stretch.
    #[arg(long)]
    pub no_enhance: bool,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    /// Source VOC dataset directory.
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,

    /// Scale factor k: the output holds k images per source image, the
    /// original included.
    #[arg(long, value_name = "K")]
    pub factor: Option<u32>,
}

#[derive(Debug, Args)]
pub struct SplitArgs {
    /// VOC dataset directory.
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,

    /// Train, val and test fractions summing to 1.
    #[arg(long, value_name = "A,B,C", value_parser = parse_ratios)]
    pub ratios: Option<[f64; 3]>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Ground-truth VOC dataset directory.
    #[arg(long, value_name = "PATH")]
    pub dataset: PathBuf,

    /// Detections file (one JSON record per line).
    #[arg(long, value_name = "PATH")]
    pub detections: PathBuf,

    /// Comma-separated IoU thresholds (default 0.50,0.55,...,0.95).
    #[arg(long, value_name = "T1,T2,...", value_parser = parse_f64_list)]
    pub iou_list: Option<FloatList>,

    /// Bucket boundaries as areas in px²: `small_max,large_min`
    /// (default 1024,4096).
    #[arg(long, value_name = "S,L", value_parser = parse_buckets)]
    pub buckets: Option<[f64; 2]>,

    /// Run name written into the CSV report.
    #[arg(long, default_value = "run")]
    pub name: String,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// Evaluation reports (eval.json), optionally prefixed `NAME=`.
    #[arg(long, required = true, num_args = 1.., value_name = "[NAME=]PATH")]
    pub reports: Vec<String>,
}

#[derive(Debug, Args)]
pub struct AssessArgs {
    /// Detections file (one JSON record per line).
    #[arg(long, value_name = "PATH")]
    pub detections: PathBuf,

    /// Largest acceptable pore size in millimetres.
    #[arg(long, value_name = "MM")]
    pub threshold_mm: Option<f64>,

    /// Ignore detections scoring below this (default 0).
    #[arg(long)]
    pub min_score: Option<f64>,

    /// Calibration in pixels per millimetre (default 40).
    #[arg(long)]
    pub px_per_mm: Option<f64>,

    /// Box extent taken as pore size.
    #[arg(long, value_parser = parse_measure)]
    pub measure: Option<SizeMeasure>,

    /// Dataset whose images get a verdict even without detections.
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
}

fn parse_list<T: std::str::FromStr, const N: usize>(s: &str) -> Result<[T; N], String> {
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse::<T>().map_err(|_| format!("bad number {p:?}")))
        .collect::<Result<_, _>>()?;
    let n = parts.len();
    parts
        .try_into()
        .map_err(|_| format!("expected {N} comma-separated values, got {n}"))
}

fn parse_crop(s: &str) -> Result<[u32; 4], String> {
    parse_list(s)
}

fn parse_ratios(s: &str) -> Result<[f64; 3], String> {
    parse_list(s)
}

fn parse_buckets(s: &str) -> Result<[f64; 2], String> {
    parse_list(s)
}

/// Comma-separated numbers given as a single flag value.
#[derive(Debug, Clone)]
pub struct FloatList(pub Vec<f64>);

fn parse_f64_list(s: &str) -> Result<FloatList, String> {
    s.split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("bad number {p:?}")))
        .collect::<Result<_, _>>()
        .map(FloatList)
}

fn parse_measure(s: &str) -> Result<SizeMeasure, String> {
    s.parse().map_err(|e: weldqa_core::Error| e.to_string())
}

fn run(cli: Cli) -> Result<()> {
    let file = match &cli.config {
        Some(p) => FileConfig::load(p)?,
        None => FileConfig::default(),
    };
    let cfg = RunConfig::resolve(file, &cli)?;
    log::debug!("resolved configuration: {cfg:?}");
    commands::dispatch(&cli.command, &cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
