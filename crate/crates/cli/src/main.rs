mod commands;

use std::ops::RangeInclusive;
use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use meterfill::backfill::{BackfillOptions, ScaleMode};
use meterfill::clustering::{Truncation, DEFAULT_K, DEFAULT_RESTARTS, DEFAULT_SEED};
use meterfill::evaluation::MAX_REMOVED_MONTHS;
use meterfill::ingest::AnalysisWindow;
use meterfill::tariff::Locality;

#[derive(Parser, Debug)]
#[command(name = "meterfill", version, about = "Complete a year of smart-meter data and compare tariffs")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    #[command(flatten)]
    config: Config,
}

/// Settings shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Config {
    /// First day of the 12-month analysis window (YYYY-MM-01).
    #[arg(long, global = true, default_value = "2023-05-01", value_parser = parse_window)]
    pub window_start: AnalysisWindow,

    #[arg(long, global = true, default_value = "urban")]
    pub locality: Locality,

    /// Number of profiles when no --k-range is given.
    #[arg(long, global = true, default_value_t = DEFAULT_K)]
    pub k: usize,

    /// Fit every k in the range and pick one by silhouette, e.g. 2..8.
    #[arg(long, global = true, value_parser = parse_k_range)]
    pub k_range: Option<RangeInclusive<usize>>,

    #[arg(long, global = true, default_value_t = DEFAULT_SEED)]
    pub seed: u64,

    #[arg(long, global = true, default_value_t = DEFAULT_RESTARTS)]
    pub restarts: usize,

    /// Profile model written by `fit`.
    #[arg(long, global = true)]
    pub model: Option<PathBuf>,

    /// Tariff plan CSV.
    #[arg(long, global = true)]
    pub tariffs: Option<PathBuf>,

    /// Output directory, created if missing.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse HDF exports into readings.csv and quality.csv.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Aggregate readings.csv into monthly slot usage (features.csv).
    Features { readings: PathBuf },
    /// Cluster fully observed users into profiles (model.json, elbow.csv).
    Fit {
        #[arg(required = true)]
        features: Vec<PathBuf>,
    },
    /// Match every user to its nearest profile (assignments.csv).
    Assign { features: PathBuf },
    /// Fill missing months from the nearest profile (completed.csv).
    Backfill {
        features: PathBuf,
        #[command(flatten)]
        method: Method,
    },
    /// Hide the oldest months of full users and score the back-fill (holdout.csv).
    Evaluate {
        features: PathBuf,
        #[arg(long, default_value_t = MAX_REMOVED_MONTHS)]
        max_removed: usize,
        #[command(flatten)]
        method: Method,
    },
    /// Rank tariff plans for every completed user (bills_<mprn>.csv).
    Bill { completed: PathBuf },
    /// Ingest, back-fill and bill in one go.
    Report {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[command(flatten)]
        method: Method,
    },
}

#[derive(Args, Debug, Clone, Copy)]
pub struct Method {
    #[arg(long, value_enum, default_value_t = Scale::Joint)]
    scale: Scale,
    #[arg(long, value_enum, default_value_t = Trunc::Renormalize)]
    truncation: Trunc,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Scale {
    Joint,
    PerSlot,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Trunc {
    Renormalize,
    TruncateOnly,
}

impl From<Method> for BackfillOptions {
    fn from(m: Method) -> Self {
        BackfillOptions {
            scale: match m.scale {
                Scale::Joint => ScaleMode::Joint,
                Scale::PerSlot => ScaleMode::PerSlot,
            },
            truncation: match m.truncation {
                Trunc::Renormalize => Truncation::Renormalize,
                Trunc::TruncateOnly => Truncation::TruncateOnly,
            },
        }
    }
}

fn parse_window(s: &str) -> Result<AnalysisWindow, String> {
    let date = NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|e| format!("{s:?}: {e}"))?;
    AnalysisWindow::new(date).map_err(|e| e.to_string())
}

/// Accepts `a..b`, `a..=b` or `a-b`, all inclusive.
fn parse_k_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let (a, b) = s
        .split_once("..=")
        .or_else(|| s.split_once(".."))
        .or_else(|| s.split_once('-'))
        .ok_or_else(|| format!("expected a range like 2..8, got {s:?}"))?;
    let a: usize = a.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    let b: usize = b.trim().parse().map_err(|e| format!("{s:?}: {e}"))?;
    if a > b {
        return Err(format!("empty range {s:?}"));
    }
    Ok(a..=b)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = &cli.config;
    let result = match &cli.command {
        Command::Ingest { files } => commands::ingest(files, cfg),
        Command::Features { readings } => commands::features(readings, cfg),
        Command::Fit { features } => commands::fit(features, cfg),
        Command::Assign { features } => commands::assign(features, cfg),
        Command::Backfill { features, method } => commands::backfill(features, (*method).into(), cfg),
        Command::Evaluate { features, max_removed, method } => {
            commands::evaluate(features, *max_removed, (*method).into(), cfg)
        }
        Command::Bill { completed } => commands::bill(completed, cfg),
        Command::Report { files, method } => commands::report(files, (*method).into(), cfg),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
