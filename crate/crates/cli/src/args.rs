//! Command-line surface. Every subcommand is also serde-serializable so a
//! full run configuration can be loaded from JSON (`--config run.json`) and
//! echoed verbatim into output headers.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use roadrisk::data::ColumnMap;
use serde::{Deserialize, Serialize};

#[derive(Debug, Parser)]
#[command(
    name = "roadrisk",
    version,
    about = "Crash-risk estimation and method comparison on linearly referenced road networks"
)]
pub struct Cli {
    /// Load the whole run configuration from a JSON file instead of flags.
    #[arg(long, value_name = "FILE", global = true)]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Clone, Subcommand, Serialize, Deserialize)]
#[serde(tag = "subcommand", rename_all = "snake_case")]
pub enum Command {
    /// Estimate expected crash counts with adaptive-bandwidth smoothing.
    Estimate(EstimateArgs),
    /// Compare count, EB, and smoothed estimates across two periods.
    Evaluate(EvaluateArgs),
    /// Seeded synthetic experiments against a known risk profile.
    Simulate(SimulateArgs),
    /// Fixed-factor aggregation and fixed-window moving averages.
    Aggregate(AggregateArgs),
}

/// Header names for the five required columns.
#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct ColumnArgs {
    #[arg(long, default_value = "route_id")]
    #[serde(default = "defaults::route_id")]
    pub col_route_id: String,
    #[arg(long, default_value = "direction")]
    #[serde(default = "defaults::direction")]
    pub col_direction: String,
    #[arg(long, default_value = "milepost")]
    #[serde(default = "defaults::milepost")]
    pub col_milepost: String,
    #[arg(long, default_value = "count")]
    #[serde(default = "defaults::count")]
    pub col_count: String,
    #[arg(long, default_value = "period")]
    #[serde(default = "defaults::period")]
    pub col_period: String,
}

impl ColumnArgs {
    pub fn to_map(&self) -> ColumnMap {
        ColumnMap {
            route_id: self.col_route_id.clone(),
            direction: self.col_direction.clone(),
            milepost: self.col_milepost.clone(),
            count: self.col_count.clone(),
            period: self.col_period.clone(),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EstimateArgs {
    /// Crash-count CSV.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// Decomposition depth override (default: max for each series).
    #[arg(long)]
    #[serde(default)]
    pub levels: Option<usize>,
    /// Threshold-selection grid resolution.
    #[arg(long, default_value_t = 40)]
    #[serde(default = "defaults::grid_size")]
    pub grid_size: usize,
    /// Fill whole-section milepost gaps with zero counts.
    #[arg(long)]
    #[serde(default)]
    pub fill_gaps_zero: bool,
    /// Test hook: skip the nonnegative clamp during reconstruction so total
    /// mass is conserved exactly.
    #[arg(long)]
    #[serde(default)]
    pub disable_clamp: bool,
    /// Also write the per-level (threshold, PURE) selection profiles.
    #[arg(long)]
    #[serde(default)]
    pub pure_profiles: bool,
    /// Also dump the per-level sums/differences matrices.
    #[arg(long)]
    #[serde(default)]
    pub dump_decomposition: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Ordered period pair, e.g. --periods 2014,2015.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub periods: Vec<String>,
    /// Identification fractions.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.025, 0.05, 0.10])]
    #[serde(default = "defaults::alphas")]
    pub alphas: Vec<f64>,
    /// Covariates for the EB baseline (column names; `route_id` and
    /// `direction` enter as one-hot factors). EB is skipped when empty.
    #[arg(long, value_delimiter = ',')]
    #[serde(default)]
    pub eb_covariates: Vec<String>,
    /// Average the report over every consecutive period pair instead of a
    /// single pair.
    #[arg(long)]
    #[serde(default)]
    pub average_pairs: bool,
    #[arg(long, default_value_t = 40)]
    #[serde(default = "defaults::grid_size")]
    pub grid_size: usize,
    #[arg(long)]
    #[serde(default)]
    pub levels: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub fill_gaps_zero: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub columns: ColumnArgs,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Built-in profile name (`figure2`, `pure-check`).
    #[arg(long)]
    #[serde(default)]
    pub preset: Option<String>,
    /// Profile JSON file (a list of segment specs).
    #[arg(long, value_name = "FILE")]
    #[serde(default)]
    pub profile: Option<PathBuf>,
    #[arg(long, default_value_t = 42)]
    #[serde(default = "defaults::seed")]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    #[serde(default = "defaults::replicates")]
    pub replicates: usize,
    /// Run the PURE-vs-true-MSE unbiasedness experiment instead of the
    /// per-method error comparison.
    #[arg(long)]
    #[serde(default)]
    pub pure_check: bool,
    /// Grid points for the unbiasedness experiment.
    #[arg(long, default_value_t = 10)]
    #[serde(default = "defaults::pure_grid_points")]
    pub pure_grid_points: usize,
    /// Window (in sections) of the fixed-bandwidth comparator.
    #[arg(long, default_value_t = 32)]
    #[serde(default = "defaults::ma_window")]
    pub ma_window: usize,
    #[arg(long, default_value_t = 40)]
    #[serde(default = "defaults::grid_size")]
    pub grid_size: usize,
    /// Also export every draw (long format; can be large).
    #[arg(long)]
    #[serde(default)]
    pub export_draws: bool,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct AggregateArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Sum non-overlapping blocks of this many sections.
    #[arg(long, conflicts_with = "window")]
    #[serde(default)]
    pub factor: Option<usize>,
    /// Centered circular moving average with this (odd) window.
    #[arg(long)]
    #[serde(default)]
    pub window: Option<usize>,
    #[arg(long)]
    #[serde(default)]
    pub fill_gaps_zero: bool,
    #[command(flatten)]
    #[serde(flatten)]
    pub columns: ColumnArgs,
}

mod defaults {
    pub fn route_id() -> String {
        "route_id".into()
    }
    pub fn direction() -> String {
        "direction".into()
    }
    pub fn milepost() -> String {
        "milepost".into()
    }
    pub fn count() -> String {
        "count".into()
    }
    pub fn period() -> String {
        "period".into()
    }
    pub fn grid_size() -> usize {
        40
    }
    pub fn alphas() -> Vec<f64> {
        vec![0.01, 0.025, 0.05, 0.10]
    }
    pub fn seed() -> u64 {
        42
    }
    pub fn replicates() -> usize {
        100
    }
    pub fn pure_grid_points() -> usize {
        10
    }
    pub fn ma_window() -> usize {
        32
    }
}
