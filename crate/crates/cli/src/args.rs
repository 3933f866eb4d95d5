use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use clens_core::report::Format;
use clens_core::stats::{Alternative, ZeroPolicy};
use clens_core::{ThresholdBase, ThresholdSpec};

#[derive(Parser, Debug)]
#[command(name = "clens", version, about = "Error-margin analysis for neuron-concept associations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Validate input files and write a store directory.
    Ingest(IngestArgs),
    /// Render the margin table of a store.
    Margins(MarginsArgs),
    /// Confirm concepts across two stores, or run a standalone Wilcoxon test.
    Stats(StatsArgs),
    /// Serve the HTTP API over a holdout store.
    Serve(ServeArgs),
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    #[arg(long)]
    pub activations: PathBuf,
    #[arg(long)]
    pub annotations: PathBuf,
    #[arg(long)]
    pub assignments: PathBuf,
    #[arg(long)]
    pub dataset_id: String,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON object mapping image ids to asset paths.
    #[arg(long)]
    pub gallery: Option<PathBuf>,
    /// Clamp negative activations to 0 instead of rejecting them.
    #[arg(long)]
    pub allow_negative: bool,
}

fn thresholds(s: &str) -> Result<ThresholdSpec, String> {
    ThresholdSpec::parse(s).map_err(|e| e.to_string())
}

fn format(s: &str) -> Result<Format, String> {
    s.parse()
}

fn alternative(s: &str) -> Result<Alternative, String> {
    s.parse()
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Base {
    PerNeuronMax,
    GlobalMax,
}

impl From<Base> for ThresholdBase {
    fn from(b: Base) -> Self {
        match b {
            Base::PerNeuronMax => ThresholdBase::PerNeuronMax,
            Base::GlobalMax => ThresholdBase::GlobalMax,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Zeros {
    Wilcoxon,
    Pratt,
}

impl From<Zeros> for ZeroPolicy {
    fn from(z: Zeros) -> Self {
        match z {
            Zeros::Wilcoxon => ZeroPolicy::Wilcoxon,
            Zeros::Pratt => ZeroPolicy::Pratt,
        }
    }
}

#[derive(Args, Debug)]
pub struct MarginsArgs {
    #[arg(long)]
    pub store: PathBuf,
    /// Comma-separated fractions of the reference maximum.
    #[arg(long, value_parser = thresholds, default_value = "0,0.2,0.4,0.6")]
    pub thresholds: ThresholdSpec,
    /// Keep rows whose TLA is strictly above this percentage.
    #[arg(long)]
    pub tla_min: Option<f64>,
    /// csv, md or json.
    #[arg(long, value_parser = format, default_value = "csv")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "per-neuron-max")]
    pub base: Base,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_conflicts_with_subcommands = true)]
pub struct StatsArgs {
    #[command(subcommand)]
    pub mode: Option<StatsMode>,
    /// Dataset A: the alternative `greater` means A's Non-TLA exceeds B's.
    #[arg(long)]
    pub store_a: Option<PathBuf>,
    #[arg(long)]
    pub store_b: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_parser = thresholds, default_value = "0,0.2,0.4,0.6")]
    pub thresholds: ThresholdSpec,
    /// md, json or csv.
    #[arg(long, value_parser = format, default_value = "md")]
    pub format: Format,
    #[arg(long, value_enum, default_value = "wilcoxon")]
    pub zero_policy: Zeros,
}

#[derive(Subcommand, Debug)]
pub enum StatsMode {
    /// Wilcoxon signed-rank test over a `x,y` or `label,x,y` pair file.
    Wilcoxon(WilcoxonArgs),
}

#[derive(Args, Debug)]
pub struct WilcoxonArgs {
    #[arg(long)]
    pub pairs: PathBuf,
    /// greater, less or two-sided; differences are first minus second column.
    #[arg(long, value_parser = alternative, default_value = "two-sided")]
    pub alternative: Alternative,
    #[arg(long, value_enum, default_value = "wilcoxon")]
    pub zero_policy: Zeros,
    #[arg(long, value_parser = format, default_value = "md")]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    /// Holdout store used for detection and error margins.
    #[arg(long)]
    pub store: PathBuf,
    /// `on-the-fly`, or a JSON file written by `clens margins --format json`.
    #[arg(long, default_value = "on-the-fly")]
    pub margins: String,
    #[arg(long, value_parser = thresholds, default_value = "0,0.2,0.4,0.6")]
    pub thresholds: ThresholdSpec,
    /// Second store enabling the statistics endpoints (dataset A).
    #[arg(long)]
    pub reference_store: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory served at `/` (UI bundle, gallery assets).
    #[arg(long = "static")]
    pub static_dir: Option<PathBuf>,
    /// Allowed CORS origin; repeatable. Any origin when omitted.
    #[arg(long = "cors-origin")]
    pub cors_origins: Vec<String>,
}
