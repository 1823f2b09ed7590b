use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Environment variable holding the default provider endpoint.
pub const PROVIDER_ENV: &str = "SADE_PROVIDER";

#[derive(Debug, Parser)]
#[command(
    name = "sade",
    version,
    about = "Syntax-bias analysis and de-biased retrieval evaluation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct ProviderArgs {
    /// Endpoint: `http(s)://host:port` or `mock://<table.tsv>` [env: SADE_PROVIDER]
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Maximum in-flight provider requests.
    #[arg(long)]
    pub parallel: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a benchmark file against the corpus invariants.
    Validate {
        #[arg(long = "in")]
        input: PathBuf,
        /// Write the violation list here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replace every item's negatives with shuffles of its positives.
    Perturb {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "nouns-adj")]
        strategy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build the three syntax-probe cases into a directory.
    Cases {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Text-only syntax-bias distribution of one branch.
    Bias {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Branch to analyse; required when the input mixes branches.
        #[arg(long)]
        branch: Option<String>,
        #[arg(long, default_value_t = 20)]
        bins: usize,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Apply a threshold to a bias report.
    Filter {
        /// Bias report produced by `bias`.
        #[arg(long)]
        bias: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        /// Benchmark to filter alongside the report.
        #[arg(long = "in", requires = "items")]
        input: Option<PathBuf>,
        /// Where the retained items of `--in` go.
        #[arg(long, requires = "input")]
        items: Option<PathBuf>,
        /// Refuse when the retained scores still reject a zero mean.
        #[arg(long)]
        strict: bool,
    },
    /// Assemble the de-biased benchmark from a TOML config.
    Assemble {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's default threshold.
        #[arg(long)]
        tau: Option<f64>,
        #[arg(long)]
        bins: Option<usize>,
        #[arg(long)]
        strict: bool,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Score a benchmark and compute per-branch metrics.
    Eval {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Per-candidate scores, written as JSONL.
        #[arg(long)]
        scores: Option<PathBuf>,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Compare accuracy with original and noise images.
    Ablate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        prompt: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Noise size for items without a readable image, as WxH.
        #[arg(long, default_value = "224x224")]
        noise_size: String,
        #[command(flatten)]
        provider: ProviderArgs,
    },
    /// Render an evaluation result as JSON or markdown.
    Report {
        /// Result of `eval`.
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "markdown")]
        format: String,
        #[arg(long)]
        ablation: Option<PathBuf>,
        /// Human ratings CSV.
        #[arg(long)]
        human: Option<PathBuf>,
        /// Bias reports whose histograms to include.
        #[arg(long, num_args = 1..)]
        bias: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Validate { .. } => "validate",
            Command::Perturb { .. } => "perturb",
            Command::Cases { .. } => "cases",
            Command::Bias { .. } => "bias",
            Command::Filter { .. } => "filter",
            Command::Assemble { .. } => "assemble",
            Command::Eval { .. } => "eval",
            Command::Ablate { .. } => "ablate",
            Command::Report { .. } => "report",
        }
    }
}
