use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use privse_core::{Epsilon, SensitivityMode, DEFAULT_K_MAX};

mod commands;

#[derive(Parser, Debug)]
#[command(
    name = "privse",
    version,
    about = "Private message graphs and structural-entropy clustering"
)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic labeled corpus as JSONL.
    Synth(SynthArgs),
    /// Build one private message graph per block.
    BuildGraph(BuildArgs),
    /// Cluster the graphs written by `build-graph`.
    Cluster(ClusterArgs),
    /// Score partitions against gold labels.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline over a grid of privacy budgets.
    Sweep(SweepArgs),
    /// Report sensitivities per block and budget without building graphs.
    SensitivityReport(ReportArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Output JSONL file; a `.manifest.json` is written next to it.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub events: usize,
    #[arg(long, default_value_t = 100)]
    pub per_event: usize,
    #[arg(long, default_value_t = 32)]
    pub dim: usize,
    #[arg(long, default_value_t = 20.0)]
    pub concentration: f64,
    /// Probability that a same-event pair shares an attribute token.
    #[arg(long, default_value_t = 0.1)]
    pub attr_prob: f64,
    #[arg(long, default_value_t = 1)]
    pub blocks: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug, Clone)]
pub struct PrivacyArgs {
    /// Privacy budget, or `off` for exact similarities.
    #[arg(long)]
    pub epsilon: Epsilon,
    #[arg(long, default_value_t = SensitivityMode::Mixed)]
    pub mode: SensitivityMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct BuildArgs {
    /// Corpus JSONL.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory, one subdirectory per block.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub privacy: PrivacyArgs,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    pub kmax: usize,
    /// Treat the whole corpus as one block.
    #[arg(long)]
    pub pooled: bool,
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Directory written by `build-graph`.
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory; defaults to the input directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Initial subgraph size (default 400, or 300 for pooled graphs).
    #[arg(long)]
    pub q0: Option<usize>,
    /// Group super-nodes in id order instead of by edge weight.
    #[arg(long)]
    pub sequential_split: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Directory written by `cluster`.
    #[arg(long)]
    pub input: PathBuf,
    /// Corpus JSONL holding the gold labels.
    #[arg(long)]
    pub corpus: PathBuf,
    /// Metrics JSON path; defaults to `<input>/metrics.json`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated budgets; an `off` row is always added.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5,6,7,8,9,10")]
    pub epsilons: Vec<Epsilon>,
    #[arg(long, default_value_t = SensitivityMode::Mixed)]
    pub mode: SensitivityMode,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = DEFAULT_K_MAX)]
    pub kmax: usize,
    #[arg(long)]
    pub q0: Option<usize>,
    #[arg(long)]
    pub pooled: bool,
    #[arg(long)]
    pub sequential_split: bool,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// Output JSON file.
    #[arg(long)]
    pub out: PathBuf,
    /// Comma-separated budgets.
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,5,10,15")]
    pub epsilons: Vec<Epsilon>,
    #[arg(long, default_value_t = SensitivityMode::Mixed)]
    pub mode: SensitivityMode,
    #[arg(long)]
    pub pooled: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match cli.command {
        Command::Synth(args) => commands::synth(&args),
        Command::BuildGraph(args) => commands::build_graph(&args),
        Command::Cluster(args) => commands::cluster(&args),
        Command::Evaluate(args) => commands::evaluate(&args),
        Command::Sweep(args) => commands::sweep(&args),
        Command::SensitivityReport(args) => commands::sensitivity_report(&args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
