use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "tuplenet",
    version,
    about = "Bayesian network recovery from low-order tuple marginals"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RecoverMode {
    Exact,
    Empirical,
}

#[derive(Debug, Args)]
pub struct Output {
    /// Output file; stdout when omitted.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a random strictly positive network.
    Generate(GenerateArgs),
    /// Draw i.i.d. rows from a network by ancestral sampling.
    Sample(SampleArgs),
    /// Count k-tuple frequencies in a samples CSV.
    Estimate(EstimateArgs),
    /// Recover parent sets and CPTs from a network (exact) or data (empirical).
    Recover(RecoverArgs),
    /// VC bounds and required sample sizes for k-tuple cylinder sets.
    Bounds(BoundsArgs),
    /// Build and verify the shattering witness.
    Witness(WitnessArgs),
    /// Run a seeded batch of end-to-end trials from a JSON config.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Comma-separated cardinalities, e.g. 2,3,2.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["n", "d"])]
    pub cards: Option<Vec<usize>>,
    #[arg(short, long)]
    pub n: Option<usize>,
    /// Uniform cardinality used with --n.
    #[arg(short, long, default_value_t = 2)]
    pub d: usize,
    #[arg(long)]
    pub delta: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Dirichlet concentration for CPT rows.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Minimum probability of every CPT entry.
    #[arg(long, default_value_t = 0.01)]
    pub floor: f64,
    /// Draw each in-degree uniformly from 0..=min(j, delta).
    #[arg(long)]
    pub random_in_degree: bool,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// Network JSON file.
    #[arg(long)]
    pub dag: PathBuf,
    /// Number of rows.
    #[arg(short, long)]
    pub l: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Samples CSV file.
    #[arg(long)]
    pub samples: PathBuf,
    #[arg(short, long)]
    pub k: usize,
    /// Cardinalities; inferred from the data when omitted.
    #[arg(long, value_delimiter = ',')]
    pub cards: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct RecoverArgs {
    /// Network JSON (exact mode), or samples CSV / frequency JSON (empirical mode).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = RecoverMode::Exact)]
    pub mode: RecoverMode,
    /// In-degree bound; defaults to the network's own in exact mode.
    #[arg(long)]
    pub delta: Option<usize>,
    /// Frequency accuracy for the empirical rule (threshold 4ε).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Zero tolerance for the exact rule.
    #[arg(long, default_value_t = tuplenet::oracle::DEFAULT_TOLERANCE)]
    pub tol: f64,
    /// Cardinalities for a samples CSV; inferred when omitted.
    #[arg(long, value_delimiter = ',')]
    pub cards: Option<Vec<usize>>,
    /// Write the recovery trace JSON here.
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct BoundsArgs {
    #[arg(short, long)]
    pub n: u64,
    #[arg(short, long)]
    pub k: u64,
    #[arg(short, long, default_value_t = 2)]
    pub d: u64,
    #[arg(long)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.05)]
    pub delta_risk: f64,
    /// Also report the risk bound with h = log₂ of the exact cylinder count.
    #[arg(long)]
    pub tight: bool,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct WitnessArgs {
    #[arg(short, long, required_unless_present = "verify")]
    pub n: Option<usize>,
    /// Tuple size; taken from the file when verifying.
    #[arg(short, long, required_unless_present = "verify")]
    pub k: Option<usize>,
    /// Verify a witness JSON file instead of building one.
    #[arg(long, conflicts_with = "n")]
    pub verify: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[command(flatten)]
    pub out: Output,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// JSON config file.
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report directory; overrides the config's output_dir.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&a),
        Command::Sample(a) => commands::sample(&a),
        Command::Estimate(a) => commands::estimate(&a),
        Command::Recover(a) => commands::recover(&a),
        Command::Bounds(a) => commands::bounds(&a),
        Command::Witness(a) => commands::witness(&a),
        Command::Experiment(a) => commands::experiment(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is_broken_pipe() => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
