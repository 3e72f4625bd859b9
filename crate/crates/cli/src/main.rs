mod commands;
mod error;

use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "stnlm", version, about = "Syntactic tensor-network language models")]
struct Cli {
    /// Worker threads for per-sentence work (default: all cores).
    #[arg(long, global = true, env = "STNLM_JOBS")]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Estimate MERGE tensors from a bracketed treebank.
    Train(TrainArgs),
    /// Log-probabilities of fully labeled trees.
    Prob(ProbArgs),
    /// Distribution of the masked word `_` in a labeled tree.
    Predict(PredictArgs),
    /// Exact ancestral samples for one tree shape.
    Sample(SampleArgs),
    /// Corpus-averaged correlation and mutual-information decay.
    Correlate(CorrelateArgs),
    /// Entanglement spectrum and perplexity bound of a word block.
    Entangle(EntangleArgs),
    /// Export the isometrized network of a shape as a gate list.
    Circuit(CircuitArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Binarize {
    Left,
    Right,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum VariableArg {
    Category,
    Word,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Bracketed treebank file.
    pub treebank: PathBuf,
    /// Refinement level 1-4.
    #[arg(long, default_value_t = 1)]
    pub level: u8,
    /// Add-λ smoothing.
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,
    /// Binarize k-ary nodes.
    #[arg(long, value_enum)]
    pub binarize: Option<Binarize>,
    /// Drop sentences containing traces.
    #[arg(long)]
    pub skip_traces: bool,
    /// Estimate the unknown-word row from hapax words.
    #[arg(long)]
    pub unk: bool,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ProbArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// One tree per line, optionally `id<TAB>tree`; `-` reads stdin.
    #[arg(long)]
    pub trees: PathBuf,
    /// Also report log-probabilities divided by Z of the tree shape.
    #[arg(long)]
    pub normalized: bool,
    /// Map out-of-vocabulary words to the unknown-word row.
    #[arg(long)]
    pub map_unknown: bool,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled tree with exactly one word `_`; its category may also be `_`.
    #[arg(long)]
    pub tree: String,
    /// Print at most this many words.
    #[arg(long)]
    pub top: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SampleArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Tree shape, e.g. `((..).)`.
    #[arg(long)]
    pub shape: String,
    #[arg(long, default_value_t = 1)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct CorrelateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Tree shape to include (repeatable).
    #[arg(long)]
    pub shape: Vec<String>,
    /// Treebank whose tree shapes are included.
    #[arg(long)]
    pub trees: Option<PathBuf>,
    /// Binarize k-ary nodes of `--trees`.
    #[arg(long, value_enum)]
    pub binarize: Option<Binarize>,
    /// `cat:LABEL` or `word:WORD` indicator.
    #[arg(long)]
    pub observable: String,
    /// Leaf variable for mutual information.
    #[arg(long, value_enum, default_value_t = VariableArg::Category)]
    pub variable: VariableArg,
    /// Largest separation (default: longest sentence minus one).
    #[arg(long)]
    pub max_r: Option<usize>,
    /// Inclusive fit window `LO:HI` (default `2:max-r`).
    #[arg(long)]
    pub window: Option<String>,
    /// Write a gnuplot script plotting both series.
    #[arg(long)]
    pub gnuplot: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EntangleArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub shape: String,
    /// Block `START:LEN` of word positions (0-based).
    #[arg(long)]
    pub block: String,
    /// Also print Z of the shape.
    #[arg(long)]
    pub report_z: bool,
}

#[derive(Args, Debug)]
pub struct CircuitArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub shape: String,
    /// Gate-list file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn run(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            return Err(CliError::usage("--jobs must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global().map_err(|e| CliError::usage(e.to_string()))?;
    }
    match cli.command {
        Command::Train(a) => commands::train(&a, out),
        Command::Prob(a) => commands::prob(&a, out),
        Command::Predict(a) => commands::predict(&a, out),
        Command::Sample(a) => commands::sample(&a, out),
        Command::Correlate(a) => commands::correlate(&a, out),
        Command::Entangle(a) => commands::entangle(&a, out),
        Command::Circuit(a) => commands::circuit(&a, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = io::BufWriter::new(stdout.lock());
    let result = run(cli, &mut out).and_then(|()| out.flush().map_err(CliError::from));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            drop(out);
            eprintln!("stnlm: {e}");
            ExitCode::from(e.code)
        }
    }
}
