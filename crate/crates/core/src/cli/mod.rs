//! The `mda` command line: producer (`train`), consumer (`adapt`, `predict`,
//! `estimate-perf`), evaluation and statistics subcommands.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data or validation
//! errors.

mod commands;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::adapt::LabelDistribution;
use crate::error::Error;
use crate::eval::Table;

pub use commands::parse_config;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(Error::MissingLabelDistribution | Error::MissingFeatureMeans) => 1,
            CliError::Data(_) => 2,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Data(e.into())
    }
}

pub type CliResult<T = ()> = std::result::Result<T, CliError>;

/// Target-domain information written by `adapt` and read by `predict`,
/// `eval`, `estimate-perf` and `labelprop-curve`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextFile {
    /// Model labels, in the order of `label_dist`.
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_dist: Option<LabelDistribution>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dsn_means: Option<Vec<f64>>,
}

#[derive(Debug, Parser)]
#[command(name = "mda", version, about = "Modular domain adaptation for linear text classifiers")]
pub struct Cli {
    /// Seed for every random choice (default 0; `synth` keeps its spec seed
    /// unless given).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Machine-readable JSON on stdout.
    #[arg(long, global = true)]
    pub json: bool,
    /// Reports as CSV.
    #[arg(long, global = true, conflicts_with = "json")]
    pub csv: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Only log errors.
    #[arg(long, short, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a labeled multi-domain corpus.
    Train(TrainArgs),
    /// Build a target-domain context file for a published model.
    Adapt(AdaptArgs),
    /// Predict labels for a corpus.
    Predict(PredictArgs),
    /// Accuracy of a model on a labeled corpus.
    Eval(EvalArgs),
    /// Hold out each domain in turn, train on the rest.
    EvalHoldout(ProtocolArgs),
    /// Train on each domain alone, test on the others.
    EvalSingleDomain(ProtocolArgs),
    /// Two-fold accuracy estimate from a labeled target sample.
    EstimatePerf(EstimateArgs),
    /// Accuracy against the number of labels used to estimate the distribution.
    LabelpropCurve(CurveArgs),
    /// Top-weighted words per class as CSV.
    Lexicon(LexiconArgs),
    /// McNemar's test on paired classifier outcomes.
    Mcnemar(McnemarArgs),
    /// Monte-Carlo power of McNemar's test.
    Power(PowerArgs),
    /// Generate a synthetic corpus.
    Synth(SynthArgs),
}

#[derive(Debug, Clone, Args)]
pub struct TrainFlags {
    /// Fixed L1 strength; skips the grid search.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Comma-separated lambda grid.
    #[arg(long, value_delimiter = ',', conflicts_with = "lambda")]
    pub lambda_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Inner dimension of the factorized weights (gr only).
    #[arg(long)]
    pub rank: Option<usize>,
    #[arg(long, default_value_t = 1.0)]
    pub gr_weight: f64,
    #[arg(long, default_value_t = 0.5)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 2000)]
    pub max_iters: usize,
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 5000)]
    pub vocab_size: usize,
    /// Strip @handles and emoji as well as URLs.
    #[arg(long)]
    pub tweet_mode: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// base, dr or gr.
    #[arg(long, default_value = "base")]
    pub technique: String,
    #[arg(long)]
    pub dsb: bool,
    #[arg(long)]
    pub dsn: bool,
    #[command(flatten)]
    pub train: TrainFlags,
    /// Model file to write (`.mda.json`).
    #[arg(long)]
    pub out: PathBuf,
    /// JSONL training log.
    #[arg(long)]
    pub log: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AdaptArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Label distribution file (`labels`, `probs`, `n_samples_used`, `alpha`).
    #[arg(long, conflicts_with = "estimate_from")]
    pub labels_json: Option<PathBuf>,
    /// Labeled target sample (JSONL) to estimate the distribution from.
    #[arg(long)]
    pub estimate_from: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Unlabeled target corpus (JSONL) for feature means.
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Context file from `adapt`.
    #[arg(long)]
    pub context: Option<PathBuf>,
    /// Use the stored statistics (and DR row) of this training domain.
    #[arg(long)]
    pub domain: Option<String>,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[command(flatten)]
    pub apply: ApplyArgs,
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub apply: ApplyArgs,
    /// Labeled corpus (JSONL).
    #[arg(long)]
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Configurations such as `base`, `dsb`, `dsn+dsb`, `dr+dsb`, `gr`.
    #[arg(long = "config", value_delimiter = ',', default_value = "base,dsb,dsn+dsb")]
    pub configs: Vec<String>,
    /// Test documents per domain.
    #[arg(long, default_value_t = 400, conflicts_with = "test_fraction")]
    pub test_count: usize,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    /// Label budgets for estimated-distribution rows.
    #[arg(long, value_delimiter = ',', default_value = "250")]
    pub n_est: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub est_trials: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled target sample (JSONL).
    #[arg(long)]
    pub samples: PathBuf,
    /// Unlabeled target text for feature means (default: the sample text).
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct CurveArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Labeled target corpus (JSONL).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "10,25,50,100,250,500,1000")]
    pub sizes: Vec<usize>,
    #[arg(long, default_value_t = 5)]
    pub trials: usize,
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
}

#[derive(Debug, Args)]
pub struct LexiconArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub top_n: usize,
    /// Word lists only: one column per class.
    #[arg(long)]
    pub no_weights: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct McnemarArgs {
    /// Items A got wrong and B got right.
    #[arg(long, required_unless_present = "pred_a", conflicts_with = "pred_a")]
    pub n01: Option<u64>,
    /// Items A got right and B got wrong.
    #[arg(long, required_unless_present = "pred_a")]
    pub n10: Option<u64>,
    #[arg(long, default_value_t = 0)]
    pub n00: u64,
    #[arg(long, default_value_t = 0)]
    pub n11: u64,
    /// Predictions of A, one label per line.
    #[arg(long, requires_all = ["pred_b", "gold"])]
    pub pred_a: Option<PathBuf>,
    #[arg(long)]
    pub pred_b: Option<PathBuf>,
    #[arg(long)]
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PowerArgs {
    #[arg(long)]
    pub acc_a: f64,
    #[arg(long)]
    pub acc_b: f64,
    #[arg(long)]
    pub agreement: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// `default-benchmark` or a JSON spec file.
    pub spec: String,
    /// Documents per domain, overriding the spec.
    #[arg(long)]
    pub n_docs: Option<usize>,
    /// JSONL output (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Output format selected by the global flags.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Format {
    Text,
    Json,
    Csv,
}

impl Cli {
    pub(crate) fn format(&self) -> Format {
        if self.json {
            Format::Json
        } else if self.csv {
            Format::Csv
        } else {
            Format::Text
        }
    }
}

/// Writes a report as JSON, CSV or an aligned table.
pub(crate) fn emit<T: Serialize>(out: &mut dyn Write, format: Format, value: &T, table: &Table) -> CliResult {
    match format {
        Format::Json => writeln!(out, "{}", serde_json::to_string_pretty(value)?)?,
        Format::Csv => out.write_all(table.render_csv().as_bytes())?,
        Format::Text => out.write_all(table.render_text().as_bytes())?,
    }
    Ok(())
}

/// Executes a parsed command line.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> CliResult {
    let mut buf = Vec::new();
    match cli.threads {
        Some(0) => return Err(CliError::Usage("--threads must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| commands::dispatch(cli, &mut buf))?,
        None => commands::dispatch(cli, &mut buf)?,
    }
    out.write_all(&buf)?;
    out.flush()?;
    Ok(())
}

/// Parses `args` (program name first), runs the command and returns the exit
/// code. Errors go to stderr.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let level = if cli.quiet { log::LevelFilter::Error } else { log::LevelFilter::Warn };
    let _ = env_logger::Builder::new().filter_level(level).parse_default_env().try_init();
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
