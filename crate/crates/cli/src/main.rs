//! `genoseq`: genotype imputation, phenotype model training and the
//! supporting benchmark, synthesis and gradient-check tools.

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{Args, Parser, Subcommand};
use genoseq::geno::MissingPattern;
use genoseq::mf::UpdateMode;
use genoseq::pipeline::ExportFormat;
use genoseq::rnn::{BatchMode, CellKind};
use genoseq::ErrorKind;

use crate::config::CliConfig;

#[derive(Parser, Debug)]
#[command(
    name = "genoseq",
    version,
    about = "Genotype imputation by matrix factorization and phenotype prediction with recurrent networks",
    after_help = "Exit codes: 0 success, 1 usage/config/parse error, 2 numerical divergence or failed check, 3 I/O error.\nSet GENOSEQ_LOG=error|warn|info|debug for diagnostics on standard error."
)]
struct Cli {
    #[command(flatten)]
    shared: SharedArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Default)]
pub struct SharedArgs {
    /// JSON configuration file; flags override its values
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Top-level seed; every stage seed is derived from it
    #[arg(long, global = true, value_name = "U64")]
    pub seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads [default: 1]
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fill missing genotypes with a low-rank factorization
    Impute(ImputeArgs),
    /// Impute if needed, then train and evaluate one model per trait
    Train(TrainArgs),
    /// Apply a saved model to genotypes
    Predict(PredictArgs),
    /// Compare recurrent cells on a synthetic memory task
    Benchmark(BenchmarkArgs),
    /// Write a synthetic genotype/phenotype dataset
    Synth(SynthArgs),
    /// Check analytic gradients against finite differences
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug)]
pub struct ImputeArgs {
    /// Genotype CSV (header of SNP ids, codes 0/1/2, 5 for missing)
    #[arg(long, value_name = "PATH")]
    pub geno: Option<PathBuf>,
    /// Fully observed reference genotypes for accuracy reporting
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    /// Latent feature count
    #[arg(long)]
    pub features: Option<usize>,
    /// Number of epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Regularization weight
    #[arg(long)]
    pub beta: Option<f64>,
    /// full_batch or stochastic
    #[arg(long, value_parser = parse_update_mode)]
    pub mode: Option<UpdateMode>,
}

#[derive(Args, Debug)]
pub struct RnnArgs {
    /// simple_tanh, lstm or relu_identity
    #[arg(long, value_parser = parse_cell)]
    pub cell: Option<CellKind>,
    /// Hidden units
    #[arg(long)]
    pub hidden: Option<usize>,
    /// Training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Learning rate
    #[arg(long)]
    pub lr: Option<f64>,
    /// full_batch or per_sample
    #[arg(long, value_parser = parse_batch_mode)]
    pub batch_mode: Option<BatchMode>,
    /// Gradient norm cap; 0 disables clipping
    #[arg(long)]
    pub clip_norm: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Genotype CSV; missing cells are imputed first
    #[arg(long, value_name = "PATH")]
    pub geno: Option<PathBuf>,
    /// Phenotype CSV (header of trait names, NA for missing)
    #[arg(long, value_name = "PATH")]
    pub pheno: Option<PathBuf>,
    /// Fully observed reference genotypes for imputation accuracy
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub rnn: RnnArgs,
    /// Zero-based trait columns, comma separated [default: all]
    #[arg(long, value_delimiter = ',')]
    pub traits: Option<Vec<usize>>,
    /// Train one model with an output per trait
    #[arg(long)]
    pub joint: bool,
    /// SNPs per timestep
    #[arg(long)]
    pub chunk_width: Option<usize>,
    /// Latent features for imputation
    #[arg(long)]
    pub features: Option<usize>,
    /// Imputation epochs
    #[arg(long)]
    pub mf_epochs: Option<usize>,
    /// Report formats, comma separated: json, csv
    #[arg(long, value_delimiter = ',', value_parser = parse_format, default_value = "json,csv")]
    pub formats: Vec<ExportFormat>,
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    /// Model checkpoint JSON
    #[arg(long, value_name = "PATH")]
    pub checkpoint: Option<PathBuf>,
    /// Fully observed genotype CSV
    #[arg(long, value_name = "PATH")]
    pub geno: Option<PathBuf>,
    /// Phenotype CSV with the model's target columns, for metrics
    #[arg(long, value_name = "PATH")]
    pub pheno: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchmarkArgs {
    /// lag-memory[-N] or adding[-N]
    #[arg(long)]
    pub task: Option<String>,
    /// Cells to compare, comma separated [default: all three]
    #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
    pub cells: Option<Vec<CellKind>>,
    /// Training sequences
    #[arg(long)]
    pub samples: Option<usize>,
    #[command(flatten)]
    pub rnn: RnnArgs,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub snps: Option<usize>,
    #[arg(long)]
    pub rank: Option<usize>,
    /// Fraction of genotype cells to hide
    #[arg(long)]
    pub missing_frac: Option<f64>,
    /// uniform or per_snp:MIN:MAX
    #[arg(long, value_parser = parse_pattern)]
    pub pattern: Option<MissingPattern>,
    #[arg(long)]
    pub traits: Option<usize>,
    #[arg(long)]
    pub causal_snps: Option<usize>,
    #[arg(long)]
    pub heritability: Option<f64>,
    /// Fraction of samples with each trait missing
    #[arg(long)]
    pub pheno_missing_frac: Option<f64>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Random instances per target
    #[arg(long)]
    pub trials: Option<usize>,
    /// Restrict to these cells, comma separated; skips the factorization
    /// check unless --mf is also given
    #[arg(long, value_delimiter = ',', value_parser = parse_cell)]
    pub cells: Option<Vec<CellKind>>,
    /// Include the factorization check
    #[arg(long)]
    pub mf: bool,
    /// Maximum allowed relative error
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Finite-difference step
    #[arg(long)]
    pub step: Option<f64>,
}

fn parse_cell(s: &str) -> Result<CellKind, String> {
    s.parse().map_err(|e: genoseq::Error| e.to_string())
}

fn parse_batch_mode(s: &str) -> Result<BatchMode, String> {
    match s.replace('-', "_").as_str() {
        "full_batch" => Ok(BatchMode::FullBatch),
        "per_sample" => Ok(BatchMode::PerSample),
        _ => Err(format!(
            "unknown batch mode {s:?}; expected full_batch or per_sample"
        )),
    }
}

fn parse_update_mode(s: &str) -> Result<UpdateMode, String> {
    match s.replace('-', "_").as_str() {
        "full_batch" => Ok(UpdateMode::FullBatch),
        "stochastic" => Ok(UpdateMode::Stochastic),
        _ => Err(format!(
            "unknown update mode {s:?}; expected full_batch or stochastic"
        )),
    }
}

fn parse_format(s: &str) -> Result<ExportFormat, String> {
    match s {
        "json" => Ok(ExportFormat::Json),
        "csv" => Ok(ExportFormat::Csv),
        _ => Err(format!("unknown format {s:?}; expected json or csv")),
    }
}

fn parse_pattern(s: &str) -> Result<MissingPattern, String> {
    let s = s.replace('-', "_");
    if s == "uniform" {
        return Ok(MissingPattern::Uniform);
    }
    let rates = s
        .strip_prefix("per_snp:")
        .and_then(|r| r.split_once(':'))
        .and_then(|(a, b)| Some((a.parse().ok()?, b.parse().ok()?)));
    match rates {
        Some((min_rate, max_rate)) => Ok(MissingPattern::PerSnp { min_rate, max_rate }),
        None => Err(format!(
            "unknown pattern {s:?}; expected uniform or per_snp:MIN:MAX"
        )),
    }
}

/// A failure with its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    /// Failures reading user-named inputs are usage errors, not I/O errors.
    pub fn input(e: genoseq::Error) -> Self {
        match e.kind() {
            ErrorKind::Numerical => CliError::from(e),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<genoseq::Error> for CliError {
    fn from(e: genoseq::Error) -> Self {
        let code = match e.kind() {
            ErrorKind::Usage => 1,
            ErrorKind::Numerical => 2,
            ErrorKind::Io => 3,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = match &cli.shared.config {
        Some(path) => CliConfig::load(path)?,
        None => CliConfig::default(),
    };
    let threads = cli.shared.threads.or(cfg.threads).unwrap_or(1);
    if threads == 0 {
        return Err(CliError::usage("--threads must be at least 1"));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::usage(format!("cannot start thread pool: {e}")))?;
    let ctx = commands::Context::new(&cli.shared, cfg);
    match cli.command {
        Command::Impute(a) => commands::impute(&ctx, a),
        Command::Train(a) => commands::train(&ctx, a),
        Command::Predict(a) => commands::predict(&ctx, a),
        Command::Benchmark(a) => commands::benchmark(&ctx, a),
        Command::Synth(a) => commands::synth(&ctx, a),
        Command::Gradcheck(a) => commands::gradcheck(&ctx, a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("GENOSEQ_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
