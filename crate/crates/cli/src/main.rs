mod cache;
mod config;
mod eval;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use mirage::judge::JudgeKind;
use mirage::pipeline::Ablation;

/// Multimodal misinformation detection: run the pipeline, score runs, manage the search cache.
#[derive(Parser, Debug)]
#[command(name = "mirage", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum AblationArg {
    Full,
    NoVisual,
    NoRag,
    JudgeOnly,
}

impl From<AblationArg> for Ablation {
    fn from(a: AblationArg) -> Self {
        match a {
            AblationArg::Full => Ablation::Full,
            AblationArg::NoVisual => Ablation::NoVisual,
            AblationArg::NoRag => Ablation::NoRag,
            AblationArg::JudgeOnly => Ablation::JudgeOnly,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum JudgeArg {
    Llm,
    Rules,
}

impl From<JudgeArg> for JudgeKind {
    fn from(j: JudgeArg) -> Self {
        match j {
            JudgeArg::Llm => JudgeKind::Llm,
            JudgeArg::Rules => JudgeKind::Rules,
        }
    }
}

#[derive(clap::Args, Debug)]
pub struct RunArgs {
    /// Dataset JSON: an array of {id, image, headline, gold_label, category}
    #[arg(long)]
    dataset: PathBuf,
    /// TOML config file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Replay model responses from --mock-fixtures instead of calling the API
    #[arg(long)]
    mock: bool,
    #[arg(long, value_name = "DIR")]
    mock_fixtures: Option<PathBuf>,
    /// Replay search results from recorded fixture files
    #[arg(long, value_name = "DIR")]
    search_fixtures: Option<PathBuf>,
    #[arg(long, value_enum)]
    ablation: Option<AblationArg>,
    #[arg(long, value_enum)]
    judge: Option<JudgeArg>,
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Stratified subsample fraction in (0, 1]
    #[arg(long)]
    fraction: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Search cache file
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
    /// Run directory for reports/ and manifest.json
    #[arg(long, default_value = "mirage-out")]
    out: PathBuf,
}

#[derive(clap::Args, Debug)]
pub struct EvalArgs {
    /// Run directory (containing reports/) or a directory of report files
    #[arg(long)]
    reports: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    /// Where to write the metrics JSON (default: metrics.json in the run directory)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Row label in the printed table
    #[arg(long)]
    label: Option<String>,
    #[arg(long, default_value_t = mirage::eval::DEFAULT_ECE_BINS)]
    bins: usize,
}

#[derive(clap::Args, Debug)]
pub struct CacheArgs {
    /// Cache file (default: $MIRAGE_CACHE or .mirage/search-cache.json)
    #[arg(long, value_name = "FILE")]
    cache: Option<PathBuf>,
    #[command(subcommand)]
    action: CacheAction,
}

#[derive(Subcommand, Debug)]
pub enum CacheAction {
    /// Print entry count
    Stats,
    /// Remove every entry
    Clear,
    /// Write the cache as a JSON archive
    Export { dest: PathBuf },
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the pipeline over a dataset
    Run(RunArgs),
    /// Score a finished run against gold labels
    Eval(EvalArgs),
    /// Inspect or manage the search cache
    Cache(CacheArgs),
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let env: std::collections::HashMap<String, String> = std::env::vars().collect();
    let result = match cli.command {
        Command::Run(args) => run::cmd_run(args, &env),
        Command::Eval(args) => eval::cmd_eval(args),
        Command::Cache(args) => cache::cmd_cache(args, &env),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
