//! `mpcite`: generate or ingest a corpus, fine-tune the encoders, build the
//! candidate index, recommend citations and evaluate.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mpcite_core::objectives::Objective;

#[derive(Parser, Debug)]
#[command(
    name = "mpcite",
    version,
    about = "Multi-positive citation recommendation"
)]
struct Cli {
    /// Run-config file (TOML).
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// More log output (-v info, -vv debug).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic planted-cluster corpus and its planted-pair sidecar.
    Gen(GenArgs),
    /// Print corpus, split and citation-instance statistics.
    Stats,
    /// Fine-tune the manuscript and citation encoders.
    Train(TrainArgs),
    /// Encode the candidate papers into an embedding index.
    Index,
    /// Rank candidates for one citation position in a manuscript.
    Recommend(RecommendArgs),
    /// Score test citation instances (Recall@k, MAP@k by stratum).
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Corpus file to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Planted-pair file (default: `<out>.planted.tsv`).
    #[arg(long)]
    pub planted: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub papers: Option<usize>,
    #[arg(long)]
    pub topics: Option<usize>,
    #[arg(long)]
    pub cocitation_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Override `train.objective`.
    #[arg(long)]
    pub objective: Option<Objective>,
    /// Fundamental contexts only (no supplemental sampling).
    #[arg(long)]
    pub no_dynamic: bool,
}

#[derive(Args, Debug)]
pub struct RecommendArgs {
    /// Manuscript: a corpus-format file holding one paper, or plain text with
    /// one whitespace-tokenized body sentence per line.
    #[arg(long)]
    pub manuscript: PathBuf,
    /// Body sentence index of the citation placeholder.
    #[arg(long)]
    pub anchor: usize,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Train and evaluate every objective from the same seeds.
    #[arg(long)]
    pub objective_sweep: bool,
    /// Fundamental contexts only.
    #[arg(long)]
    pub no_dynamic: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli.command, cli.config.as_deref()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("mpcite: error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
