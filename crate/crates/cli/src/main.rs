use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use lir_cli::{category, extract_overrides, Invocation, Stage};

/// Neural retrieval pipeline: fine-tune, index, search and re-rank.
///
/// Any configuration key can also be set with a dotted flag, e.g.
/// `--data.train_dataset.path=train.tsv` or `--model.config.embedding_dim 64`.
#[derive(Parser)]
#[command(name = "lir", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fine-tune a model on a tuple or run dataset.
    Fit(CommonArgs),
    /// Encode a document collection into an index.
    Index(CommonArgs),
    /// Retrieve top-k documents for queries from an index.
    Search(CommonArgs),
    /// Re-score existing runs with a model.
    #[command(name = "re_rank", alias = "re-rank")]
    ReRank(CommonArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// YAML configuration file; repeatable, later files win.
    #[arg(long = "config", value_name = "PATH", required = true)]
    configs: Vec<PathBuf>,
    /// Seed for initialisation, sampling and shuffling; overrides every
    /// seed in the configuration.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long, value_name = "N")]
    threads: Option<usize>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let (args, overrides) = extract_overrides(std::env::args());
    let cli = Cli::parse_from(args);
    let (stage, common) = match cli.command {
        Command::Fit(a) => (Stage::Fit, a),
        Command::Index(a) => (Stage::Index, a),
        Command::Search(a) => (Stage::Search, a),
        Command::ReRank(a) => (Stage::ReRank, a),
    };
    let inv = Invocation {
        configs: common.configs,
        seed: common.seed,
        threads: common.threads,
        force: common.force,
        overrides,
    };
    match lir_cli::run(stage, &inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error[{}]: {err:#}", category(&err));
            ExitCode::FAILURE
        }
    }
}
