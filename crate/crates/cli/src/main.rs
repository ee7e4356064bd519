//! `erex` — event relation extraction over clustered, summarized contexts.
//!
//! Every subcommand reads and writes plain JSON/JSONL artifacts whose first
//! record echoes the producing configuration and the hashes of its inputs,
//! so any result can be traced back to exactly what produced it.

mod commands;
mod meta;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use commands::{
    cmd_ablate, cmd_cluster, cmd_eval, cmd_inspect, cmd_llm_run, cmd_summarize,
    cmd_synth, cmd_train, cmd_validate, load_file_config, AblateArgs, ClusterArgs,
    EvalArgs, InspectArgs, LlmRunArgs, SummarizeArgs, SynthArgs, TrainArgs,
    ValidateArgs,
};

const EXIT_CODES: &str = "Exit codes:
  0  success
  2  bad flags or configuration
  3  bad input data (malformed files, failed hash checks)
  4  filesystem errors
  5  pipeline failures
  6  validation found violations";

#[derive(Parser)]
#[command(
    name = "erex",
    version,
    about = "Event relation extraction with cluster-then-summarize contexts",
    after_help = EXIT_CODES
)]
struct Cli {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled corpus.
    Synth(SynthArgs),
    /// Check a corpus for structural violations.
    Validate(ValidateArgs),
    /// Group each document's sentences into intra/inter clusters.
    Cluster(ClusterArgs),
    /// Compress clusters into event-chain-prefixed summaries.
    Summarize(SummarizeArgs),
    /// Train the relation model and summary scorer.
    Train(TrainArgs),
    /// Score a checkpoint on one context strategy.
    Eval(EvalArgs),
    /// Score a checkpoint across all context strategies.
    Ablate(AblateArgs),
    /// Label pairs through a chat backend (offline mock by default).
    #[command(name = "llm-run")]
    LlmRun(LlmRunArgs),
    /// Dump a document and cross-check artifact hash chains.
    Inspect(InspectArgs),
}

fn run(cli: &Cli) -> Result<(), meta::CliError> {
    let file = load_file_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Synth(args) => cmd_synth(args, &file),
        Command::Validate(args) => cmd_validate(args),
        Command::Cluster(args) => cmd_cluster(args, &file),
        Command::Summarize(args) => cmd_summarize(args, &file),
        Command::Train(args) => cmd_train(args, &file),
        Command::Eval(args) => cmd_eval(args, &file),
        Command::Ablate(args) => cmd_ablate(args, &file),
        Command::LlmRun(args) => cmd_llm_run(args, &file),
        Command::Inspect(args) => cmd_inspect(args),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(error) = run(&cli) {
        eprintln!("error: {error}");
        std::process::exit(error.exit_code());
    }
}
