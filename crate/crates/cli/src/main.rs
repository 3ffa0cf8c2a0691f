mod commands;
mod run_dir;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "rasg", version, about = "Reader-aware abstractive summarization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with train/dev/test splits.
    MakeCorpus(commands::make_corpus::Args),
    /// Train a model or baseline on a corpus.
    Train(commands::train::Args),
    /// Score checkpoints and/or LEAD1 on a corpus split.
    Eval(commands::eval::Args),
    /// Denoising recall and focus distance for every checkpoint of a run.
    Diagnose(commands::diagnose::Args),
    /// Finite-difference gradient check on a tiny instance.
    GradCheck(commands::grad_check::Args),
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let argv: Vec<String> = std::env::args().collect();
    match cli.command {
        Command::MakeCorpus(a) => commands::make_corpus::run(a, &argv),
        Command::Train(a) => commands::train::run(a, &argv),
        Command::Eval(a) => commands::eval::run(a, &argv),
        Command::Diagnose(a) => commands::diagnose::run(a, &argv),
        Command::GradCheck(a) => commands::grad_check::run(a),
    }
}
