use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use prompttopic_core::pipeline::{load_config, run_stages, BackendKind, Overrides, PipelineError, Stage};

#[derive(Parser)]
#[command(name = "prompttopic", version, about = "Topic modeling by prompting an LLM")]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, global = true, default_value = "prompttopic.toml")]
    config: PathBuf,
    /// Overrides `llm.backend` from the config.
    #[arg(long, global = true, value_enum)]
    backend: Option<BackendKind>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Read and preprocess the corpus.
    Ingest,
    /// Ask the LLM for topics of every document.
    Generate,
    /// Merge topics down to k_target.
    Collapse,
    /// Build the 10-word topic representations.
    Represent,
    /// Compute NPMI and topic diversity.
    Evaluate,
    /// Word-intrusion sheets and scoring.
    Intrude {
        #[command(subcommand)]
        action: IntrudeAction,
    },
    /// Run stages in sequence.
    Run {
        /// Every stage from ingest to intrude make.
        #[arg(long, required = true)]
        all: bool,
    },
    /// Parse and check the config, then exit.
    Validate,
}

#[derive(Subcommand)]
enum IntrudeAction {
    /// Write the task sheet and its answer key.
    Make,
    /// Score a filled-in answer file.
    Score {
        #[arg(long)]
        answers: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run(cli: Cli) -> Result<(), PipelineError> {
    let overrides = Overrides { backend: cli.backend, seed: cli.seed };
    let cfg = load_config(&cli.config, &overrides)?;
    let stages = match cli.command {
        Command::Validate => {
            println!("{}: ok", cli.config.display());
            return Ok(());
        }
        Command::Ingest => vec![Stage::Ingest],
        Command::Generate => vec![Stage::Generate],
        Command::Collapse => vec![Stage::Collapse],
        Command::Represent => vec![Stage::Represent],
        Command::Evaluate => vec![Stage::Evaluate],
        Command::Intrude { action: IntrudeAction::Make } => vec![Stage::IntrudeMake],
        Command::Intrude { action: IntrudeAction::Score { answers } } => vec![Stage::IntrudeScore { answers }],
        Command::Run { .. } => Stage::all(),
    };
    for path in run_stages(&stages, &cfg)? {
        println!("{}", path.display());
    }
    Ok(())
}
