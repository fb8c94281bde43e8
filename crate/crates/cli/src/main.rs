mod config;
mod dataset;
mod error;
mod eval;
mod prompts;
mod report;
mod tokens;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::ToolConfig;
use crate::error::{CliError, CliResult};

/// Grounding data preparation and evaluation.
///
/// Settings come from built-in defaults, then the --config file, then flags.
#[derive(Parser, Debug)]
#[command(name = "groundkit", version)]
struct Cli {
    /// TOML config file; unknown keys are rejected.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for per-image work [default: available cores].
    /// Outputs do not depend on this value.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode boxes to location tokens or decode tokens to boxes.
    #[command(subcommand)]
    Tokens(tokens::TokensCmd),
    /// Build grounding samples, splits and a build report from annotations.
    Build(dataset::BuildArgs),
    /// Score predictions against ground-truth samples.
    Eval(eval::EvalArgs),
    /// Build LLM queries or generate knowledge descriptions.
    #[command(subcommand)]
    Prompts(prompts::PromptsCmd),
    /// Render run archives as tables, chart data or rank counts.
    #[command(subcommand)]
    Report(report::ReportCmd),
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = ToolConfig::load(cli.config.as_deref())?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(CliError::io_msg("--workers must be at least 1"));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(CliError::io)?;
    pool.install(|| match cli.command {
        Command::Tokens(cmd) => tokens::run(cmd, cfg),
        Command::Build(args) => dataset::run(args, cfg),
        Command::Eval(args) => eval::run(args, cfg),
        Command::Prompts(cmd) => prompts::run(cmd, cfg),
        Command::Report(cmd) => report::run(cmd),
    })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { error::EXIT_IO } else { 0 };
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
