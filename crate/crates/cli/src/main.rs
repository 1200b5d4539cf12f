use std::io::IsTerminal;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bioimagepub::card::{Prompter, TerminalPrompter};
use bioimagepub::config::PipelineConfig;
use bioimagepub::hub::TOKEN_ENV;
use bioimagepub::pipeline::{run_inspect, run_publish, run_validate, PipelineError, PublishOptions};
use clap::{Args, Parser, Subcommand};

/// Convert an annotated bioimaging dataset into an AI-ready layout and
/// publish it to a dataset hub.
#[derive(Parser)]
#[command(name = "bioimagepub", version)]
struct Cli {
    /// Log each stage to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Summarize the source inventory without fetching any file.
    Inspect(ConfigArg),
    /// Run the full pipeline and upload.
    Publish(PublishArgs),
    /// Check a materialized workdir.
    Validate(ValidateArgs),
}

#[derive(Args)]
struct ConfigArg {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct PublishArgs {
    #[arg(long)]
    config: PathBuf,
    /// Stop before contacting the hub; the workdir is still written.
    #[arg(long)]
    dry_run: bool,
    /// Proceed even when the upload exceeds the size budget.
    #[arg(long)]
    ack_large_dataset: bool,
    /// Conversion and upload pool size.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u16).range(1..))]
    workers: u16,
    /// Card answers file; overrides `card_answers` in the config.
    #[arg(long)]
    answers: Option<PathBuf>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct ValidateArgs {
    /// Validate the workdir named in this config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    workdir: Option<PathBuf>,
}

fn load(path: &Path) -> Result<PipelineConfig, ExitCode> {
    PipelineConfig::load(path).map_err(|e| fail(&PipelineError::from(e)))
}

fn fail(e: &PipelineError) -> ExitCode {
    eprintln!("error [{}]: {e}", e.stage());
    let mut source = std::error::Error::source(e);
    while let Some(s) = source {
        eprintln!("  caused by: {s}");
        source = s.source();
    }
    ExitCode::from(e.exit_code() as u8)
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    match cli.command {
        Command::Inspect(args) => {
            let config = load(&args.config)?;
            let report = run_inspect(&config).map_err(|e| fail(&e))?;
            println!("{report}");
        }
        Command::Publish(args) => {
            let config = load(&args.config)?;
            let options = PublishOptions {
                dry_run: args.dry_run,
                acknowledge_large: args.ack_large_dataset,
                workers: usize::from(args.workers),
                answers: args.answers,
                token: std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty()),
            };
            let mut terminal = TerminalPrompter;
            let prompter: Option<&mut dyn Prompter> =
                if std::io::stdin().is_terminal() { Some(&mut terminal) } else { None };
            let report = run_publish(&config, &options, prompter).map_err(|e| fail(&e))?;
            println!("{report}");
        }
        Command::Validate(args) => {
            let workdir = match (args.workdir, args.config) {
                (Some(w), _) => w,
                (None, Some(c)) => load(&c)?.workdir,
                (None, None) => unreachable!("clap requires one of the two"),
            };
            let report = run_validate(&workdir);
            println!("{report}");
            if !report.is_valid() {
                return Err(ExitCode::from(1));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
