//! Thin CLI over [`deprofile::pipeline`]: one subcommand per stage plus
//! `run` for the whole sequence. All behavior lives in the library.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use deprofile::pipeline::{run_all, run_stage, PipelineContext, Stage};

#[derive(Parser)]
#[command(
    name = "deprofile-forge",
    version,
    about = "Builds synthetic depressive-patient profiles and evaluates simulated interviews"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct StageArgs {
    /// Run configuration (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Dotted-path overrides applied before hashing, e.g. `coc.horizon_days=30`.
    #[arg(long = "set", value_name = "KEY=VALUE", value_parser = parse_override)]
    set: Vec<String>,
    /// Validate configuration and inputs without writing artifacts.
    #[arg(long)]
    dry_run: bool,
}

/// A malformed override is a command-line mistake, so clap rejects it and
/// the process exits with the usage code.
fn parse_override(raw: &str) -> Result<String, String> {
    match raw.split_once('=') {
        Some((key, _)) if !key.trim().is_empty() => Ok(raw.to_string()),
        _ => Err(format!("override {raw:?} is not KEY=VALUE")),
    }
}

#[derive(Args)]
struct PromptStageArgs {
    #[command(flatten)]
    stage: StageArgs,
    /// Prompt component selection: an ablation name or a tag list like `B,R,P`.
    #[arg(long, value_name = "TAGS")]
    tags: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Validate and normalize the three source corpora.
    Ingest(StageArgs),
    /// Merge counseling and assessment skeletons (stage 1).
    Match(StageArgs),
    /// Attach ranked social candidates to each skeleton (stage 2).
    Expand(StageArgs),
    /// Build temporal graphs and memory cards for selected candidates.
    Coc(StageArgs),
    /// Assemble patient system prompts.
    Prompt(PromptStageArgs),
    /// Run scripted interviews against the patient backend.
    Interview(StageArgs),
    /// Compute realism, diversity, judge, and citation metrics.
    Eval(StageArgs),
    /// Render the final report from the metrics file.
    Report(StageArgs),
    /// Run every stage in order.
    Run(StageArgs),
}

impl Command {
    fn stage(&self) -> Option<Stage> {
        match self {
            Command::Ingest(_) => Some(Stage::Ingest),
            Command::Match(_) => Some(Stage::Match),
            Command::Expand(_) => Some(Stage::Expand),
            Command::Coc(_) => Some(Stage::Coc),
            Command::Prompt(_) => Some(Stage::Prompt),
            Command::Interview(_) => Some(Stage::Interview),
            Command::Eval(_) => Some(Stage::Eval),
            Command::Report(_) => Some(Stage::Report),
            Command::Run(_) => None,
        }
    }

    fn args(&self) -> &StageArgs {
        match self {
            Command::Ingest(a)
            | Command::Match(a)
            | Command::Expand(a)
            | Command::Coc(a)
            | Command::Interview(a)
            | Command::Eval(a)
            | Command::Report(a)
            | Command::Run(a) => a,
            Command::Prompt(p) => &p.stage,
        }
    }
}

fn execute(command: &Command) -> deprofile::Result<()> {
    let args = command.args();
    let mut overrides = args.set.clone();
    if let Command::Prompt(p) = command {
        if let Some(tags) = &p.tags {
            overrides.push(format!("prompt.tags={tags}"));
        }
    }
    let ctx = PipelineContext::new(&args.config, &overrides, args.dry_run)?;
    log::info!("run directory {}", ctx.run_dir.display());
    match command.stage() {
        Some(stage) => run_stage(&ctx, stage),
        None => run_all(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    // Usage errors exit 1; clap reserves that default for help/version only.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
