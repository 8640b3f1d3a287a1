use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use eipl_core::eval::{self, BatchOptions, EvalError};
use eipl_core::VerdictKind;
use eipl_service::backend::{build_backend, BackendKind, BackendOptions};
use eipl_service::config::Config;
use eipl_service::{api, load_bank, open_grader, pipeline};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(name = "eipl", version, about = "Grade plain-language code explanations by generating and testing code")]
struct Cli {
    /// TOML file with [limits], [policy], [llm], [prompt] and [sandbox] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print the effective prompt template and exit.
    #[arg(long)]
    print_template: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the HTTP service.
    Serve(ServeArgs),
    /// Batch evaluation of translation datasets.
    #[command(subcommand)]
    Eval(EvalCommand),
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, value_enum)]
    backend: BackendKind,
    /// Replay source for `replay`; recording target for `live`.
    #[arg(long)]
    fixtures: Option<PathBuf>,
    /// JSON-lines reply script for `mock`.
    #[arg(long)]
    mock_script: Option<PathBuf>,
    /// Append the key of every backend request to this file.
    #[arg(long)]
    call_log: Option<PathBuf>,
}

impl BackendArgs {
    fn options(&self) -> BackendOptions {
        BackendOptions {
            kind: self.backend,
            fixtures: self.fixtures.clone(),
            mock_script: self.mock_script.clone(),
            call_log: self.call_log.clone(),
        }
    }
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value = "bank")]
    bank: PathBuf,
    /// Selects and orders questions and sets their instruction modes.
    #[arg(long)]
    profile: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, default_value = "data/attempts.jsonl")]
    journal: PathBuf,
    /// Directory of built web client assets, served under `/`.
    #[arg(long)]
    ui: Option<PathBuf>,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Grade every dataset row and write outcomes plus the report.
    Run(RunArgs),
    /// Render the report from an outcomes file.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    /// CSV with columns language,question_id,response_text[,respondent_id].
    #[arg(long)]
    dataset: PathBuf,
    #[command(flatten)]
    backend: BackendArgs,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "bank")]
    bank: PathBuf,
    /// Rows graded concurrently (0 picks the sandbox default).
    #[arg(long, default_value_t = 0)]
    workers: usize,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    outcomes: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Supplies question order and titles.
    #[arg(long, default_value = "bank")]
    bank: PathBuf,
}

const OUTCOMES_FILE: &str = "outcomes.jsonl";

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let cfg = Config::load(cli.config.as_deref())?;
    if cli.print_template {
        print!("{}", cfg.template()?.body());
        return Ok(ExitCode::SUCCESS);
    }
    match cli.command {
        Some(Command::Serve(args)) => serve(&cfg, args),
        Some(Command::Eval(EvalCommand::Run(args))) => eval_run(&cfg, args),
        Some(Command::Eval(EvalCommand::Report(args))) => eval_report(args),
        None => anyhow::bail!("no command given; see --help"),
    }
}

fn serve(cfg: &Config, args: ServeArgs) -> anyhow::Result<ExitCode> {
    let bank = load_bank(&args.bank, args.profile.as_deref())?;
    let backend = build_backend(&args.backend.options(), cfg)?;
    let grader = Arc::new(open_grader(cfg, bank, backend, &args.journal)?);
    tracing::info!(questions = grader.bank().len(), sessions = grader.session_ids().len(), "grader ready");
    let app = api::router(grader, args.ui.as_deref());

    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen).await.with_context(|| format!("binding {}", args.listen))?;
        // Tests read this line to find the port when binding to :0.
        println!("listening on {}", listener.local_addr()?);
        axum::serve(listener, app)
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await?;
        Ok(ExitCode::SUCCESS)
    })
}

fn eval_run(cfg: &Config, args: RunArgs) -> anyhow::Result<ExitCode> {
    let bank = load_bank(&args.bank, None)?;
    let dataset = eval::load_dataset(&args.dataset, &bank)?;
    let backend = build_backend(&args.backend.options(), cfg)?;
    let pipeline = pipeline(cfg, backend)?;
    let outcomes = args.out.join(OUTCOMES_FILE);
    let options = BatchOptions { workers: args.workers, cancel: None };
    let summary = match eval::run_batch(&dataset, &bank, &pipeline, &outcomes, &options) {
        Ok(s) => s,
        Err(e @ EvalError::Harness(_)) => {
            eprintln!("error: {e}");
            return Ok(ExitCode::from(2));
        }
        Err(e) => return Err(e.into()),
    };
    let rows = summary.rows();
    let (languages, questions) = eval::default_axes(&bank);
    let matrix = eval::aggregate(&rows, &languages, &questions);
    let written = eval::render_report(&matrix, &args.out)?;

    let correct = rows.iter().filter(|r| r.verdict.kind == VerdictKind::Correct).count();
    println!(
        "graded {} rows ({} correct), {} backend calls, {} outcomes reused, {} completions reused",
        rows.len(),
        correct,
        summary.backend_calls,
        summary.reused_outcomes,
        summary.reused_completions
    );
    println!("outcomes: {}", outcomes.display());
    for path in written {
        println!("report: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

fn eval_report(args: ReportArgs) -> anyhow::Result<ExitCode> {
    let bank = load_bank(&args.bank, None)?;
    let rows = eval::load_outcomes(&args.outcomes)?;
    let (languages, questions) = eval::default_axes(&bank);
    let matrix = eval::aggregate(&rows, &languages, &questions);
    for path in eval::render_report(&matrix, &args.out)? {
        println!("report: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}
