//! `critical-inker`: batch analysis, evaluation runs and the HTTP server.
//!
//! Exit codes: 0 success, 1 failure, 2 the essay has no argument,
//! 64 bad command line.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use inker_core::eval::{load_aae_corpus, load_snli, run_structure_eval, run_validity_eval, MetricsReport};
use inker_core::gateway::{build_provider, Gateway, ModelConfig, ProviderKind};
use inker_core::pipeline::{Pipeline, PipelineResult};
use inker_server::{AppState, ServerConfig};
use serde::Deserialize;
use thiserror::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_EMPTY_ARGUMENT: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Parser, Debug)]
#[command(name = "critical-inker", version, about = "Argument analysis for essays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Analyze one essay and write the result as JSON.
    Analyze(AnalyzeArgs),
    /// Score the pipeline against an annotated corpus.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Run the HTTP API.
    Serve(ServeArgs),
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    /// Model name; overrides config file and environment.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Serve model replies from a mock fixtures directory instead of a provider.
    #[arg(long, global = true, value_name = "DIR")]
    pub mock: Option<PathBuf>,
    /// JSON file with `model` and `pipeline` sections.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    #[default]
    Visual,
    Socratic,
}

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    pub file: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub mode: Mode,
    /// Write the result here; stdout otherwise.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    /// Keep per-stage timings in the JSON output.
    #[arg(long)]
    pub with_timings: bool,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Subcommand, Debug)]
pub enum EvalCommand {
    /// Main-claim accuracy and relation overlap on essays with standoff annotations.
    Structure {
        #[arg(long, value_name = "DIR")]
        corpus: PathBuf,
        #[command(flatten)]
        run: EvalRun,
    },
    /// Validity accuracy on premise/hypothesis pairs (JSON lines).
    Validity {
        #[arg(long, value_name = "FILE")]
        pairs: PathBuf,
        #[command(flatten)]
        run: EvalRun,
    },
}

#[derive(Args, Debug)]
pub struct EvalRun {
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here; stdout otherwise.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct ServeArgs {
    #[arg(long)]
    pub port: Option<u16>,
    /// Record directory; overrides INKER_STORE_DIR.
    #[arg(long, value_name = "DIR")]
    pub store: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Failed(String),
}

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct ConfigFile {
    model: ModelConfig,
    pipeline: inker_core::pipeline::PipelineSettings,
}

/// Settings in increasing precedence: defaults, config file, `INKER_*`
/// environment, flags.
pub fn resolve_config(args: &ModelArgs) -> Result<ServerConfig, CliError> {
    let mut base = ServerConfig::default();
    if let Some(path) = &args.config {
        let raw = std::fs::read_to_string(path).map_err(|source| CliError::Read {
            path: path.clone(),
            source,
        })?;
        let file: ConfigFile = serde_json::from_str(&raw)
            .map_err(|e| CliError::Config(format!("config file {}: {e}", path.display())))?;
        base.model = file.model;
        base.pipeline = file.pipeline;
    }
    let mut config = base.overlay_env().map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(dir) = &args.mock {
        config.mock_dir = Some(dir.clone());
        if config.model.provider != ProviderKind::Mock {
            config.model = ModelConfig::mock();
        }
    }
    if let Some(name) = &args.model {
        config.model.model_name = name.clone();
    }
    Ok(config)
}

pub fn pipeline(config: &ServerConfig) -> Result<Pipeline, CliError> {
    let provider = build_provider(&config.model, config.mock_dir.as_deref())
        .map_err(|e| CliError::Config(e.to_string()))?;
    let gateway = Arc::new(Gateway::new(provider, config.model.clone()));
    Ok(Pipeline::new(gateway, config.pipeline))
}

fn write_output(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|source| CliError::Write {
            path: path.to_path_buf(),
            source,
        }),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Human summary of one analysis.
pub fn summary(result: &PipelineResult, mode: Mode) -> String {
    if result.empty_argument {
        return "No argument found: the essay has no main claim with supporting reasons.\n".into();
    }
    let mut s = String::new();
    s.push_str(&format!("claim:      {}\n", result.analysis.claim_quote));
    s.push_str(&format!("relations:  {}\n", result.analysis.relations.len()));
    s.push_str(&format!("invalid:    {}\n", result.invalid_count()));
    if !result.evaluated.failed.is_empty() {
        s.push_str(&format!("unevaluated: {}\n", result.evaluated.failed.len()));
    }
    if !result.dropped.is_empty() {
        s.push_str(&format!("unanchored quotes dropped: {}\n", result.dropped.len()));
    }
    let t = result.timings;
    s.push_str(&format!(
        "timings:    structure {:.2}s, validity {:.2}s, plan {:.2}s\n",
        t.structure, t.validity, t.plan
    ));
    if mode == Mode::Socratic {
        s.push_str(&format!("plan steps: {}\n", result.plan.len()));
        for step in &result.plan.steps {
            s.push_str(&format!("  {}. {}\n", step.step_number, step.description));
        }
    }
    s
}

async fn analyze(args: AnalyzeArgs) -> Result<i32, CliError> {
    let text = std::fs::read_to_string(&args.file).map_err(|source| CliError::Read {
        path: args.file.clone(),
        source,
    })?;
    let config = resolve_config(&args.model)?;
    let pipeline = pipeline(&config)?;
    let result = pipeline.run(&text).await.map_err(|e| CliError::Failed(e.to_string()))?;
    let json = if args.with_timings {
        serde_json::to_string_pretty(&result).expect("plain data")
    } else {
        result.canonical_json()
    };
    write_output(args.out.as_deref(), &json)?;
    let summary = summary(&result, args.mode);
    if args.out.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    Ok(if result.empty_argument { EXIT_EMPTY_ARGUMENT } else { EXIT_OK })
}

fn report_out(report: &MetricsReport, out: Option<&Path>) -> Result<i32, CliError> {
    let json = serde_json::to_string_pretty(report).expect("plain data");
    write_output(out, &json)?;
    if out.is_some() {
        print!("{}", report.table());
    } else {
        eprint!("{}", report.table());
    }
    Ok(EXIT_OK)
}

async fn eval(command: EvalCommand) -> Result<i32, CliError> {
    match command {
        EvalCommand::Structure { corpus, run } => {
            let essays = load_aae_corpus(&corpus).map_err(|e| CliError::Failed(e.to_string()))?;
            let config = resolve_config(&run.model)?;
            let pipeline = pipeline(&config)?;
            let source = corpus.display().to_string();
            let report = run_structure_eval(&pipeline, &essays, run.n, run.seed, &source)
                .await
                .map_err(|e| CliError::Failed(e.to_string()))?;
            report_out(&report, run.out.as_deref())
        }
        EvalCommand::Validity { pairs, run } => {
            let set = load_snli(&pairs).map_err(|e| CliError::Failed(e.to_string()))?;
            if set.skipped > 0 {
                log::info!("{} pairs without a gold label skipped", set.skipped);
            }
            let config = resolve_config(&run.model)?;
            let pipeline = pipeline(&config)?;
            let source = pairs.display().to_string();
            let report = run_validity_eval(&pipeline, &set.pairs, run.n, run.seed, &source)
                .await
                .map_err(|e| CliError::Failed(e.to_string()))?;
            report_out(&report, run.out.as_deref())
        }
    }
}

async fn serve(args: ServeArgs) -> Result<i32, CliError> {
    let mut config = resolve_config(&args.model)?;
    if let Some(port) = args.port {
        config.port = port;
    }
    if let Some(dir) = args.store {
        config.store_dir = Some(dir);
    }
    let listener = inker_server::bind(config.port)
        .await
        .map_err(|e| CliError::Failed(e.to_string()))?;
    let state = AppState::from_config(config).map_err(|e| CliError::Failed(e.to_string()))?;
    eprintln!("listening on {}", listener.local_addr().map_err(|e| CliError::Failed(e.to_string()))?);
    inker_server::serve(listener, state, async {
        if tokio::signal::ctrl_c().await.is_err() {
            std::future::pending::<()>().await;
        }
        eprintln!("shutting down");
    })
    .await
    .map_err(|e| CliError::Failed(e.to_string()))?;
    Ok(EXIT_OK)
}

pub async fn execute(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Analyze(args) => analyze(args).await,
        Command::Eval(command) => eval(command).await,
        Command::Serve(args) => serve(args).await,
    }
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return EXIT_FAILURE;
        }
    };
    match runtime.block_on(execute(cli)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(&e, CliError::Config(m) if !m.contains("--mock")) {
                eprintln!("hint: set ANTHROPIC_API_KEY or OPENAI_API_KEY (INKER_PROVIDER picks one), or pass --mock <fixtures dir>");
            }
            EXIT_FAILURE
        }
    }
}
