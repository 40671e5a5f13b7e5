//! Command-line entry points.

use std::io::{BufRead, Write};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use super::http::{serve, ServiceState};
use super::metrics::MetricsLog;
use super::render::{render, OutputFormat};
use super::repl::Repl;
use crate::case_io::CaseCatalog;
use crate::orchestrator::{BackendConfig, BackendMode, HttpBackend, Orchestrator};
use crate::session::{default_session_path, load_session, new_session_id, save_session, AgentContext};
use crate::tools::{default_registry, ToolEnv, ToolResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ANALYSIS_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "powerdesk", version, about = "Power-system analysis workbench with a conversational front end")]
pub struct Cli {
    /// Output style for analysis results.
    #[arg(long, value_enum, default_value_t, global = true)]
    pub format: OutputFormat,
    /// Directory for saved sessions.
    #[arg(long, global = true)]
    pub session_dir: Option<PathBuf>,
    /// Directory of `<name>.m` case files that shadow the built-in cases.
    #[arg(long, global = true)]
    pub case_dir: Option<PathBuf>,
    /// Chat-completions endpoint. Without it the deterministic planner is used.
    #[arg(long, global = true)]
    pub backend_url: Option<String>,
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Environment variable that holds the backend API key.
    #[arg(long, global = true, default_value = "POWERDESK_API_KEY")]
    pub api_key_env: String,
    /// Append metrics records (one JSON object per line) to this file.
    #[arg(long, global = true)]
    pub metrics_file: Option<PathBuf>,
    /// Run contingency sweeps on one thread.
    #[arg(long, global = true)]
    pub serial: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scope {
    Lines,
    Transformers,
    All,
}

impl Scope {
    fn as_str(self) -> &'static str {
        match self {
            Scope::Lines => "lines",
            Scope::Transformers => "transformers",
            Scope::All => "all",
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the AC optimal power flow for a case.
    Solve { case: String },
    /// Run an N-1 sweep from the optimal base point and rank the outages.
    N1 {
        case: String,
        #[arg(long, value_enum, default_value = "lines")]
        scope: Scope,
        #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..=50))]
        top: u64,
    },
    /// Evaluate one branch outage by branch index.
    Outage { case: String, index: u64 },
    /// Interactive session.
    Chat {
        /// Resume a saved session by id.
        #[arg(long)]
        session: Option<String>,
    },
    /// HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: IpAddr,
    },
    /// Move saved sessions in and out of the session directory.
    Session {
        #[command(subcommand)]
        action: SessionCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum SessionCommand {
    /// Print a saved session, or write it to a file.
    Export {
        id: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a session file and copy it into the session directory.
    Import { file: PathBuf },
}

impl Cli {
    fn tool_env(&self) -> ToolEnv {
        ToolEnv {
            catalog: CaseCatalog {
                dir: self.case_dir.clone(),
            },
            parallel_sweeps: !self.serial,
            ..Default::default()
        }
    }

    fn orchestrator(&self) -> Result<Orchestrator, String> {
        let registry = default_registry(self.tool_env());
        let Some(url) = &self.backend_url else {
            return Ok(Orchestrator::deterministic(registry));
        };
        let mut config = BackendConfig {
            mode: BackendMode::Live,
            endpoint: url.clone(),
            api_key_env: self.api_key_env.clone(),
            ..Default::default()
        };
        if let Some(m) = &self.model {
            config.model = m.clone();
        }
        let backend = HttpBackend::new(config.clone()).map_err(|e| e.to_string())?;
        Ok(Orchestrator::live(registry, config, Box::new(backend)))
    }
}

/// Parses `argv` (program name first) and runs the command. Returns the
/// process exit code.
pub fn run_command<I, T>(argv: I, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(err, "{text}") } else { write!(out, "{text}") };
            return code;
        }
    };
    match run(&cli, input, out, err) {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Analysis(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_ANALYSIS_FAILURE
        }
    }
}

enum Failure {
    Usage(String),
    Analysis(String),
}

fn io_failure(e: std::io::Error) -> Failure {
    Failure::Analysis(format!("I/O error: {e}"))
}

fn run(cli: &Cli, input: &mut dyn BufRead, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Solve { case } => analysis(cli, &[("solve_acopf_case", json!({"case_name": case}))], out, err),
        Command::N1 { case, scope, top } => analysis(
            cli,
            &[
                ("solve_base_case", json!({"case_name": case})),
                ("run_n1_contingency_analysis", json!({"scope": scope.as_str(), "top_k": top})),
            ],
            out,
            err,
        ),
        Command::Outage { case, index } => analysis(
            cli,
            &[
                ("solve_base_case", json!({"case_name": case})),
                ("analyze_specific_contingency", json!({"element": index})),
            ],
            out,
            err,
        ),
        Command::Chat { session } => {
            let orchestrator = cli.orchestrator().map_err(Failure::Usage)?;
            let ctx = match session {
                Some(id) => {
                    let dir = cli
                        .session_dir
                        .as_ref()
                        .ok_or_else(|| Failure::Usage("--session requires --session-dir".into()))?;
                    load_session(&default_session_path(dir, id)).map_err(|e| Failure::Analysis(e.to_string()))?
                }
                None => AgentContext::new(new_session_id()),
            };
            let metrics = MetricsLog::new(cli.metrics_file.clone());
            let mut repl = Repl::new(&orchestrator, ctx);
            repl.session_dir = cli.session_dir.clone();
            repl.metrics = Some(&metrics);
            repl.format = cli.format;
            repl.run(input, &mut &mut *out).map_err(io_failure)?;
            Ok(EXIT_OK)
        }
        Command::Serve { port, host } => {
            let orchestrator = cli.orchestrator().map_err(Failure::Usage)?;
            let metrics = Arc::new(MetricsLog::new(cli.metrics_file.clone()));
            let state = ServiceState::new(orchestrator, metrics, cli.session_dir.clone());
            let addr = SocketAddr::new(*host, *port);
            let rt = tokio::runtime::Runtime::new().map_err(io_failure)?;
            writeln!(out, "listening on http://{addr}").map_err(io_failure)?;
            out.flush().map_err(io_failure)?;
            rt.block_on(serve(addr, state)).map_err(io_failure)?;
            Ok(EXIT_OK)
        }
        Command::Session { action } => session_command(cli, action, out),
    }
    .inspect(|_| {
        let _ = err.flush();
    })
}

fn analysis(cli: &Cli, steps: &[(&str, Value)], out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    let registry = default_registry(cli.tool_env());
    let mut ctx = AgentContext::new(new_session_id());
    let mut results: Vec<ToolResult> = Vec::new();
    for (tool, args) in steps {
        let r = registry
            .invoke(tool, args, &mut ctx)
            .map_err(|e| Failure::Usage(e.to_string()))?;
        let ok = r.ok;
        results.push(r);
        if !ok {
            break;
        }
    }
    let failed = results.iter().find(|r| !r.ok).map(|r| {
        r.payload["error"]
            .as_str()
            .or_else(|| r.payload["clarification"].as_str())
            .unwrap_or("analysis failed")
            .to_string()
    });
    // The base-case step is plumbing; show it only when it is what failed.
    let shown: Vec<ToolResult> = if results.len() > 1 && failed.is_none() {
        results[1..].to_vec()
    } else {
        results.clone()
    };
    out.write_all(render(&shown, cli.format).as_bytes()).map_err(io_failure)?;
    if let Some(dir) = &cli.session_dir {
        let path = default_session_path(dir, &ctx.session_id);
        match save_session(&ctx, &path) {
            Ok(()) => writeln!(err, "session {} saved to {}", ctx.session_id, path.display()).map_err(io_failure)?,
            Err(e) => writeln!(err, "warning: session not saved: {e}").map_err(io_failure)?,
        }
    }
    match failed {
        Some(m) => Err(Failure::Analysis(m)),
        None => Ok(EXIT_OK),
    }
}

fn session_command(cli: &Cli, action: &SessionCommand, out: &mut dyn Write) -> Result<i32, Failure> {
    let dir = cli
        .session_dir
        .as_ref()
        .ok_or_else(|| Failure::Usage("session commands require --session-dir".into()))?;
    match action {
        SessionCommand::Export { id, out: target } => {
            let path = default_session_path(dir, id);
            let ctx = load_session(&path).map_err(|e| Failure::Analysis(e.to_string()))?;
            match target {
                Some(t) => {
                    save_session(&ctx, t).map_err(|e| Failure::Analysis(e.to_string()))?;
                    writeln!(out, "exported {id} to {}", t.display()).map_err(io_failure)?;
                }
                None => {
                    let text = std::fs::read_to_string(&path).map_err(io_failure)?;
                    out.write_all(text.as_bytes()).map_err(io_failure)?;
                }
            }
        }
        SessionCommand::Import { file } => {
            let ctx = load_session(file).map_err(|e| Failure::Analysis(e.to_string()))?;
            let path = default_session_path(dir, &ctx.session_id);
            save_session(&ctx, &path).map_err(|e| Failure::Analysis(e.to_string()))?;
            writeln!(out, "imported {}", ctx.session_id).map_err(io_failure)?;
        }
    }
    Ok(EXIT_OK)
}
