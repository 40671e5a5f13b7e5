//! Line-oriented conversational loop.

use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use super::metrics::{events_for_turn, MetricsLog};
use super::render::{render, OutputFormat};
use crate::orchestrator::{Orchestrator, Transcript};
use crate::session::{default_session_path, load_session, save_session, AgentContext, Freshness};

pub struct Repl<'a> {
    pub orchestrator: &'a Orchestrator,
    pub ctx: AgentContext,
    pub transcript: Transcript,
    pub session_dir: Option<PathBuf>,
    pub metrics: Option<&'a MetricsLog>,
    pub format: OutputFormat,
}

const HELP: &str = "Ask in plain language, e.g. \"Solve IEEE 118.\".\n\
Commands: :status, :save [path], :load <path|session id>, :help, :quit\n";

impl<'a> Repl<'a> {
    pub fn new(orchestrator: &'a Orchestrator, ctx: AgentContext) -> Self {
        Repl {
            orchestrator,
            ctx,
            transcript: Transcript::default(),
            session_dir: None,
            metrics: None,
            format: OutputFormat::Table,
        }
    }

    /// Runs until `:quit` or end of input. Only I/O errors on the streams
    /// end the loop early.
    pub fn run(&mut self, input: impl BufRead, out: &mut impl Write) -> io::Result<()> {
        writeln!(out, "powerdesk session {}. {}", self.ctx.session_id, HELP.lines().next().unwrap_or(""))?;
        write!(out, "> ")?;
        out.flush()?;
        for line in input.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
            } else if let Some(cmd) = line.strip_prefix(':') {
                if !self.meta(cmd, out)? {
                    return Ok(());
                }
            } else {
                self.turn(line, out)?;
            }
            write!(out, "> ")?;
            out.flush()?;
        }
        writeln!(out)
    }

    fn turn(&mut self, utterance: &str, out: &mut impl Write) -> io::Result<()> {
        let reply = self.orchestrator.handle_turn(utterance, &mut self.ctx, &mut self.transcript);
        writeln!(out, "{}", reply.response)?;
        let tables = render(&reply.results, self.format);
        if !tables.is_empty() {
            writeln!(out, "\n{tables}")?;
        }
        if let Some(m) = self.metrics {
            if let Err(e) = m.record(events_for_turn(&self.ctx.session_id, &reply)) {
                writeln!(out, "(metrics not written: {e})")?;
            }
        }
        Ok(())
    }

    fn session_path(&self, arg: &str) -> Option<PathBuf> {
        let p = Path::new(arg);
        if !arg.is_empty() && (p.exists() || arg.contains('/') || arg.ends_with(".json")) {
            return Some(p.to_path_buf());
        }
        let id = if arg.is_empty() { &self.ctx.session_id } else { arg };
        self.session_dir.as_ref().map(|d| default_session_path(d, id))
    }

    /// Returns false on `:quit`.
    fn meta(&mut self, cmd: &str, out: &mut impl Write) -> io::Result<bool> {
        let (name, arg) = cmd.split_once(' ').map_or((cmd, ""), |(a, b)| (a, b.trim()));
        match name {
            "quit" | "q" | "exit" => return Ok(false),
            "help" => write!(out, "{HELP}")?,
            "status" => self.status(out)?,
            "save" => match self.session_path(arg) {
                Some(path) => match save_session(&self.ctx, &path) {
                    Ok(()) => writeln!(out, "saved to {}", path.display())?,
                    Err(e) => writeln!(out, "save failed: {e}")?,
                },
                None => writeln!(out, "no session directory configured; use :save <path>")?,
            },
            "load" if arg.is_empty() => writeln!(out, "usage: :load <path|session id>")?,
            "load" => match self.session_path(arg) {
                Some(path) => match load_session(&path) {
                    Ok(ctx) => {
                        self.ctx = ctx;
                        self.transcript = Transcript::default();
                        writeln!(out, "loaded session {}", self.ctx.session_id)?;
                        self.status(out)?;
                    }
                    Err(e) => writeln!(out, "load failed: {e}")?,
                },
                None => writeln!(out, "no session directory configured; use :load <path>")?,
            },
            other => writeln!(out, "unknown command :{other}\n{HELP}")?,
        }
        Ok(true)
    }

    fn status(&self, out: &mut impl Write) -> io::Result<()> {
        let s = self.ctx.summary();
        writeln!(
            out,
            "session {} version {}, case {}, {} modification(s)",
            s.session_id,
            s.version,
            s.case_name.as_deref().unwrap_or("(none)"),
            s.diff_count
        )?;
        for (kind, f) in &s.freshness {
            match f {
                Freshness::Reuse => writeln!(out, "  {}: fresh", kind.as_str())?,
                Freshness::Stale { missing: true, advice, .. } => writeln!(out, "  {}: missing ({advice})", kind.as_str())?,
                Freshness::Stale { since, advice, .. } => {
                    writeln!(out, "  {}: stale after {} edit(s) ({advice})", kind.as_str(), since.len())?
                }
            }
        }
        Ok(())
    }
}
