//! Append-only metrics, one JSON record per line.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::orchestrator::{TokenUsage, TurnReply};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricsKind {
    ToolInvocation,
    BackendRequest,
    Turn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsEvent {
    pub kind: MetricsKind,
    pub duration_ms: u64,
    pub token_usage: Option<TokenUsage>,
    /// Tool name and result, or turn outcome.
    pub outcome: String,
    pub session_id: String,
    pub timestamp: DateTime<Utc>,
}

/// Events for one finished turn: one per tool call, one for the backend
/// traffic when there was any, and one for the turn.
pub fn events_for_turn(session_id: &str, reply: &TurnReply) -> Vec<MetricsEvent> {
    let now = Utc::now();
    let event = |kind, duration_ms, token_usage, outcome: String| MetricsEvent {
        kind,
        duration_ms,
        token_usage,
        outcome,
        session_id: session_id.to_string(),
        timestamp: now,
    };
    let mut out: Vec<MetricsEvent> = reply
        .tool_timings
        .iter()
        .map(|t| {
            event(
                MetricsKind::ToolInvocation,
                t.duration_ms,
                None,
                format!("{}:{}", t.tool, if t.ok { "ok" } else { "failed" }),
            )
        })
        .collect();
    let m = &reply.metrics;
    if m.backend_requests > 0 {
        out.push(event(
            MetricsKind::BackendRequest,
            m.backend_latency_ms,
            m.token_usage,
            format!("requests:{}", m.backend_requests),
        ));
    }
    let ok = reply.results.iter().all(|r| r.ok);
    out.push(event(
        MetricsKind::Turn,
        m.latency_ms,
        m.token_usage,
        if ok { "ok".into() } else { "failed".into() },
    ));
    out
}

/// In-memory event list, mirrored to a file when a path is set.
#[derive(Debug, Default)]
pub struct MetricsLog {
    path: Option<PathBuf>,
    events: Mutex<Vec<MetricsEvent>>,
}

impl MetricsLog {
    pub fn new(path: Option<PathBuf>) -> Self {
        MetricsLog {
            path,
            events: Mutex::new(Vec::new()),
        }
    }

    pub fn record(&self, events: Vec<MetricsEvent>) -> std::io::Result<()> {
        let mut guard = self.events.lock().expect("metrics lock");
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            let mut text = String::new();
            for e in &events {
                text.push_str(&serde_json::to_string(e).expect("event serializes"));
                text.push('\n');
            }
            f.write_all(text.as_bytes())?;
        }
        guard.extend(events);
        Ok(())
    }

    pub fn events(&self) -> Vec<MetricsEvent> {
        self.events.lock().expect("metrics lock").clone()
    }

    /// Counts, durations and token totals per kind.
    pub fn summary(&self) -> Value {
        let events = self.events();
        let per_kind = |kind: MetricsKind| {
            let of: Vec<&MetricsEvent> = events.iter().filter(|e| e.kind == kind).collect();
            let total: u64 = of.iter().map(|e| e.duration_ms).sum();
            json!({
                "count": of.len(),
                "total_duration_ms": total,
                "mean_duration_ms": if of.is_empty() { 0.0 } else { total as f64 / of.len() as f64 },
                "prompt_tokens": of.iter().filter_map(|e| e.token_usage).map(|u| u.prompt_tokens).sum::<u64>(),
                "completion_tokens": of.iter().filter_map(|e| e.token_usage).map(|u| u.completion_tokens).sum::<u64>(),
            })
        };
        json!({
            "events": events.len(),
            "tool_invocation": per_kind(MetricsKind::ToolInvocation),
            "backend_request": per_kind(MetricsKind::BackendRequest),
            "turn": per_kind(MetricsKind::Turn),
            "recent": events.iter().rev().take(20).collect::<Vec<_>>(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_gets_one_record_per_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.ndjson");
        let log = MetricsLog::new(Some(path.clone()));
        let e = MetricsEvent {
            kind: MetricsKind::Turn,
            duration_ms: 3,
            token_usage: None,
            outcome: "ok".into(),
            session_id: "s".into(),
            timestamp: Utc::now(),
        };
        log.record(vec![e.clone(), e.clone()]).unwrap();
        log.record(vec![e]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        let back: MetricsEvent = serde_json::from_str(lines[2]).unwrap();
        assert_eq!(back.kind, MetricsKind::Turn);
        assert_eq!(log.summary()["turn"]["count"], 3);
    }
}
