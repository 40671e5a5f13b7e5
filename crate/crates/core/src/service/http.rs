//! JSON API over HTTP/1.1. Sessions run concurrently; turns within one
//! session are serialized and a second concurrent turn gets 409.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde_json::{json, Value};

use super::metrics::{events_for_turn, MetricsLog};
use crate::contingency::{rank_critical, SweepOptions};
use crate::orchestrator::{Orchestrator, Transcript};
use crate::session::{default_session_path, load_session, new_session_id, save_session, AgentContext, ArtifactKind};
use crate::tools::critical_json;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    error: &'static str,
    detail: String,
}

impl ApiError {
    fn new(status: StatusCode, error: &'static str, detail: impl Into<String>) -> Self {
        ApiError {
            status,
            error,
            detail: detail.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"error": self.error, "detail": self.detail}))).into_response()
    }
}

type ApiResult = Result<(StatusCode, Json<Value>), ApiError>;

struct SessionSlot {
    busy: AtomicBool,
    state: Mutex<(AgentContext, Transcript)>,
}

/// Clears the busy flag when the turn ends, including by panic.
struct BusyGuard(Arc<SessionSlot>);

impl Drop for BusyGuard {
    fn drop(&mut self) {
        self.0.busy.store(false, Ordering::Release);
    }
}

pub struct ServiceState {
    orchestrator: Orchestrator,
    sessions: Mutex<HashMap<String, Arc<SessionSlot>>>,
    pub metrics: Arc<MetricsLog>,
    /// Sessions are saved here after every turn and loaded from here on
    /// first access.
    session_dir: Option<PathBuf>,
}

impl ServiceState {
    pub fn new(orchestrator: Orchestrator, metrics: Arc<MetricsLog>, session_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(ServiceState {
            orchestrator,
            sessions: Mutex::new(HashMap::new()),
            metrics,
            session_dir,
        })
    }

    fn slot(&self, id: &str) -> Result<Arc<SessionSlot>, ApiError> {
        let mut sessions = self.sessions.lock().expect("sessions lock");
        if let Some(s) = sessions.get(id) {
            return Ok(s.clone());
        }
        let missing = || ApiError::new(StatusCode::NOT_FOUND, "unknown_session", format!("no session '{id}'"));
        let path = self.session_dir.as_ref().map(|d| default_session_path(d, id)).ok_or_else(missing)?;
        if !path.is_file() {
            return Err(missing());
        }
        let ctx = load_session(&path)
            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "session_load_failed", e.to_string()))?;
        let slot = Arc::new(SessionSlot {
            busy: AtomicBool::new(false),
            state: Mutex::new((ctx, Transcript::default())),
        });
        sessions.insert(id.to_string(), slot.clone());
        Ok(slot)
    }
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/api/sessions", post(create_session))
        .route("/api/sessions/{id}", get(get_session))
        .route("/api/sessions/{id}/chat", post(chat))
        .route("/api/sessions/{id}/solution", get(solution))
        .route("/api/sessions/{id}/contingencies", get(contingencies))
        .route("/api/metrics", get(metrics))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint") })
        .with_state(state)
}

pub async fn serve(addr: SocketAddr, state: Arc<ServiceState>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

fn lock_state(slot: &SessionSlot) -> std::sync::MutexGuard<'_, (AgentContext, Transcript)> {
    slot.state.lock().unwrap_or_else(|p| p.into_inner())
}

async fn create_session(State(st): State<Arc<ServiceState>>) -> ApiResult {
    let id = new_session_id();
    let ctx = AgentContext::new(id.clone());
    let summary = ctx.summary();
    st.sessions.lock().expect("sessions lock").insert(
        id.clone(),
        Arc::new(SessionSlot {
            busy: AtomicBool::new(false),
            state: Mutex::new((ctx, Transcript::default())),
        }),
    );
    Ok((StatusCode::CREATED, Json(json!({"session_id": id, "summary": summary}))))
}

async fn get_session(State(st): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult {
    let slot = st.slot(&id)?;
    let guard = lock_state(&slot);
    let (ctx, transcript) = &*guard;
    Ok((
        StatusCode::OK,
        Json(json!({"summary": ctx.summary(), "transcript": transcript, "busy": slot.busy.load(Ordering::Acquire)})),
    ))
}

async fn chat(State(st): State<Arc<ServiceState>>, Path(id): Path<String>, body: Bytes) -> ApiResult {
    let doc: Value = serde_json::from_slice(&body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", format!("body is not JSON: {e}")))?;
    let utterance = doc
        .get("utterance")
        .and_then(Value::as_str)
        .map(str::trim)
        .filter(|u| !u.is_empty())
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_body", "expected {\"utterance\": \"...\"}"))?
        .to_string();
    let slot = st.slot(&id)?;
    if slot
        .busy
        .compare_exchange(false, true, Ordering::AcqRel, Ordering::Acquire)
        .is_err()
    {
        return Err(ApiError::new(
            StatusCode::CONFLICT,
            "turn_in_progress",
            "this session is already handling a turn; retry when it finishes",
        ));
    }
    let guard = BusyGuard(slot.clone());
    let st2 = st.clone();
    let outcome = tokio::task::spawn_blocking(move || {
        let _guard = guard;
        let mut state = lock_state(&slot);
        let (ctx, transcript) = &mut *state;
        let reply = st2.orchestrator.handle_turn(&utterance, ctx, transcript);
        let mut warnings = Vec::new();
        if let Err(e) = st2.metrics.record(events_for_turn(&ctx.session_id, &reply)) {
            warnings.push(format!("metrics not written: {e}"));
        }
        if let Some(dir) = &st2.session_dir {
            if let Err(e) = save_session(ctx, &default_session_path(dir, &ctx.session_id)) {
                warnings.push(format!("session not saved: {e}"));
            }
        }
        let results: Vec<Value> = reply
            .results
            .iter()
            .map(|r| {
                json!({
                    "tool": r.tool_name,
                    "ok": r.ok,
                    "artifact": r.artifact.map(|a| a.to_string()),
                    "payload": r.payload,
                    "validation": r.validation,
                })
            })
            .collect();
        json!({
            "response": reply.response,
            "provenance": reply.provenance,
            "workflow": reply.workflow,
            "agent": reply.agent,
            "results": results,
            "metrics": reply.metrics,
            "summary": ctx.summary(),
            "warnings": warnings,
        })
    })
    .await
    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?;
    Ok((StatusCode::OK, Json(outcome)))
}

async fn solution(State(st): State<Arc<ServiceState>>, Path(id): Path<String>) -> ApiResult {
    let slot = st.slot(&id)?;
    let guard = lock_state(&slot);
    let ctx = &guard.0;
    let Some(a) = ctx.latest_acopf() else {
        return Err(ApiError::new(
            StatusCode::NOT_FOUND,
            "no_solution",
            "no optimal power flow has been solved in this session; ask to solve a case first",
        ));
    };
    let fresh = ctx.freshness_check(ArtifactKind::Acopf);
    Ok((
        StatusCode::OK,
        Json(json!({
            "artifact": format!("acopf@{}", a.version),
            "fresh": fresh.is_reuse(),
            "freshness": fresh,
            "solution": a.value,
            "validation": a.validation,
            "provenance": a.provenance,
        })),
    ))
}

async fn contingencies(
    State(st): State<Arc<ServiceState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult {
    let top = match q.get("top") {
        None => 5,
        Some(t) => t
            .parse::<usize>()
            .ok()
            .filter(|k| (1..=500).contains(k))
            .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "invalid_query", "top must be an integer in 1..=500"))?,
    };
    let slot = st.slot(&id)?;
    let guard = lock_state(&slot);
    let ctx = &guard.0;
    let Some(a) = ctx.latest_contingency() else {
        return Ok((
            StatusCode::NOT_FOUND,
            Json(json!({
                "error": "no_contingency_analysis",
                "detail": "no N-1 sweep has been run in this session; ask for the most critical contingencies first",
                "critical": [],
            })),
        ));
    };
    let r = &a.value;
    let ranking = rank_critical(&r.results, top, ctx.thresholds.v_low_pu, &SweepOptions::default().weights);
    let fresh = ctx.freshness_check(ArtifactKind::Contingency);
    Ok((
        StatusCode::OK,
        Json(json!({
            "artifact": format!("contingency@{}", a.version),
            "fresh": fresh.is_reuse(),
            "freshness": fresh,
            "case_name": r.case_name,
            "base_reference": r.base_reference,
            "summary": r.summary_stats,
            "max_loading_percent": r.max_loading_percent(),
            "critical": critical_json(&ranking, &r.results),
            "provenance": a.provenance,
        })),
    ))
}

async fn metrics(State(st): State<Arc<ServiceState>>) -> ApiResult {
    Ok((StatusCode::OK, Json(st.metrics.summary())))
}
