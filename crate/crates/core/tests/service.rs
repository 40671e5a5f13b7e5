use std::net::SocketAddr;
use std::sync::{mpsc, Arc};
use std::thread;
use std::time::Duration;

use powerdesk::orchestrator::{
    extract_numerals, AssistantAction, BackendConfig, BackendError, BackendReply, ChatBackend, ChatMessage,
    Orchestrator, Transcript,
};
use powerdesk::service::{router, MetricsLog, ServiceState};
use powerdesk::session::AgentContext;
use powerdesk::tools::{default_registry, ToolEnv};
use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde_json::{json, Value};

const DIALOGUE: [&str; 3] = [
    "Solve IEEE 118.",
    "Increase the load for bus 10 to 50MW",
    "what's the most critical contingencies in this network",
];

fn deterministic() -> Orchestrator {
    Orchestrator::deterministic(default_registry(ToolEnv {
        parallel_sweeps: true,
        ..Default::default()
    }))
}

struct Server {
    base: String,
    state: Arc<ServiceState>,
    client: Client,
}

impl Server {
    fn start(orchestrator: Orchestrator, metrics: MetricsLog, session_dir: Option<std::path::PathBuf>) -> Self {
        let state = ServiceState::new(orchestrator, Arc::new(metrics), session_dir);
        let (tx, rx) = mpsc::channel::<SocketAddr>();
        let st = state.clone();
        thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
                tx.send(listener.local_addr().unwrap()).unwrap();
                axum::serve(listener, router(st)).await.unwrap();
            });
        });
        let addr = rx.recv().unwrap();
        Server {
            base: format!("http://{addr}"),
            state,
            client: Client::builder().timeout(Duration::from_secs(120)).build().unwrap(),
        }
    }

    fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.client.get(format!("{}{path}", self.base)).send().unwrap();
        (r.status(), r.json().unwrap())
    }

    fn post(&self, path: &str, body: &str) -> (StatusCode, Value) {
        let r = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body.to_string())
            .send()
            .unwrap();
        (r.status(), r.json().unwrap())
    }

    fn new_session(&self) -> String {
        let (s, v) = self.post("/api/sessions", "{}");
        assert_eq!(s, StatusCode::CREATED);
        v["session_id"].as_str().unwrap().to_string()
    }

    fn chat(&self, id: &str, utterance: &str) -> (StatusCode, Value) {
        self.post(&format!("/api/sessions/{id}/chat"), &json!({"utterance": utterance}).to_string())
    }
}

/// Every numeral in the response has an entry in the provenance map.
fn assert_provenance_covers(reply: &Value) {
    let text = reply["response"].as_str().unwrap();
    let shown: Vec<String> = reply["provenance"]
        .as_array()
        .unwrap()
        .iter()
        .map(|p| p["text"].as_str().unwrap().to_string())
        .collect();
    for tok in extract_numerals(text) {
        assert!(shown.contains(&tok.text), "numeral {} lacks provenance in: {text}", tok.text);
    }
}

#[test]
fn dialogue_over_http_matches_in_process_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let metrics_path = dir.path().join("metrics.ndjson");
    let server = Server::start(
        deterministic(),
        MetricsLog::new(Some(metrics_path.clone())),
        Some(dir.path().join("sessions")),
    );
    let id = server.new_session();

    let (status, empty) = server.get(&format!("/api/sessions/{id}/contingencies?top=5"));
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(empty["error"], "no_contingency_analysis");
    assert!(empty["detail"].as_str().unwrap().contains("critical contingencies"));

    let local = deterministic();
    let mut ctx = AgentContext::new("local");
    let mut transcript = Transcript::default();
    let mut replies = Vec::new();
    for u in DIALOGUE {
        let (status, reply) = server.chat(&id, u);
        assert_eq!(status, StatusCode::OK, "{reply}");
        let expected = local.handle_turn(u, &mut ctx, &mut transcript);
        assert_eq!(reply["response"], expected.response);
        assert_eq!(reply["provenance"], serde_json::to_value(&expected.provenance).unwrap());
        assert_provenance_covers(&reply);
        replies.push(reply);
    }
    assert_eq!(replies[1]["summary"]["freshness"]["acopf"]["state"], "reuse");
    assert_eq!(replies[1]["summary"]["freshness"]["contingency"]["state"], "stale");
    assert_eq!(replies[2]["workflow"]["steps"].as_array().unwrap().len(), 2);

    let (status, ranking) = server.get(&format!("/api/sessions/{id}/contingencies?top=5"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ranking["critical"].as_array().unwrap().len(), 5);
    assert_eq!(ranking["critical"], replies[2]["results"][1]["payload"]["critical"]);
    assert_eq!(ranking["fresh"], true);

    let (status, sol) = server.get(&format!("/api/sessions/{id}/solution"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(sol["fresh"], true);
    assert_eq!(
        sol["solution"]["objective_cost"],
        replies[1]["results"][0]["payload"]["objective_cost"]
    );

    let (status, session) = server.get(&format!("/api/sessions/{id}"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(session["summary"]["diff_count"], 1);
    let turns = session["transcript"]["turns"].as_array().unwrap();
    assert_eq!(turns.len(), transcript.turns.len());

    let (_, m) = server.get("/api/metrics");
    assert_eq!(m["turn"]["count"], 3);
    assert_eq!(m["tool_invocation"]["count"], 4);
    let lines = std::fs::read_to_string(&metrics_path).unwrap();
    let kinds: Vec<String> = lines
        .lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap()["kind"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(kinds.iter().filter(|k| *k == "turn").count(), 3);

    // A fresh service over the same directory picks the session up from disk.
    let reopened = Server::start(deterministic(), MetricsLog::default(), Some(dir.path().join("sessions")));
    let (status, again) = reopened.get(&format!("/api/sessions/{id}"));
    assert_eq!(status, StatusCode::OK);
    assert_eq!(again["summary"]["diff_count"], 1);
    assert_eq!(server.state.metrics.events().len(), kinds.len());
}

#[test]
fn request_errors_use_status_codes() {
    let server = Server::start(deterministic(), MetricsLog::default(), None);
    let (s, v) = server.get("/api/sessions/nope");
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "unknown_session");
    let id = server.new_session();
    let (s, v) = server.post(&format!("/api/sessions/{id}/chat"), "not json");
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["detail"].is_string());
    let (s, _) = server.post(&format!("/api/sessions/{id}/chat"), r#"{"utterance": "  "}"#);
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, _) = server.get(&format!("/api/sessions/{id}/contingencies?top=0"));
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let (s, v) = server.get(&format!("/api/sessions/{id}/solution"));
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"], "no_solution");

    let (s, v) = server.chat(&id, "Solve IEEE 14");
    assert_eq!(s, StatusCode::OK);
    assert!(v["response"].as_str().unwrap().starts_with("case14 solved"));
    assert!(!v["provenance"].as_array().unwrap().is_empty());
    assert_provenance_covers(&v);
}

/// Answers after a pause, so a second request can arrive mid-turn.
struct SlowBackend;

impl ChatBackend for SlowBackend {
    fn step(&self, _: &[ChatMessage], _: &[Value]) -> Result<BackendReply, BackendError> {
        thread::sleep(Duration::from_millis(800));
        Ok(BackendReply {
            action: AssistantAction::FinalText {
                text: "Hello.".into(),
            },
            usage: None,
            latency_ms: 800,
        })
    }
}

#[test]
fn concurrent_turn_on_one_session_gets_conflict() {
    let orchestrator = Orchestrator::live(
        default_registry(ToolEnv::default()),
        BackendConfig::default(),
        Box::new(SlowBackend),
    );
    let server = Arc::new(Server::start(orchestrator, MetricsLog::default(), None));
    let id = server.new_session();
    let other = server.new_session();
    let first = {
        let (server, id) = (server.clone(), id.clone());
        thread::spawn(move || server.chat(&id, "hi"))
    };
    thread::sleep(Duration::from_millis(200));
    let (s, v) = server.chat(&id, "hi again");
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(v["error"], "turn_in_progress");
    // Other sessions are not blocked.
    let (s, _) = server.chat(&other, "hi");
    assert_eq!(s, StatusCode::OK);
    let (s, v) = first.join().unwrap();
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["response"], "Hello.");
    let (s, _) = server.chat(&id, "and again");
    assert_eq!(s, StatusCode::OK);
    let (_, m) = server.get("/api/metrics");
    assert_eq!(m["backend_request"]["count"], 3);
}
