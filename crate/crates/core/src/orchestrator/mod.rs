//! The agent layer: plans a request, runs the plan through the tool
//! registry, and narrates the stored results.

mod backend;
mod narration;
mod planner;
mod templates;

use std::time::Instant;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::session::{AgentContext, ArtifactKind, WorkflowState};
use crate::tools::{ToolRegistry, ToolResult};

pub use backend::{
    parse_reply, AssistantAction, BackendConfig, BackendError, BackendMode, BackendReply, ChatBackend, ChatMessage,
    HttpBackend, ScriptedBackend, TokenUsage, ToolCall, DEFAULT_SYSTEM_PROMPT,
};
pub use narration::{extract_numerals, format_number, resolve_numerals, Narrator, NumeralToken, ProvenanceEntry};
pub use planner::{plan, validate_plan, AgentRole, Intent, Plan, PlanError, PlanStep};
pub use templates::narrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Agent,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
    /// Stored artifact or tool result this turn refers to.
    pub payload_ref: Option<String>,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TurnMetrics {
    pub latency_ms: u64,
    pub tool_calls: usize,
    pub solver_iterations: u64,
    pub backend_requests: usize,
    pub backend_latency_ms: u64,
    pub token_usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Transcript {
    pub turns: Vec<Turn>,
    pub metrics: Vec<TurnMetrics>,
}

impl Transcript {
    fn push(&mut self, role: Role, content: impl Into<String>, payload_ref: Option<String>) {
        self.turns.push(Turn {
            role,
            content: content.into(),
            payload_ref,
            timestamp: Utc::now(),
        });
    }

    /// Role, content and reference of every turn, without timestamps.
    pub fn replayable(&self) -> Vec<(Role, String, Option<String>)> {
        self.turns
            .iter()
            .map(|t| (t.role, t.content.clone(), t.payload_ref.clone()))
            .collect()
    }
}

/// Time spent in one tool call, for metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolTiming {
    pub tool: String,
    pub duration_ms: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnReply {
    pub response: String,
    pub provenance: Vec<ProvenanceEntry>,
    pub agent: AgentRole,
    pub plan: Option<Plan>,
    pub results: Vec<ToolResult>,
    pub workflow: Option<WorkflowState>,
    pub metrics: TurnMetrics,
    pub tool_timings: Vec<ToolTiming>,
}

pub struct Orchestrator {
    pub registry: ToolRegistry,
    pub config: BackendConfig,
    backend: Option<Box<dyn ChatBackend>>,
}

impl Orchestrator {
    pub fn deterministic(registry: ToolRegistry) -> Self {
        Orchestrator {
            registry,
            config: BackendConfig::default(),
            backend: None,
        }
    }

    pub fn live(registry: ToolRegistry, config: BackendConfig, backend: Box<dyn ChatBackend>) -> Self {
        Orchestrator {
            registry,
            config: BackendConfig {
                mode: BackendMode::Live,
                ..config
            },
            backend: Some(backend),
        }
    }

    /// Handles one user utterance end to end.
    pub fn handle_turn(&self, utterance: &str, ctx: &mut AgentContext, transcript: &mut Transcript) -> TurnReply {
        let started = Instant::now();
        transcript.push(Role::User, utterance, None);
        let mut reply = match (&self.config.mode, &self.backend) {
            (BackendMode::Live, Some(b)) => self.live_turn(b.as_ref(), utterance, ctx, transcript),
            _ => self.deterministic_turn(utterance, ctx, transcript),
        };
        reply.metrics.latency_ms = started.elapsed().as_millis() as u64;
        reply.metrics.tool_calls = reply.tool_timings.len();
        reply.metrics.solver_iterations = reply
            .results
            .iter()
            .filter_map(|r| r.payload.get("iterations").and_then(Value::as_u64))
            .sum();
        reply.workflow = ctx.workflow.clone();
        transcript.push(Role::Agent, reply.response.clone(), None);
        transcript.metrics.push(reply.metrics.clone());
        reply
    }

    fn deterministic_turn(&self, utterance: &str, ctx: &mut AgentContext, transcript: &mut Transcript) -> TurnReply {
        let p = match plan(utterance, ctx) {
            Ok(p) => p,
            Err(e) => return text_reply(plan_error_text(&e), AgentRole::Coordinator, None),
        };
        if let Err(e) = validate_plan(&p, &self.registry, ctx) {
            return text_reply(plan_error_text(&e), p.assigned_agent, Some(p));
        }
        let (results, timings) = self.execute_plan(&p, ctx, transcript);
        let (response, provenance) = narrate(&results);
        TurnReply {
            response,
            provenance,
            agent: p.assigned_agent,
            plan: Some(p),
            results,
            workflow: None,
            metrics: TurnMetrics::default(),
            tool_timings: timings,
        }
    }

    /// Runs the steps in order, checking each result before the next; stops
    /// at the first failed step.
    pub fn execute_plan(&self, p: &Plan, ctx: &mut AgentContext, transcript: &mut Transcript) -> (Vec<ToolResult>, Vec<ToolTiming>) {
        let plan_id = format!("plan-{}", ctx.version + 1);
        ctx.set_workflow(WorkflowState::new(
            plan_id,
            p.steps.iter().map(|s| (s.rationale.clone(), s.tool_name.clone())),
        ));
        let mut results = Vec::new();
        let mut timings = Vec::new();
        for (i, step) in p.steps.iter().enumerate() {
            ctx.update_workflow(|w| {
                w.start(i);
            });
            let t = Instant::now();
            let args = Value::Object(step.arguments.clone());
            let outcome = self.registry.invoke(&step.tool_name, &args, ctx);
            let duration_ms = t.elapsed().as_millis() as u64;
            match outcome {
                Ok(res) => {
                    let ok = res.ok;
                    timings.push(ToolTiming {
                        tool: step.tool_name.clone(),
                        duration_ms,
                        ok,
                    });
                    let reference = res.artifact.map(|a| a.to_string());
                    transcript.push(
                        Role::Tool,
                        json!({"tool": step.tool_name, "arguments": args, "ok": ok}).to_string(),
                        reference.clone(),
                    );
                    ctx.update_workflow(|w| if ok { w.finish(i, reference) } else { w.fail(i) });
                    results.push(res);
                    if !ok {
                        break;
                    }
                }
                Err(e) => {
                    timings.push(ToolTiming {
                        tool: step.tool_name.clone(),
                        duration_ms,
                        ok: false,
                    });
                    transcript.push(
                        Role::Tool,
                        json!({"tool": step.tool_name, "arguments": args, "ok": false, "error": e.to_string()}).to_string(),
                        None,
                    );
                    ctx.update_workflow(|w| w.fail(i));
                    results.push(ToolResult {
                        tool_name: step.tool_name.clone(),
                        ok: false,
                        payload: json!({"error": e.to_string()}),
                        validation: Default::default(),
                        provenance: crate::session::Provenance::new(step.tool_name.clone(), Value::Null),
                        artifact: None,
                        context_version: ctx.version,
                        timestamp: Utc::now(),
                    });
                    break;
                }
            }
        }
        (results, timings)
    }

    fn live_turn(&self, backend: &dyn ChatBackend, utterance: &str, ctx: &mut AgentContext, transcript: &mut Transcript) -> TurnReply {
        let system = self.config.system_prompt.as_deref().unwrap_or(DEFAULT_SYSTEM_PROMPT);
        let mut messages = vec![ChatMessage::system(system)];
        for t in &transcript.turns[..transcript.turns.len().saturating_sub(1)] {
            match t.role {
                Role::User => messages.push(ChatMessage::user(&t.content)),
                Role::Agent => messages.push(ChatMessage::assistant_text(&t.content)),
                Role::Tool => {}
            }
        }
        messages.push(ChatMessage::user(utterance));
        let declarations = self.registry.declarations();

        let mut results: Vec<ToolResult> = Vec::new();
        let mut timings = Vec::new();
        let mut metrics = TurnMetrics::default();
        let mut corrected = false;
        let mut regenerated = false;
        let mut final_text: Option<(String, Vec<ProvenanceEntry>)> = None;
        let mut note: Option<&str> = None;

        for _ in 0..self.config.max_tool_rounds {
            let reply = match backend.step(&messages, &declarations) {
                Ok(r) => r,
                Err(e) => {
                    note = Some(match e {
                        BackendError::Timeout => "The language backend timed out.",
                        BackendError::TransportError(_) => "The language backend could not be reached.",
                        BackendError::MalformedBackendReply(_) => "The language backend sent a reply I could not read.",
                    });
                    break;
                }
            };
            metrics.backend_requests += 1;
            metrics.backend_latency_ms += reply.latency_ms;
            if let Some(u) = reply.usage {
                let acc = metrics.token_usage.get_or_insert_with(TokenUsage::default);
                acc.prompt_tokens += u.prompt_tokens;
                acc.completion_tokens += u.completion_tokens;
            }
            match reply.action {
                AssistantAction::FinalText { text } => match resolve_numerals(&text, &results) {
                    Ok(prov) => {
                        final_text = Some((text, prov));
                        break;
                    }
                    Err(orphans) if !regenerated => {
                        regenerated = true;
                        let list: Vec<String> = orphans.iter().map(|o| o.text.clone()).collect();
                        messages.push(ChatMessage::assistant_text(&text));
                        messages.push(ChatMessage::user(&format!(
                            "These numbers are not in any tool result: {}. Rewrite the answer using only values from the tool results.",
                            list.join(", ")
                        )));
                    }
                    Err(_) => break,
                },
                AssistantAction::ToolCalls { calls } => {
                    let mut assistant = ChatMessage::assistant_text("");
                    assistant.content = None;
                    assistant.tool_calls = calls.clone();
                    messages.push(assistant);
                    let mut failed_call = false;
                    for call in calls {
                        let problem = self.check_call(&call, ctx);
                        if let Some(problem) = problem {
                            messages.push(ChatMessage::tool(&call.id, &json!({"ok": false, "error": problem}).to_string()));
                            failed_call = true;
                            continue;
                        }
                        let args = call.arguments().unwrap_or_default();
                        let t = Instant::now();
                        let res = self.registry.invoke(&call.name, &args, ctx).expect("call checked above");
                        timings.push(ToolTiming {
                            tool: call.name.clone(),
                            duration_ms: t.elapsed().as_millis() as u64,
                            ok: res.ok,
                        });
                        transcript.push(
                            Role::Tool,
                            json!({"tool": call.name, "arguments": args, "ok": res.ok}).to_string(),
                            res.artifact.map(|a| a.to_string()),
                        );
                        messages.push(ChatMessage::tool(
                            &call.id,
                            &json!({"ok": res.ok, "payload": res.payload, "validation_passed": res.validation.passed()})
                                .to_string(),
                        ));
                        results.push(res);
                    }
                    if failed_call {
                        if corrected {
                            note = Some("The language backend made an invalid tool call twice, so I stopped this turn.");
                            break;
                        }
                        corrected = true;
                    }
                }
            }
        }

        let (response, provenance) = match final_text {
            Some(t) => t,
            None => {
                let (mut text, prov) = narrate(&results);
                let prefix = note.unwrap_or(if regenerated {
                    "The generated answer cited unsupported numbers, so here is the direct summary."
                } else {
                    "The tool-call limit for this turn was reached."
                });
                text = if text.is_empty() { prefix.to_string() } else { format!("{prefix} {text}") };
                (text, prov)
            }
        };
        TurnReply {
            response,
            provenance,
            agent: role_from_tools(&results),
            plan: None,
            results,
            workflow: None,
            metrics,
            tool_timings: timings,
        }
    }

    /// Reason a backend tool call cannot run, if any.
    fn check_call(&self, call: &ToolCall, ctx: &AgentContext) -> Option<String> {
        let Some(spec) = self.registry.get(&call.name) else {
            return Some(format!("unknown tool '{}'", call.name));
        };
        let Some(args) = call.arguments() else {
            return Some("arguments are not a JSON object".into());
        };
        if let Err(e) = spec.validate_args(&args) {
            return Some(e.to_string());
        }
        let needs_base = ["run_n1_contingency_analysis", "analyze_specific_contingency"];
        if needs_base.contains(&call.name.as_str()) && !ctx.freshness_check(ArtifactKind::PowerFlow).is_reuse() {
            return Some("call solve_base_case first".into());
        }
        None
    }
}

fn role_from_tools(results: &[ToolResult]) -> AgentRole {
    let contingency = ["solve_base_case", "run_n1_contingency_analysis", "analyze_specific_contingency", "get_contingency_status"];
    let (mut c, mut a) = (false, false);
    for r in results {
        if contingency.contains(&r.tool_name.as_str()) {
            c = true;
        } else if r.tool_name != "get_network_status" {
            a = true;
        }
    }
    match (a, c) {
        (true, false) => AgentRole::Acopf,
        (false, true) => AgentRole::Contingency,
        _ => AgentRole::Coordinator,
    }
}

fn plan_error_text(e: &PlanError) -> String {
    match e {
        PlanError::Unparseable(text) => text.clone(),
        PlanError::UnknownTool { tool, .. } => format!("The plan names a tool I do not have ({tool})."),
        PlanError::DependencyViolation { tool, .. } => {
            format!("The plan runs {tool} before a base case is solved; solve the base case first.")
        }
    }
}

fn text_reply(text: String, agent: AgentRole, plan: Option<Plan>) -> TurnReply {
    TurnReply {
        response: text,
        provenance: Vec::new(),
        agent,
        plan,
        results: Vec::new(),
        workflow: None,
        metrics: TurnMetrics::default(),
        tool_timings: Vec::new(),
    }
}
