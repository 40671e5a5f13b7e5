use powerdesk::orchestrator::{
    resolve_numerals, AgentRole, BackendConfig, BackendError, Orchestrator, ScriptedBackend, Transcript, TurnReply,
};
use powerdesk::session::AgentContext;
use powerdesk::tools::{default_registry, ToolEnv};
use serde_json::json;

fn deterministic() -> Orchestrator {
    Orchestrator::deterministic(default_registry(ToolEnv {
        parallel_sweeps: true,
        ..Default::default()
    }))
}

const DIALOGUE: [&str; 3] = [
    "Solve IEEE 118.",
    "Increase the load for bus 10 to 50MW",
    "what's the most critical contingencies in this network",
];

fn assert_traced(reply: &TurnReply) {
    if let Err(orphans) = resolve_numerals(&reply.response, &reply.results) {
        panic!("untraced numerals {orphans:?} in: {}", reply.response);
    }
}

fn run_dialogue() -> (Orchestrator, AgentContext, Transcript, Vec<TurnReply>) {
    let o = deterministic();
    let mut ctx = AgentContext::new("dialogue");
    let mut transcript = Transcript::default();
    let replies = DIALOGUE
        .iter()
        .map(|u| o.handle_turn(u, &mut ctx, &mut transcript))
        .collect();
    (o, ctx, transcript, replies)
}

#[test]
fn three_turn_dialogue_reuses_context_and_is_reproducible() {
    let (o, ctx, transcript, replies) = run_dialogue();
    for r in &replies {
        assert!(r.results.iter().all(|x| x.ok), "{}", r.response);
        assert_traced(r);
    }
    assert_eq!(replies[0].agent, AgentRole::Acopf);
    assert!(replies[0].response.starts_with("case118 solved"));
    assert_eq!(replies[1].agent, AgentRole::Acopf);
    assert!(replies[1].response.contains(", up $"), "{}", replies[1].response);
    assert_eq!(replies[2].agent, AgentRole::Contingency);
    assert!(replies[2].response.contains("Most critical, in order:"));

    // The third turn takes its base point from the second turn's solution.
    assert_eq!(replies[2].results[0].payload["reused_acopf"], true);
    assert_eq!(o.registry.env.counters.snapshot().acopf, 2);
    let acopf = ctx.latest_acopf().unwrap();
    let sweep = ctx.latest_contingency().unwrap();
    assert_eq!(sweep.value.base_reference, acopf.value.state_checksum);
    assert_eq!(sweep.derived_from.as_deref(), Some(acopf.value.state_checksum.as_str()));

    // User, tool and agent turns for each exchange.
    assert_eq!(transcript.turns.len(), 3 + 1 + 1 + 2 + 3);
    assert_eq!(transcript.metrics.len(), 3);
    assert!(transcript.metrics[0].solver_iterations > 0);
    assert!(ctx.workflow.as_ref().unwrap().is_complete());

    let (_, ctx2, transcript2, replies2) = run_dialogue();
    assert_eq!(transcript.replayable(), transcript2.replayable());
    for (a, b) in replies.iter().zip(&replies2) {
        assert_eq!(a.response, b.response);
        assert_eq!(a.provenance, b.provenance);
    }
    assert_eq!(ctx.active_case().unwrap().diff_digest(), ctx2.active_case().unwrap().diff_digest());
}

#[test]
fn unclear_request_gets_a_clarification_without_tools() {
    let o = deterministic();
    let mut ctx = AgentContext::new("t");
    let mut transcript = Transcript::default();
    let r = o.handle_turn("make it better somehow", &mut ctx, &mut transcript);
    assert!(r.results.is_empty());
    assert!(r.response.ends_with('?') || r.response.contains("case"));
    assert_traced(&r);
    assert_eq!(ctx.version, 0);
}

#[test]
fn failed_step_halts_the_plan_and_is_reported() {
    let o = deterministic();
    let mut ctx = AgentContext::new("t");
    let mut transcript = Transcript::default();
    o.handle_turn("Solve case14", &mut ctx, &mut transcript);
    let r = o.handle_turn("Set the load at bus 99 to 20 MW", &mut ctx, &mut transcript);
    assert_eq!(r.results.len(), 1);
    assert!(!r.results[0].ok);
    assert!(r.response.contains("99"), "{}", r.response);
    assert_traced(&r);
    assert_eq!(ctx.diff_len(), 0);
}

#[test]
fn cross_domain_request_runs_in_dependency_order() {
    let o = deterministic();
    let mut ctx = AgentContext::new("t");
    let mut transcript = Transcript::default();
    let r = o.handle_turn(
        "Solve case30 and then run N-1 contingency analysis to find the critical lines",
        &mut ctx,
        &mut transcript,
    );
    let tools: Vec<&str> = r.results.iter().map(|x| x.tool_name.as_str()).collect();
    assert_eq!(tools, ["solve_acopf_case", "solve_base_case", "run_n1_contingency_analysis"]);
    assert_eq!(r.agent, AgentRole::Coordinator);
    assert_traced(&r);
}

fn live(script: Vec<Result<powerdesk::orchestrator::AssistantAction, BackendError>>) -> Orchestrator {
    Orchestrator::live(
        default_registry(ToolEnv::default()),
        BackendConfig::default(),
        Box::new(ScriptedBackend::new(script)),
    )
}

#[test]
fn live_mode_accepts_a_grounded_answer() {
    let o = live(vec![
        Ok(ScriptedBackend::tool_call("solve_acopf_case", json!({"case_name": "case14"}))),
        Ok(ScriptedBackend::text("Solved case14; generator 1 sits at bus 1.")),
    ]);
    let mut ctx = AgentContext::new("t");
    let mut t = Transcript::default();
    let r = o.handle_turn("solve case14", &mut ctx, &mut t);
    assert_eq!(r.response, "Solved case14; generator 1 sits at bus 1.");
    assert_eq!(r.metrics.backend_requests, 2);
    assert_eq!(r.metrics.token_usage.unwrap().prompt_tokens, 200);
    assert_traced(&r);
}

#[test]
fn live_mode_regenerates_then_falls_back_to_templates() {
    let o = live(vec![
        Ok(ScriptedBackend::tool_call("solve_acopf_case", json!({"case_name": "case14"}))),
        Ok(ScriptedBackend::text("The cost is 123456789.5 dollars.")),
        Ok(ScriptedBackend::text("The cost is 987654321.5 dollars.")),
    ]);
    let mut ctx = AgentContext::new("t");
    let mut t = Transcript::default();
    let r = o.handle_turn("solve case14", &mut ctx, &mut t);
    assert!(!r.response.contains("987654321"));
    assert!(r.response.contains("case14 solved by AC optimal power flow"));
    assert_eq!(r.metrics.backend_requests, 3);
    assert_traced(&r);
}

#[test]
fn live_mode_corrects_one_bad_call_and_stops_on_a_second() {
    let o = live(vec![
        Ok(ScriptedBackend::tool_call("solve_everything", json!({}))),
        Ok(ScriptedBackend::tool_call("solve_acopf_case", json!({"case_name": "case14"}))),
        Ok(ScriptedBackend::text("Done.")),
    ]);
    let mut ctx = AgentContext::new("t");
    let mut t = Transcript::default();
    let r = o.handle_turn("solve case14", &mut ctx, &mut t);
    assert_eq!(r.response, "Done.");
    assert_eq!(r.results.len(), 1);

    let o = live(vec![
        Ok(ScriptedBackend::tool_call("solve_acopf_case", json!({"case_name": "case14", "mode": "x"}))),
        Ok(ScriptedBackend::tool_call("run_n1_contingency_analysis", json!({}))),
        Ok(ScriptedBackend::text("unused")),
    ]);
    let mut ctx = AgentContext::new("t");
    let r = o.handle_turn("solve case14", &mut ctx, &mut Transcript::default());
    assert!(r.results.is_empty());
    assert!(r.response.contains("invalid tool call twice"));
    assert_eq!(ctx.version, 0);
    assert_traced(&r);
}

#[test]
fn live_mode_reports_backend_failures() {
    let o = live(vec![
        Ok(ScriptedBackend::tool_call("solve_acopf_case", json!({"case_name": "case14"}))),
        Err(BackendError::Timeout),
    ]);
    let mut ctx = AgentContext::new("t");
    let r = o.handle_turn("solve case14", &mut ctx, &mut Transcript::default());
    assert!(r.response.starts_with("The language backend timed out."));
    assert!(r.response.contains("case14 solved"));
    assert_traced(&r);

    let o = live(vec![Err(BackendError::TransportError("HTTP 503".into()))]);
    let r = o.handle_turn("hello", &mut AgentContext::new("t"), &mut Transcript::default());
    assert_eq!(r.response, "The language backend could not be reached.");
    assert_traced(&r);
}

#[test]
fn live_mode_stops_at_the_round_cap() {
    let script = (0..10)
        .map(|_| Ok(ScriptedBackend::tool_call("get_network_status", json!({}))))
        .collect();
    let o = live(script);
    let mut ctx = AgentContext::new("t");
    deterministic().handle_turn("Solve case14", &mut ctx, &mut Transcript::default());
    let r = o.handle_turn("status?", &mut ctx, &mut Transcript::default());
    assert_eq!(r.metrics.backend_requests, BackendConfig::default().max_tool_rounds);
    assert!(r.response.starts_with("The tool-call limit for this turn was reached."));
    assert_traced(&r);
}

