use powerdesk::network::{ModKind, Modification};
use powerdesk::session::{AgentContext, ArtifactKind};
use powerdesk::tools::{default_registry, gate_report, SolveOutcome, ToolEnv, ToolError};
use serde_json::json;

fn registry() -> powerdesk::tools::ToolRegistry {
    default_registry(ToolEnv {
        parallel_sweeps: true,
        ..Default::default()
    })
}

#[test]
fn catalog_self_test_and_declarations() {
    let r = registry();
    assert!(r.self_test().is_ok());
    let names: Vec<&str> = r.catalog().iter().map(|s| s.name.as_str()).collect();
    assert_eq!(
        names,
        [
            "solve_acopf_case",
            "modify_bus_load",
            "get_network_status",
            "solve_base_case",
            "run_n1_contingency_analysis",
            "analyze_specific_contingency",
            "get_contingency_status"
        ]
    );
    let decl = r.declarations();
    assert_eq!(decl[0]["function"]["name"], "solve_acopf_case");
    assert_eq!(decl[0]["function"]["parameters"]["additionalProperties"], false);
    assert_eq!(r.with_capability("re-optimization")[0].name, "modify_bus_load");
}

#[test]
fn unknown_case_fails_without_side_effects() {
    let r = registry();
    let mut ctx = AgentContext::new("t");
    let before = ctx.clone();
    let res = r.invoke("solve_acopf_case", &json!({"case_name": "case999"}), &mut ctx).unwrap();
    assert!(!res.ok);
    assert!(res.payload["error"].as_str().unwrap().contains("unknown case"));
    assert_eq!(ctx, before);
}

#[test]
fn hallucinated_argument_is_rejected() {
    let r = registry();
    let mut ctx = AgentContext::new("t");
    let err = r
        .invoke("solve_acopf_case", &json!({"case_name": "case14", "solver": "fast"}), &mut ctx)
        .unwrap_err();
    assert!(matches!(err, ToolError::ArgsInvalid { field, .. } if field == "solver"));
}

#[test]
fn solve_then_modify_then_sweep_case118() {
    let r = registry();
    let mut ctx = AgentContext::new("t");
    let solved = r.invoke("solve_acopf_case", &json!({"case_name": "case118"}), &mut ctx).unwrap();
    assert!(solved.ok, "{:?}", solved.validation);
    assert!(solved.payload["objective_cost"].as_f64().unwrap() > 0.0);
    assert!(solved.payload["min_voltage_pu"].as_f64().unwrap() >= 0.94 - 1e-6);
    assert!(solved.validation.passed());
    let mismatch = solved.validation.gate("balance_mismatch").unwrap().value.unwrap();
    assert!(mismatch < 1e-4);

    let modified = r.invoke("modify_bus_load", &json!({"bus": 10, "p_mw": 50.0}), &mut ctx).unwrap();
    assert!(modified.ok, "{:?}", modified.payload);
    assert_eq!(ctx.diff_len(), 1);
    assert_eq!(modified.payload["p_mw"], 50.0);
    assert_eq!(modified.payload["previous_p_mw"], 0.0);
    let change = modified.payload["cost_change"].as_f64().unwrap();
    assert!(change > 0.0);
    assert!(ctx.freshness_check(ArtifactKind::Acopf).is_reuse());

    let counters = r.env.counters.snapshot();
    let base = r.invoke("solve_base_case", &json!({}), &mut ctx).unwrap();
    assert!(base.ok, "{:?}", base.payload);
    assert_eq!(base.payload["reused_acopf"], true);
    assert_eq!(r.env.counters.snapshot().acopf, counters.acopf);
    assert_eq!(
        base.payload["base_reference"],
        json!(ctx.latest_acopf().unwrap().value.state_checksum)
    );

    let sweep = r.invoke("run_n1_contingency_analysis", &json!({"scope": "lines"}), &mut ctx).unwrap();
    assert!(sweep.ok, "{:?}", sweep.payload);
    assert_eq!(sweep.payload["total"], 175);
    assert_eq!(sweep.payload["critical"].as_array().unwrap().len(), 5);

    let again = r.invoke("run_n1_contingency_analysis", &json!({}), &mut ctx).unwrap();
    assert_eq!(again.payload["fresh_evaluations"], 0);
    assert_eq!(again.payload["critical"], sweep.payload["critical"]);

    let status = r.invoke("get_contingency_status", &json!({}), &mut ctx).unwrap();
    assert_eq!(status.payload["fresh"], true);
    assert_eq!(status.payload["total"], 175);

    let first = sweep.payload["critical"][0]["element_index"].as_u64().unwrap();
    let single = r
        .invoke("analyze_specific_contingency", &json!({"element": first}), &mut ctx)
        .unwrap();
    assert!(single.ok);
    assert_eq!(single.payload["from_cache"], true);
    assert_eq!(single.payload["score"], sweep.payload["critical"][0]["score"]);
}

#[test]
fn sweep_without_base_is_refused() {
    let r = registry();
    let mut ctx = AgentContext::new("t");
    r.invoke("solve_acopf_case", &json!({"case_name": "case14"}), &mut ctx).unwrap();
    let v = ctx.version;
    let res = r.invoke("run_n1_contingency_analysis", &json!({}), &mut ctx).unwrap();
    assert!(!res.ok);
    assert!(res.payload["error"].as_str().unwrap().contains("solve_base_case"));
    assert_eq!(ctx.version, v);
}

#[test]
fn edit_after_sweep_marks_it_stale() {
    let r = registry();
    let mut ctx = AgentContext::new("t");
    r.invoke("solve_base_case", &json!({"case_name": "case14"}), &mut ctx).unwrap();
    r.invoke("run_n1_contingency_analysis", &json!({}), &mut ctx).unwrap();
    ctx.record_modification(Modification::new(ModKind::SetBusLoad {
        bus_id: 9,
        p_mw: 35.0,
        q_mvar: None,
    }))
    .unwrap();
    let status = r.invoke("get_contingency_status", &json!({}), &mut ctx).unwrap();
    assert_eq!(status.payload["fresh"], false);
    assert_eq!(status.payload["stale_edits"], 1);
    let net = r.invoke("get_network_status", &json!({}), &mut ctx).unwrap();
    assert_eq!(net.payload["contingency"], "stale");
    assert_eq!(net.payload["modifications"][0]["bus_id"], 9);
}

#[test]
fn impossible_load_exhausts_the_ladder() {
    let r = registry();
    let mut ctx = AgentContext::new("t");
    r.invoke("solve_acopf_case", &json!({"case_name": "case14"}), &mut ctx).unwrap();
    let before = ctx.clone();
    let res = r.invoke("modify_bus_load", &json!({"bus": 14, "p_mw": 9000.0}), &mut ctx).unwrap();
    assert!(!res.ok);
    assert!(res.payload["clarification"].as_str().unwrap().contains("Please"));
    let steps: Vec<String> = serde_json::from_value(res.payload["recovery"].clone()).unwrap();
    assert_eq!(steps.first().unwrap(), "retry from a flat start");
    assert_eq!(steps.last().unwrap(), "request clarification");
    assert_eq!(ctx, before);
}

#[test]
fn gate_report_recomputes_from_artifact() {
    let r = registry();
    let mut ctx = AgentContext::new("t");
    let res = r.invoke("solve_acopf_case", &json!({"case_name": "case30"}), &mut ctx).unwrap();
    let a = ctx.latest_acopf().unwrap();
    let outcome = SolveOutcome::from_acopf(&a.value, vec![]);
    let recomputed = gate_report(&outcome, &ctx.thresholds);
    assert!(recomputed.passed());
    assert!(res.ok);
    assert_eq!(a.validation, res.validation);
}
