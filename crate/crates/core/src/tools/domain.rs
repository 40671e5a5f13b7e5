use std::sync::atomic::Ordering;

use serde_json::{json, Map, Value};

use crate::case_io::normalize_case_name;
use crate::contingency::{
    contingency_for, evaluate_contingency, run_n1, rank_critical, ContingencyResult, ContingencyScope, CriticalElement,
    Evidence, SweepOptions,
};
use crate::network::{BranchKind, ModKind, Modification, PowerSystem};
use crate::opf::{solve_acopf, ACOPFSolution, AcopfOptions, OpfStart, FEASIBILITY_TOL};
use crate::powerflow::{solve_powerflow, PowerFlowOptions, PowerFlowSolution, PowerFlowStart};
use crate::session::{AgentContext, ArtifactKind, Freshness, Gate, Provenance, ValidationReport};

use super::gates::{modification_checks, run_with_recovery, SolveOutcome};
use super::{Execution, FieldSpec, ParamSpec, ToolEnv, ToolError, ToolRegistry, ToolSpec, ValueType};

fn enum_of(values: &[&str]) -> ValueType {
    ValueType::Enum {
        values: values.iter().map(|s| s.to_string()).collect(),
    }
}

fn num(name: &str) -> FieldSpec {
    FieldSpec::required(name, ValueType::Number)
}

fn opt_num(name: &str) -> FieldSpec {
    FieldSpec::optional(name, ValueType::Number)
}

fn acopf_fields() -> Vec<FieldSpec> {
    vec![
        FieldSpec::required("case_name", ValueType::String),
        FieldSpec::required("solved", ValueType::Boolean),
        num("objective_cost"),
        num("total_generation_mw"),
        num("total_load_mw"),
        num("losses_mw"),
        num("min_voltage_pu"),
        num("max_voltage_pu"),
        opt_num("max_loading_percent"),
        FieldSpec::required("iterations", ValueType::Integer),
        num("max_mismatch_pu"),
        FieldSpec::required("state_checksum", ValueType::String),
        FieldSpec::required("diff_count", ValueType::Integer),
        FieldSpec::required("binding_constraints", ValueType::Array),
    ]
}

fn critical_fields() -> Vec<FieldSpec> {
    vec![
        FieldSpec::required("critical", ValueType::Array),
        FieldSpec::required("total", ValueType::Integer),
        FieldSpec::required("secure", ValueType::Integer),
        FieldSpec::required("violations", ValueType::Integer),
        FieldSpec::required("islanding", ValueType::Integer),
        FieldSpec::required("diverged", ValueType::Integer),
        opt_num("max_loading_percent"),
    ]
}

fn case_param() -> ParamSpec {
    ParamSpec::new(
        "case_name",
        ValueType::String,
        true,
        "Test case name such as case14, case30, case57, case118 or case300",
    )
}

pub fn register_domain_tools(registry: &mut ToolRegistry) -> Result<(), ToolError> {
    registry.register_tool(
        ToolSpec {
            name: "solve_acopf_case".into(),
            description: "Load and solve a test case with AC optimal power flow. Re-solves the active network when the case is already loaded.".into(),
            parameters: vec![case_param()],
            result_fields: acopf_fields(),
            capabilities: vec!["optimization".into(), "case-loading".into()],
            examples: vec![json!({"case_name": "case118"})],
        },
        Box::new(solve_acopf_case),
    )?;
    let mut modify_fields = acopf_fields();
    modify_fields.extend([
        FieldSpec::required("bus", ValueType::Integer),
        num("p_mw"),
        num("previous_p_mw"),
        num("q_mvar"),
        num("previous_q_mvar"),
        opt_num("previous_objective_cost"),
        opt_num("cost_change"),
    ]);
    registry.register_tool(
        ToolSpec {
            name: "modify_bus_load".into(),
            description: "Set the active (and optionally reactive) load at a bus, then re-solve the AC optimal power flow.".into(),
            parameters: vec![
                ParamSpec::new("bus", ValueType::Integer, true, "Bus number").bounded(Some(1.0), None),
                ParamSpec::new("p_mw", ValueType::Number, true, "New active load in MW").bounded(Some(-10000.0), Some(10000.0)),
                ParamSpec::new("q_mvar", ValueType::Number, false, "New reactive load in MVAr; unchanged when omitted")
                    .bounded(Some(-10000.0), Some(10000.0)),
            ],
            result_fields: modify_fields,
            capabilities: vec!["modification".into(), "re-optimization".into()],
            examples: vec![json!({"bus": 10, "p_mw": 50.0}), json!({"bus": 4, "p_mw": 40.0, "q_mvar": 10.0})],
        },
        Box::new(modify_bus_load),
    )?;
    registry.register_tool(
        ToolSpec {
            name: "get_network_status".into(),
            description: "Summarize the active case, its modifications, and whether stored results are current.".into(),
            parameters: vec![],
            result_fields: vec![
                FieldSpec::required("case_name", ValueType::String),
                FieldSpec::required("bus_count", ValueType::Integer),
                FieldSpec::required("generator_count", ValueType::Integer),
                FieldSpec::required("line_count", ValueType::Integer),
                FieldSpec::required("transformer_count", ValueType::Integer),
                num("total_load_mw"),
                num("total_generation_capacity_mw"),
                FieldSpec::required("diff_count", ValueType::Integer),
                FieldSpec::required("modifications", ValueType::Array),
                FieldSpec::required("acopf", ValueType::String),
                FieldSpec::required("power_flow", ValueType::String),
                FieldSpec::required("contingency", ValueType::String),
                opt_num("objective_cost"),
            ],
            capabilities: vec!["status".into()],
            examples: vec![json!({})],
        },
        Box::new(get_network_status),
    )?;
    registry.register_tool(
        ToolSpec {
            name: "solve_base_case".into(),
            description: "Establish the base operating point for contingency analysis: the optimal dispatch, polished by a Newton power flow. Reuses a current optimal power flow result.".into(),
            parameters: vec![ParamSpec::new(
                "case_name",
                ValueType::String,
                false,
                "Case to load; the active case when omitted",
            )],
            result_fields: vec![
                FieldSpec::required("case_name", ValueType::String),
                FieldSpec::required("reused_acopf", ValueType::Boolean),
                FieldSpec::required("reused_power_flow", ValueType::Boolean),
                FieldSpec::required("base_reference", ValueType::String),
                FieldSpec::required("converged", ValueType::Boolean),
                FieldSpec::required("iterations", ValueType::Integer),
                num("max_mismatch_pu"),
                num("min_voltage_pu"),
                num("max_voltage_pu"),
                opt_num("max_loading_percent"),
                num("losses_mw"),
                num("objective_cost"),
                FieldSpec::required("diff_count", ValueType::Integer),
            ],
            capabilities: vec!["power-flow".into(), "base-case".into()],
            examples: vec![json!({}), json!({"case_name": "case118"})],
        },
        Box::new(solve_base_case),
    )?;
    let mut sweep_fields = critical_fields();
    sweep_fields.extend([
        FieldSpec::required("case_name", ValueType::String),
        FieldSpec::required("scope", ValueType::String),
        FieldSpec::required("cache_hits", ValueType::Integer),
        FieldSpec::required("fresh_evaluations", ValueType::Integer),
        FieldSpec::required("base_reference", ValueType::String),
    ]);
    registry.register_tool(
        ToolSpec {
            name: "run_n1_contingency_analysis".into(),
            description: "Run a single-outage (N-1) sweep over the base case and rank the most critical outages.".into(),
            parameters: vec![
                ParamSpec::new("scope", enum_of(&["lines", "transformers", "all"]), false, "Which branches to outage; lines by default"),
                ParamSpec::new("top_k", ValueType::Integer, false, "How many critical outages to rank; 5 by default")
                    .bounded(Some(1.0), Some(50.0)),
            ],
            result_fields: sweep_fields,
            capabilities: vec!["reliability-sweep".into(), "contingency".into()],
            examples: vec![json!({"scope": "lines"}), json!({"scope": "all", "top_k": 10})],
        },
        Box::new(run_n1_contingency_analysis),
    )?;
    registry.register_tool(
        ToolSpec {
            name: "analyze_specific_contingency".into(),
            description: "Evaluate the outage of one branch against the base case.".into(),
            parameters: vec![
                ParamSpec::new("element", ValueType::Integer, true, "Branch index, counted from 0 in case order")
                    .bounded(Some(0.0), None),
                ParamSpec::new("kind", enum_of(&["line", "transformer"]), false, "Expected branch kind"),
            ],
            result_fields: vec![
                FieldSpec::required("element_index", ValueType::Integer),
                FieldSpec::required("label", ValueType::String),
                FieldSpec::required("kind", ValueType::String),
                FieldSpec::required("status", ValueType::String),
                opt_num("max_loading_percent"),
                opt_num("min_voltage_pu"),
                num("curtailment_mw"),
                FieldSpec::required("n_overloads", ValueType::Integer),
                FieldSpec::required("overloads", ValueType::Array),
                num("score"),
                FieldSpec::required("justification", ValueType::String),
                FieldSpec::required("from_cache", ValueType::Boolean),
            ],
            capabilities: vec!["contingency".into(), "single-outage".into()],
            examples: vec![json!({"element": 7}), json!({"element": 7, "kind": "line"})],
        },
        Box::new(analyze_specific_contingency),
    )?;
    let mut status_fields = critical_fields();
    status_fields.extend([
        FieldSpec::required("available", ValueType::Boolean),
        FieldSpec::required("fresh", ValueType::Boolean),
        FieldSpec::required("stale_edits", ValueType::Integer),
        FieldSpec::required("cached_results", ValueType::Integer),
    ]);
    registry.register_tool(
        ToolSpec {
            name: "get_contingency_status".into(),
            description: "Report the latest contingency sweep and whether it is still current.".into(),
            parameters: vec![],
            result_fields: status_fields,
            capabilities: vec!["status".into(), "contingency".into()],
            examples: vec![json!({})],
        },
        Box::new(get_contingency_status),
    )?;
    Ok(())
}

/// Registry with the seven analysis tools.
pub fn default_registry(env: ToolEnv) -> ToolRegistry {
    let mut r = ToolRegistry::new(env);
    register_domain_tools(&mut r).expect("domain tool names are distinct");
    r
}

fn ensure_case(ctx: &mut AgentContext, env: &ToolEnv, name: &str) -> Result<bool, String> {
    let key = normalize_case_name(name);
    if ctx.case.as_ref().is_some_and(|c| c.source.name == key) {
        return Ok(false);
    }
    let (source, net) = env.catalog.load(name).map_err(|e| e.to_string())?;
    ctx.load_case(source, net);
    Ok(true)
}

fn current(ctx: &AgentContext) -> Result<PowerSystem, String> {
    ctx.current_network()
        .cloned()
        .ok_or_else(|| "no case is loaded; solve a case first".to_string())
}

struct Solved<T> {
    value: T,
    validation: ValidationReport,
    recovery: Vec<String>,
}

enum SolveFailure {
    Error(String),
    Clarify { text: String, validation: ValidationReport, recovery: Vec<String> },
}

fn acopf_with_recovery(ctx: &AgentContext, env: &ToolEnv, warm: Option<&ACOPFSolution>) -> Result<(Solved<ACOPFSolution>, AcopfOptions), SolveFailure> {
    let net = current(ctx).map_err(SolveFailure::Error)?;
    let log = ctx.active_case().map(|c| c.diff_log.clone()).unwrap_or_default();
    let checks = modification_checks(&log, &net);
    let mut used = AcopfOptions::default();
    let rec = run_with_recovery(&ctx.thresholds, warm.is_none(), |attempt| {
        let mut opts = AcopfOptions::default();
        if let (Some(w), false) = (warm, attempt.flat_start) {
            opts.start = OpfStart::Warm { state: w.state.clone() };
        }
        if let Some(t) = attempt.relaxed_tolerance {
            opts.tolerance = opts.tolerance.max(t);
        }
        env.counters.acopf.fetch_add(1, Ordering::Relaxed);
        used = opts.clone();
        let sol = solve_acopf(&net, &opts).map_err(|e| e.to_string())?;
        let outcome = SolveOutcome::from_acopf(&sol, checks.clone());
        Ok((sol, outcome))
    });
    match rec.value {
        Some(value) => Ok((
            Solved {
                value,
                validation: rec.validation,
                recovery: rec.recovery,
            },
            used,
        )),
        None => Err(SolveFailure::Clarify {
            text: rec.clarification.unwrap_or_default(),
            validation: rec.validation,
            recovery: rec.recovery,
        }),
    }
}

fn clarify(tool: &str, f: SolveFailure) -> Result<Execution, String> {
    match f {
        SolveFailure::Error(e) => Err(e),
        SolveFailure::Clarify { text, validation, recovery } => {
            let mut provenance = Provenance::new(tool, Value::Null);
            provenance.recovery = recovery;
            Ok(Execution {
                payload: Value::Null,
                validation,
                provenance,
                artifact: None,
                clarification: Some(text),
            })
        }
    }
}

fn acopf_payload(sol: &ACOPFSolution, net: &PowerSystem, diff_count: usize) -> Map<String, Value> {
    let binding: Vec<Value> = sol
        .constraint_margins
        .iter()
        .filter(|m| m.normalized(net.base_mva) < 1e-4 && m.normalized(net.base_mva) > -FEASIBILITY_TOL)
        .take(10)
        .map(|m| json!({"label": m.label, "kind": m.kind, "limit": m.limit, "value": m.value}))
        .collect();
    let dispatch: Vec<Value> = sol
        .gen_dispatch
        .iter()
        .filter(|g| g.in_service)
        .map(|g| json!({"generator": g.generator, "bus": g.bus_id, "p_mw": g.p_mw, "q_mvar": g.q_mvar}))
        .collect();
    let v = json!({
        "case_name": sol.case_name,
        "solved": sol.solved,
        "objective_cost": sol.objective_cost,
        "total_generation_mw": sol.total_generation_mw(),
        "total_load_mw": net.total_load_mw(),
        "losses_mw": sol.losses_mw,
        "min_voltage_pu": sol.min_voltage_pu,
        "max_voltage_pu": sol.max_voltage_pu,
        "max_loading_percent": sol.max_loading_percent(),
        "iterations": sol.iterations,
        "max_mismatch_pu": sol.max_mismatch_pu,
        "convergence_message": sol.convergence_message,
        "state_checksum": sol.state_checksum,
        "diff_count": diff_count,
        "binding_constraints": binding,
        "dispatch": dispatch,
    });
    match v {
        Value::Object(m) => m,
        _ => unreachable!("json object literal"),
    }
}

fn solve_acopf_case(args: &Map<String, Value>, ctx: &mut AgentContext, env: &ToolEnv) -> Result<Execution, String> {
    let name = args["case_name"].as_str().unwrap_or_default();
    ensure_case(ctx, env, name)?;
    let (solved, opts) = match acopf_with_recovery(ctx, env, None) {
        Ok(s) => s,
        Err(f) => return clarify("solve_acopf_case", f),
    };
    let net = current(ctx)?;
    let payload = acopf_payload(&solved.value, &net, ctx.diff_len());
    let mut provenance = Provenance::new("solve_acopf_case", serde_json::to_value(&opts).unwrap_or_default());
    provenance.recovery = solved.recovery;
    let artifact = ctx
        .store_acopf(solved.value, provenance.clone(), solved.validation.clone())
        .map_err(|e| e.to_string())?;
    Ok(Execution {
        payload: Value::Object(payload),
        validation: solved.validation,
        provenance,
        artifact: Some(artifact),
        clarification: None,
    })
}

fn modify_bus_load(args: &Map<String, Value>, ctx: &mut AgentContext, env: &ToolEnv) -> Result<Execution, String> {
    let bus = args["bus"].as_u64().ok_or("bus must be a positive integer")? as u32;
    let p_mw = args["p_mw"].as_f64().ok_or("p_mw must be a number")?;
    let q_mvar = args.get("q_mvar").and_then(Value::as_f64);
    let net = current(ctx)?;
    let before = net
        .bus_position(bus)
        .map(|i| net.buses[i].clone())
        .ok_or_else(|| format!("bus {bus} does not exist in {}", net.case_name))?;
    let previous = ctx.latest_acopf().map(|a| a.value.clone());
    let previous_fresh = ctx.freshness_check(ArtifactKind::Acopf).is_reuse();
    ctx.record_modification(Modification::new(ModKind::SetBusLoad { bus_id: bus, p_mw, q_mvar }))
        .map_err(|e| e.to_string())?;

    let (solved, opts) = match acopf_with_recovery(ctx, env, previous.as_ref()) {
        Ok(s) => s,
        Err(f) => return clarify("modify_bus_load", f),
    };
    let net = current(ctx)?;
    let after = &net.buses[net.bus_position(bus).expect("bus checked above")];
    let mut payload = acopf_payload(&solved.value, &net, ctx.diff_len());
    // Cost comparison only against a result for the network just before
    // this edit.
    let prior_cost = previous.as_ref().filter(|_| previous_fresh).map(|p| p.objective_cost);
    payload.insert("bus".into(), json!(bus));
    payload.insert("p_mw".into(), json!(after.pd_mw));
    payload.insert("previous_p_mw".into(), json!(before.pd_mw));
    payload.insert("q_mvar".into(), json!(after.qd_mvar));
    payload.insert("previous_q_mvar".into(), json!(before.qd_mvar));
    payload.insert("previous_objective_cost".into(), json!(prior_cost));
    payload.insert(
        "cost_change".into(),
        json!(prior_cost.map(|c| solved.value.objective_cost - c)),
    );
    let mut provenance = Provenance::new("modify_bus_load", serde_json::to_value(&opts).unwrap_or_default());
    provenance.recovery = solved.recovery;
    let artifact = ctx
        .store_acopf(solved.value, provenance.clone(), solved.validation.clone())
        .map_err(|e| e.to_string())?;
    Ok(Execution {
        payload: Value::Object(payload),
        validation: solved.validation,
        provenance,
        artifact: Some(artifact),
        clarification: None,
    })
}

fn freshness_word(f: &Freshness) -> &'static str {
    match f {
        Freshness::Reuse => "fresh",
        Freshness::Stale { missing: true, .. } => "missing",
        Freshness::Stale { .. } => "stale",
    }
}

fn passed_gate(name: &str, detail: &str) -> ValidationReport {
    ValidationReport {
        gates: vec![Gate {
            name: name.into(),
            passed: true,
            value: None,
            limit: None,
            detail: detail.into(),
        }],
    }
}

fn get_network_status(_: &Map<String, Value>, ctx: &mut AgentContext, _: &ToolEnv) -> Result<Execution, String> {
    let case = ctx.active_case().map_err(|e| e.to_string())?;
    let net = &case.current;
    let mods: Vec<Value> = case
        .diff_log
        .iter()
        .map(|e| serde_json::to_value(&e.modification.kind).unwrap_or_default())
        .collect();
    let payload = json!({
        "case_name": case.source.name,
        "bus_count": net.buses.len(),
        "generator_count": net.in_service_generators().count(),
        "line_count": net.branches.iter().filter(|b| b.in_service && b.kind == BranchKind::Line).count(),
        "transformer_count": net.branches.iter().filter(|b| b.in_service && b.kind == BranchKind::Transformer).count(),
        "total_load_mw": net.total_load_mw(),
        "total_generation_capacity_mw": net.in_service_generators().map(|(_, g)| g.pmax_mw).sum::<f64>(),
        "diff_count": case.diff_log.len(),
        "modifications": mods,
        "acopf": freshness_word(&ctx.freshness_check(ArtifactKind::Acopf)),
        "power_flow": freshness_word(&ctx.freshness_check(ArtifactKind::PowerFlow)),
        "contingency": freshness_word(&ctx.freshness_check(ArtifactKind::Contingency)),
        "objective_cost": ctx.latest_acopf().map(|a| a.value.objective_cost),
    });
    let mut validation = passed_gate("replay_identity", "replaying the log over the baseline reproduces the network");
    validation.gates[0].passed = ctx.verify_replay();
    Ok(Execution {
        payload,
        validation,
        provenance: Provenance::new("get_network_status", Value::Null),
        artifact: None,
        clarification: None,
    })
}

/// The network with generator outputs and voltage setpoints taken from an
/// optimal dispatch.
fn with_dispatch(net: &PowerSystem, sol: &ACOPFSolution) -> PowerSystem {
    let mut out = net.clone();
    for d in &sol.gen_dispatch {
        let bus = out.bus_position(d.bus_id);
        let g = &mut out.generators[d.generator];
        g.pg_mw = d.p_mw;
        g.qg_mvar = d.q_mvar;
        if let Some(i) = bus {
            g.vg_pu = sol.state.vm_pu[i];
        }
    }
    out
}

fn solve_base_case(args: &Map<String, Value>, ctx: &mut AgentContext, env: &ToolEnv) -> Result<Execution, String> {
    if let Some(name) = args.get("case_name").and_then(Value::as_str) {
        ensure_case(ctx, env, name)?;
    }
    let net = current(ctx)?;
    let acopf_fresh = ctx.freshness_check(ArtifactKind::Acopf).is_reuse();
    let pf_fresh = ctx.freshness_check(ArtifactKind::PowerFlow).is_reuse();

    let (opf, reused_acopf, opf_validation) = if acopf_fresh {
        let a = ctx.latest_acopf().expect("fresh artifact exists");
        (a.value.clone(), true, a.validation.clone())
    } else {
        let (solved, opts) = match acopf_with_recovery(ctx, env, None) {
            Ok(s) => s,
            Err(f) => return clarify("solve_base_case", f),
        };
        let mut provenance = Provenance::new("solve_base_case", serde_json::to_value(&opts).unwrap_or_default());
        provenance.recovery = solved.recovery;
        ctx.store_acopf(solved.value.clone(), provenance, solved.validation.clone())
            .map_err(|e| e.to_string())?;
        (solved.value, false, solved.validation)
    };
    let base_reference = opf.state_checksum.clone();

    let reusable_pf = ctx
        .latest_power_flow()
        .filter(|a| pf_fresh && a.derived_from.as_deref() == Some(base_reference.as_str()))
        .cloned();
    let (pf, reused_pf, validation, recovery) = match reusable_pf {
        Some(a) => (a.value, true, a.validation, Vec::new()),
        None => {
            let dispatched = with_dispatch(&net, &opf);
            let log = ctx.active_case().map(|c| c.diff_log.clone()).unwrap_or_default();
            let checks = modification_checks(&log, &net);
            let th = ctx.thresholds;
            let rec = run_with_recovery(&th, false, |attempt| {
                let start = if attempt.flat_start {
                    PowerFlowStart::Flat
                } else {
                    PowerFlowStart::warm_from(&opf.state)
                };
                let th = match attempt.relaxed_tolerance {
                    Some(t) => th.relaxed(t),
                    None => th,
                };
                env.counters.power_flow.fetch_add(1, Ordering::Relaxed);
                let sol = solve_powerflow(&dispatched, &start, &th, &PowerFlowOptions::default()).map_err(|e| e.to_string())?;
                let outcome = SolveOutcome::from_power_flow(&sol, checks.clone());
                Ok((sol, outcome))
            });
            let Some(sol) = rec.value else {
                return clarify(
                    "solve_base_case",
                    SolveFailure::Clarify {
                        text: rec.clarification.unwrap_or_default(),
                        validation: rec.validation,
                        recovery: rec.recovery,
                    },
                );
            };
            (sol, false, rec.validation, rec.recovery)
        }
    };

    let mut validation = validation;
    validation.gates.push(Gate {
        name: "base_dispatch_validated".into(),
        passed: opf_validation.passed(),
        value: None,
        limit: None,
        detail: "the optimal dispatch behind the base case passed its gates".into(),
    });
    let mut provenance = Provenance::new(
        "solve_base_case",
        json!({"power_flow": PowerFlowOptions::default(), "start": "warm from the optimal dispatch"}),
    );
    provenance.recovery = recovery;
    let payload = json!({
        "case_name": net.case_name,
        "reused_acopf": reused_acopf,
        "reused_power_flow": reused_pf,
        "base_reference": base_reference,
        "converged": pf.converged,
        "iterations": pf.iterations,
        "max_mismatch_pu": pf.max_mismatch_pu,
        "min_voltage_pu": pf.min_voltage_pu(),
        "max_voltage_pu": pf.max_voltage_pu(),
        "max_loading_percent": pf.max_loading_percent(),
        "losses_mw": pf.losses_mw,
        "objective_cost": opf.objective_cost,
        "diff_count": ctx.diff_len(),
    });
    let artifact = if reused_pf {
        None
    } else {
        Some(
            ctx.store_power_flow(pf, Some(base_reference), provenance.clone(), validation.clone())
                .map_err(|e| e.to_string())?,
        )
    };
    Ok(Execution {
        payload,
        validation,
        provenance,
        artifact,
        clarification: None,
    })
}

/// The stored base point, if it is current.
fn fresh_base(ctx: &AgentContext) -> Result<(PowerFlowSolution, String, ValidationReport), String> {
    if !ctx.freshness_check(ArtifactKind::PowerFlow).is_reuse() {
        return Err("the base case is missing or out of date; run solve_base_case first".into());
    }
    let a = ctx.latest_power_flow().expect("fresh artifact exists");
    Ok((
        a.value.clone(),
        a.derived_from.clone().unwrap_or_default(),
        a.validation.clone(),
    ))
}

/// Ranking entries as they appear in tool payloads.
pub fn critical_json(ranking: &[CriticalElement], results: &[ContingencyResult]) -> Vec<Value> {
    ranking
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let r = results.iter().find(|r| r.contingency == c.contingency);
            json!({
                "rank": i + 1,
                "element_index": c.contingency.element_index,
                "label": c.contingency.label,
                "kind": c.contingency.outage_kind.as_str(),
                "status": r.map(|r| r.status),
                "score": c.score,
                "n_overloads": c.evidence.n_overloads,
                "worst_overload_excess_percent": c.evidence.worst_overload_excess_percent,
                "worst_voltage_deficit_pu": c.evidence.worst_voltage_deficit_pu,
                "curtailment_mw": c.evidence.curtailment_mw,
                "diverged": c.evidence.diverged,
                "max_loading_percent": r.and_then(|r| r.max_loading_percent),
                "min_voltage_pu": r.and_then(|r| r.min_voltage_pu),
                "justification": c.justification,
            })
        })
        .collect()
}

fn scope_from(s: Option<&str>) -> ContingencyScope {
    match s {
        Some("transformers") => ContingencyScope::Transformers,
        Some("all") => ContingencyScope::All,
        _ => ContingencyScope::Lines,
    }
}

fn scope_name(s: ContingencyScope) -> &'static str {
    match s {
        ContingencyScope::Lines => "lines",
        ContingencyScope::Transformers => "transformers",
        ContingencyScope::All => "all",
    }
}

fn run_n1_contingency_analysis(args: &Map<String, Value>, ctx: &mut AgentContext, env: &ToolEnv) -> Result<Execution, String> {
    let (base, base_reference, base_validation) = fresh_base(ctx)?;
    let net = current(ctx)?;
    let opts = SweepOptions {
        scope: scope_from(args.get("scope").and_then(Value::as_str)),
        top_k: args.get("top_k").and_then(Value::as_u64).unwrap_or(5) as usize,
        parallel: env.parallel_sweeps,
        ..Default::default()
    };
    let result = run_n1(&net, &base, &base_reference, ctx.cache_binding(), &ctx.thresholds, &opts).map_err(|e| e.to_string())?;
    env.counters
        .contingency_evaluations
        .fetch_add(result.fresh_evaluations, Ordering::Relaxed);

    let s = &result.summary_stats;
    let covered = s.secure + s.violations + s.islanding + s.diverged == s.total;
    let mut validation = base_validation;
    validation.gates.push(Gate {
        name: "coverage".into(),
        passed: covered && s.total == result.results.len(),
        value: Some(s.total as f64),
        limit: None,
        detail: "every enumerated outage has exactly one status".into(),
    });
    let payload = json!({
        "case_name": result.case_name,
        "scope": scope_name(result.scope),
        "total": s.total,
        "secure": s.secure,
        "violations": s.violations,
        "islanding": s.islanding,
        "diverged": s.diverged,
        "max_loading_percent": result.max_loading_percent(),
        "cache_hits": result.cache_hits,
        "fresh_evaluations": result.fresh_evaluations,
        "base_reference": result.base_reference,
        "critical": critical_json(&result.ranking, &result.results),
    });
    let provenance = Provenance::new("run_n1_contingency_analysis", serde_json::to_value(opts).unwrap_or_default());
    let artifact = ctx
        .store_contingency(result, provenance.clone(), validation.clone())
        .map_err(|e| e.to_string())?;
    Ok(Execution {
        payload,
        validation,
        provenance,
        artifact: Some(artifact),
        clarification: None,
    })
}

fn analyze_specific_contingency(args: &Map<String, Value>, ctx: &mut AgentContext, env: &ToolEnv) -> Result<Execution, String> {
    let (base, _, base_validation) = fresh_base(ctx)?;
    let net = current(ctx)?;
    let element = args["element"].as_u64().ok_or("element must be a non-negative integer")? as usize;
    let case = contingency_for(&net, element).map_err(|e| e.to_string())?;
    if let Some(kind) = args.get("kind").and_then(Value::as_str) {
        if kind != case.outage_kind.as_str() {
            return Err(format!(
                "branch {element} ({}) is a {}, not a {kind}",
                case.label,
                case.outage_kind.as_str()
            ));
        }
    }
    let binding = ctx.cache_binding().expect("case loaded");
    let key = binding.key(&case);
    let (result, from_cache) = match binding.cache.get(&key) {
        Some(mut hit) => {
            hit.from_cache = true;
            (hit, true)
        }
        None => {
            env.counters.contingency_evaluations.fetch_add(1, Ordering::Relaxed);
            let r = evaluate_contingency(&net, &base, &case, &ctx.thresholds, &PowerFlowOptions::default());
            binding.cache.insert(key, r.clone());
            (r, false)
        }
    };
    if !from_cache {
        ctx.touch();
    }
    let weights = SweepOptions::default().weights;
    let ranked = rank_critical(std::slice::from_ref(&result), 1, ctx.thresholds.v_low_pu, &weights);
    let evidence = Evidence::from_result(&result, ctx.thresholds.v_low_pu);
    let overloads: Vec<Value> = result
        .overloaded_branches
        .iter()
        .map(|o| serde_json::to_value(o).unwrap_or_default())
        .collect();
    let payload = json!({
        "element_index": element,
        "label": case.label,
        "kind": case.outage_kind.as_str(),
        "status": result.status,
        "max_loading_percent": result.max_loading_percent,
        "min_voltage_pu": result.min_voltage_pu,
        "min_voltage_bus": result.min_voltage_bus,
        "curtailment_mw": result.curtailment_mw,
        "n_overloads": evidence.n_overloads,
        "worst_overload_excess_percent": evidence.worst_overload_excess_percent,
        "worst_voltage_deficit_pu": evidence.worst_voltage_deficit_pu,
        "overloads": overloads,
        "low_voltage_buses": result.low_voltage_buses,
        "score": ranked[0].score,
        "justification": ranked[0].justification,
        "from_cache": from_cache,
    });
    Ok(Execution {
        payload,
        validation: base_validation,
        provenance: Provenance::new("analyze_specific_contingency", json!({"power_flow": PowerFlowOptions::default()})),
        artifact: None,
        clarification: None,
    })
}

fn get_contingency_status(_: &Map<String, Value>, ctx: &mut AgentContext, _: &ToolEnv) -> Result<Execution, String> {
    let freshness = ctx.freshness_check(ArtifactKind::Contingency);
    let stale_edits = match &freshness {
        Freshness::Stale { since, .. } => since.len(),
        Freshness::Reuse => 0,
    };
    let cached = ctx.contingency_cache.len();
    let Some(a) = ctx.latest_contingency() else {
        return Ok(Execution {
            payload: json!({
                "available": false,
                "fresh": false,
                "stale_edits": stale_edits,
                "cached_results": cached,
                "critical": [],
                "total": 0,
                "secure": 0,
                "violations": 0,
                "islanding": 0,
                "diverged": 0,
                "max_loading_percent": null,
            }),
            validation: passed_gate("lookup", "no contingency analysis stored yet"),
            provenance: Provenance::new("get_contingency_status", Value::Null),
            artifact: None,
            clarification: None,
        });
    };
    let r = &a.value;
    let s = &r.summary_stats;
    let payload = json!({
        "available": true,
        "fresh": freshness.is_reuse(),
        "stale_edits": stale_edits,
        "cached_results": cached,
        "case_name": r.case_name,
        "scope": scope_name(r.scope),
        "total": s.total,
        "secure": s.secure,
        "violations": s.violations,
        "islanding": s.islanding,
        "diverged": s.diverged,
        "max_loading_percent": r.max_loading_percent(),
        "critical": critical_json(&r.ranking, &r.results),
    });
    Ok(Execution {
        payload,
        validation: a.validation.clone(),
        provenance: a.provenance.clone(),
        artifact: Some(crate::session::ArtifactRef {
            kind: ArtifactKind::Contingency,
            version: a.version,
        }),
        clarification: None,
    })
}
