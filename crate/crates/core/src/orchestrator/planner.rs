//! Rule-based intent classification and plan validation.

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::case_io::{normalize_case_name, BUILTIN_CASES};
use crate::session::{AgentContext, ArtifactKind};
use crate::tools::ToolRegistry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentRole {
    Acopf,
    Contingency,
    Coordinator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intent {
    Solve,
    ModifyLoad,
    Status,
    N1Sweep,
    SpecificOutage,
    RankCritical,
    ContingencyStatus,
    CrossDomain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub tool_name: String,
    pub arguments: Map<String, Value>,
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub utterance: String,
    pub intent: Intent,
    pub assigned_agent: AgentRole,
    pub steps: Vec<PlanStep>,
    pub confidence: f64,
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum PlanError {
    /// The request could not be mapped to tools; the text asks the user to
    /// clarify.
    #[error("{0}")]
    Unparseable(String),
    #[error("plan step {step} names unknown tool '{tool}'")]
    UnknownTool { step: usize, tool: String },
    #[error("plan step {step} ({tool}) needs a base case solved earlier in the plan")]
    DependencyViolation { step: usize, tool: String },
}

/// Tools that read the base operating point.
const NEEDS_BASE: [&str; 2] = ["run_n1_contingency_analysis", "analyze_specific_contingency"];
/// Tools that change the network or the base point.
const MUTATES: [&str; 2] = ["solve_acopf_case", "modify_bus_load"];

/// Every tool exists, and steps that read the base point come after a base
/// solve in the same plan, or the session already holds a current base and
/// nothing earlier in the plan invalidates it.
pub fn validate_plan(plan: &Plan, registry: &ToolRegistry, ctx: &AgentContext) -> Result<(), PlanError> {
    let mut base_ready = ctx.freshness_check(ArtifactKind::PowerFlow).is_reuse();
    for (i, step) in plan.steps.iter().enumerate() {
        if !registry.contains(&step.tool_name) {
            return Err(PlanError::UnknownTool {
                step: i,
                tool: step.tool_name.clone(),
            });
        }
        if MUTATES.contains(&step.tool_name.as_str()) {
            base_ready = false;
        }
        if step.tool_name == "solve_base_case" {
            base_ready = true;
        }
        if NEEDS_BASE.contains(&step.tool_name.as_str()) && !base_ready {
            return Err(PlanError::DependencyViolation {
                step: i,
                tool: step.tool_name.clone(),
            });
        }
    }
    Ok(())
}

fn step(tool: &str, args: Value, rationale: &str) -> PlanStep {
    PlanStep {
        tool_name: tool.into(),
        arguments: match args {
            Value::Object(m) => m,
            _ => Map::new(),
        },
        rationale: rationale.into(),
    }
}

struct Patterns {
    case: Regex,
    bus: Regex,
    to_mw: Regex,
    by_mw: Regex,
    mvar: Regex,
    element: Regex,
}

impl Patterns {
    fn new() -> Self {
        Patterns {
            case: Regex::new(r"\b(?:ieee|case)[\s_-]*(\d+)\b|\b(\d+)[\s-]*bus\b").unwrap(),
            bus: Regex::new(r"\bbus\s*(?:#|no\.?|number)?\s*(\d+)\b").unwrap(),
            to_mw: Regex::new(r"\bto\s*(-?\d+(?:\.\d+)?)\s*mw\b").unwrap(),
            by_mw: Regex::new(r"\bby\s*(-?\d+(?:\.\d+)?)\s*mw\b").unwrap(),
            mvar: Regex::new(r"(-?\d+(?:\.\d+)?)\s*mvar\b").unwrap(),
            element: Regex::new(r"\b(line|branch|transformer|element|outage|contingency)\s*(?:index\s*)?(?:#|no\.?|number)?\s*(\d+)\b")
                .unwrap(),
        }
    }
}

fn has_any(text: &str, words: &[&str]) -> bool {
    words.iter().any(|w| text.contains(w))
}

fn clarification() -> String {
    format!(
        "I can solve optimal power flow for a test case ({}), change a bus load, report status, run an N-1 contingency sweep, rank critical outages or analyze one outage. What would you like to do?",
        BUILTIN_CASES.join(", ")
    )
}

/// Deterministic planner over a fixed grammar of intent patterns.
pub fn plan(utterance: &str, ctx: &AgentContext) -> Result<Plan, PlanError> {
    let p = Patterns::new();
    let text = utterance.to_lowercase();
    let named_case = p
        .case
        .captures(&text)
        .and_then(|c| c.get(1).or_else(|| c.get(2)))
        .map(|m| normalize_case_name(m.as_str()));
    let active = ctx.case.as_ref().map(|c| c.source.name.clone());

    let wants_solve = has_any(&text, &["solve", "optimal power flow", "opf", "dispatch", "optimi"]);
    let wants_contingency = has_any(
        &text,
        &["contingenc", "n-1", "n1 ", "t-1", "outage", "critical", "security", "reliability"],
    );
    let wants_rank = has_any(&text, &["critical", "worst", "rank", "most severe", "weakest"]);
    let wants_load = text.contains("load")
        && has_any(&text, &["increase", "decrease", "set", "change", "raise", "lower", "reduce", "make"])
        && p.bus.is_match(&text);
    let wants_status = has_any(&text, &["status", "summary", "summarize", "what is loaded", "what's loaded", "modifications"]);
    let sequenced = has_any(&text, &[" then ", " and then ", "followed by", "after that"]);

    let mk = |intent, agent, steps, confidence| Plan {
        utterance: utterance.to_string(),
        intent,
        assigned_agent: agent,
        steps,
        confidence,
    };
    let need_case = || -> Result<String, PlanError> {
        named_case.clone().or(active.clone()).ok_or_else(|| {
            PlanError::Unparseable(format!(
                "Which case should I use? Supported cases: {}.",
                BUILTIN_CASES.join(", ")
            ))
        })
    };

    if wants_load {
        if active.is_none() {
            return Err(PlanError::Unparseable(
                "No case is loaded yet. Which case should I solve before changing loads?".into(),
            ));
        }
        let bus: u64 = p.bus.captures(&text).and_then(|c| c[1].parse().ok()).unwrap_or(0);
        let target = if let Some(c) = p.to_mw.captures(&text) {
            c[1].parse::<f64>().ok()
        } else if let Some(c) = p.by_mw.captures(&text) {
            let delta: f64 = c[1].parse().unwrap_or(0.0);
            let sign = if has_any(&text, &["decrease", "lower", "reduce"]) { -1.0 } else { 1.0 };
            let net = ctx.current_network().expect("case loaded");
            net.bus_position(bus as u32).map(|i| net.buses[i].pd_mw + sign * delta)
        } else {
            None
        };
        let Some(p_mw) = target else {
            return Err(PlanError::Unparseable(format!(
                "What should the new load at bus {bus} be? For example: set the load at bus {bus} to 50 MW."
            )));
        };
        let mut args = json!({"bus": bus, "p_mw": p_mw});
        if let Some(q) = p.mvar.captures(&text).and_then(|c| c[1].parse::<f64>().ok()) {
            args["q_mvar"] = json!(q);
        }
        return Ok(mk(
            Intent::ModifyLoad,
            AgentRole::Acopf,
            vec![step("modify_bus_load", args, "apply the load change and re-optimize")],
            0.9,
        ));
    }

    if wants_solve && wants_contingency && (sequenced || named_case.is_some()) {
        let case = need_case()?;
        return Ok(mk(
            Intent::CrossDomain,
            AgentRole::Coordinator,
            vec![
                step("solve_acopf_case", json!({"case_name": case}), "optimal dispatch first"),
                step("solve_base_case", json!({}), "base point from the optimal dispatch"),
                step("run_n1_contingency_analysis", json!({"scope": "lines"}), "single-outage sweep and ranking"),
            ],
            0.85,
        ));
    }

    if wants_contingency {
        if text.contains("status") && !wants_rank {
            return Ok(mk(
                Intent::ContingencyStatus,
                AgentRole::Contingency,
                vec![step("get_contingency_status", json!({}), "report the stored sweep")],
                0.8,
            ));
        }
        let case = need_case()?;
        let base_args = if Some(&case) == active.as_ref() {
            json!({})
        } else {
            json!({"case_name": case})
        };
        if let Some(c) = p.element.captures(&text) {
            let element: u64 = c[2].parse().unwrap_or(0);
            let mut args = json!({"element": element});
            match &c[1] {
                "line" => args["kind"] = json!("line"),
                "transformer" => args["kind"] = json!("transformer"),
                _ => {}
            }
            return Ok(mk(
                Intent::SpecificOutage,
                AgentRole::Contingency,
                vec![
                    step("solve_base_case", base_args, "base point, reused when current"),
                    step("analyze_specific_contingency", args, "evaluate the one outage"),
                ],
                0.85,
            ));
        }
        let scope = if text.contains("transformer") && !text.contains("line") {
            "transformers"
        } else if has_any(&text, &["all branches", "all elements", "lines and transformers"]) {
            "all"
        } else {
            "lines"
        };
        let intent = if wants_rank { Intent::RankCritical } else { Intent::N1Sweep };
        return Ok(mk(
            intent,
            AgentRole::Contingency,
            vec![
                step("solve_base_case", base_args, "base point, reused when current"),
                step("run_n1_contingency_analysis", json!({"scope": scope}), "sweep and rank outages"),
            ],
            if active.is_some() || named_case.is_some() { 0.9 } else { 0.6 },
        ));
    }

    if wants_status {
        if active.is_none() {
            return Err(PlanError::Unparseable(
                "No case is loaded yet. Which case should I solve?".into(),
            ));
        }
        return Ok(mk(
            Intent::Status,
            AgentRole::Coordinator,
            vec![step("get_network_status", json!({}), "summarize the session")],
            0.8,
        ));
    }

    if wants_solve || named_case.is_some() {
        let case = need_case()?;
        return Ok(mk(
            Intent::Solve,
            AgentRole::Acopf,
            vec![step("solve_acopf_case", json!({"case_name": case}), "load and optimize")],
            if named_case.is_some() { 0.95 } else { 0.7 },
        ));
    }

    Err(PlanError::Unparseable(clarification()))
}
