//! Schema-checked tool registry over the analysis modules. Every result is
//! gated before it reaches an agent, and a failed call leaves the session
//! as it was.

mod domain;
mod gates;
mod schema;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::case_io::CaseCatalog;
use crate::session::{AgentContext, ArtifactRef, Gate, Provenance, ValidationReport};

pub use domain::{critical_json, default_registry, register_domain_tools};
pub use gates::{
    gate_report, modification_checks, run_with_recovery, validate_result, Attempt, ModificationCheck, Recovered,
    RecoveryAction, SolveOutcome, Verdict, RELAXED_TOLERANCE,
};
pub use schema::{FieldSpec, ParamSpec, ToolSpec, ValueType};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum ToolError {
    #[error("a tool named '{0}' is already registered")]
    DuplicateName(String),
    #[error("unknown tool '{0}'")]
    UnknownTool(String),
    #[error("invalid argument '{field}': {reason}")]
    ArgsInvalid { field: String, reason: String },
}

/// Solver call counts, shared by every invocation through one registry.
#[derive(Debug, Default)]
pub struct SolveCounters {
    pub acopf: AtomicUsize,
    pub power_flow: AtomicUsize,
    pub contingency_evaluations: AtomicUsize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CounterSnapshot {
    pub acopf: usize,
    pub power_flow: usize,
    pub contingency_evaluations: usize,
}

impl SolveCounters {
    pub fn snapshot(&self) -> CounterSnapshot {
        CounterSnapshot {
            acopf: self.acopf.load(Ordering::Relaxed),
            power_flow: self.power_flow.load(Ordering::Relaxed),
            contingency_evaluations: self.contingency_evaluations.load(Ordering::Relaxed),
        }
    }
}

/// What executors may use besides the session.
#[derive(Debug, Clone, Default)]
pub struct ToolEnv {
    pub catalog: CaseCatalog,
    pub counters: Arc<SolveCounters>,
    /// Run contingency sweeps on the thread pool.
    pub parallel_sweeps: bool,
}

/// What an executor hands back on success.
#[derive(Debug, Clone)]
pub struct Execution {
    pub payload: Value,
    pub validation: ValidationReport,
    pub provenance: Provenance,
    pub artifact: Option<ArtifactRef>,
    /// Set when the recovery ladder ran out; the call is then a failure.
    pub clarification: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_name: String,
    pub ok: bool,
    pub payload: Value,
    pub validation: ValidationReport,
    pub provenance: Provenance,
    pub artifact: Option<ArtifactRef>,
    /// Session version after the call; unchanged when the call failed.
    pub context_version: u64,
    pub timestamp: DateTime<Utc>,
}

pub type Executor = Box<dyn Fn(&Map<String, Value>, &mut AgentContext, &ToolEnv) -> Result<Execution, String> + Send + Sync>;

struct RegisteredTool {
    spec: ToolSpec,
    executor: Executor,
}

pub struct ToolRegistry {
    tools: BTreeMap<String, RegisteredTool>,
    order: Vec<String>,
    pub env: ToolEnv,
}

impl std::fmt::Debug for ToolRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ToolRegistry").field("tools", &self.order).finish()
    }
}

impl ToolRegistry {
    pub fn new(env: ToolEnv) -> Self {
        ToolRegistry {
            tools: BTreeMap::new(),
            order: Vec::new(),
            env,
        }
    }

    pub fn register_tool(&mut self, spec: ToolSpec, executor: Executor) -> Result<(), ToolError> {
        if self.tools.contains_key(&spec.name) {
            return Err(ToolError::DuplicateName(spec.name));
        }
        self.order.push(spec.name.clone());
        self.tools.insert(spec.name.clone(), RegisteredTool { spec, executor });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&ToolSpec> {
        self.tools.get(name).map(|t| &t.spec)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.tools.contains_key(name)
    }

    /// Specs in registration order.
    pub fn catalog(&self) -> Vec<&ToolSpec> {
        self.order.iter().map(|n| &self.tools[n].spec).collect()
    }

    pub fn with_capability(&self, tag: &str) -> Vec<&ToolSpec> {
        self.catalog()
            .into_iter()
            .filter(|s| s.capabilities.iter().any(|c| c == tag))
            .collect()
    }

    pub fn declarations(&self) -> Vec<Value> {
        self.catalog().iter().map(|s| s.declaration()).collect()
    }

    /// Every spec's examples validate against its own parameters.
    pub fn self_test(&self) -> Result<(), (String, ToolError)> {
        for spec in self.catalog() {
            for ex in &spec.examples {
                spec.validate_args(ex).map_err(|e| (spec.name.clone(), e))?;
            }
        }
        Ok(())
    }

    /// Validates arguments, runs the executor on a copy of the session and
    /// commits the copy only when every gate passed.
    pub fn invoke(&self, name: &str, args: &Value, ctx: &mut AgentContext) -> Result<ToolResult, ToolError> {
        let tool = self.tools.get(name).ok_or_else(|| ToolError::UnknownTool(name.to_string()))?;
        let args = tool.spec.validate_args(args)?;
        let mut work = ctx.clone();
        let outcome = (tool.executor)(&args, &mut work, &self.env);
        let failure = |payload: Value, validation: ValidationReport, provenance: Provenance| ToolResult {
            tool_name: name.to_string(),
            ok: false,
            payload,
            validation,
            provenance,
            artifact: None,
            context_version: ctx.version,
            timestamp: Utc::now(),
        };
        let exec = match outcome {
            Err(message) => {
                let validation = ValidationReport {
                    gates: vec![Gate {
                        name: "execution".into(),
                        passed: false,
                        value: None,
                        limit: None,
                        detail: message.clone(),
                    }],
                };
                return Ok(failure(
                    json!({"error": message}),
                    validation,
                    Provenance::new(name, Value::Null),
                ));
            }
            Ok(exec) => exec,
        };
        if let Some(text) = exec.clarification {
            return Ok(failure(
                json!({"clarification": text, "recovery": exec.provenance.recovery}),
                exec.validation,
                exec.provenance,
            ));
        }
        let problems = tool.spec.check_payload(&exec.payload);
        if !exec.validation.passed() || !problems.is_empty() {
            let mut validation = exec.validation;
            if !problems.is_empty() {
                validation.gates.push(Gate {
                    name: "result_schema".into(),
                    passed: false,
                    value: None,
                    limit: None,
                    detail: problems.join("; "),
                });
            }
            let failed: Vec<String> = validation.failed().map(|g| g.name.clone()).collect();
            return Ok(failure(
                json!({"error": format!("result failed validation: {}", failed.join(", "))}),
                validation,
                exec.provenance,
            ));
        }
        *ctx = work;
        Ok(ToolResult {
            tool_name: name.to_string(),
            ok: true,
            payload: exec.payload,
            validation: exec.validation,
            provenance: exec.provenance,
            artifact: exec.artifact,
            context_version: ctx.version,
            timestamp: Utc::now(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn echo_spec(name: &str, tag: &str) -> ToolSpec {
        ToolSpec {
            name: name.into(),
            description: "echo".into(),
            parameters: vec![ParamSpec::new("x", ValueType::Number, true, "value")],
            result_fields: vec![FieldSpec::required("x", ValueType::Number)],
            capabilities: vec![tag.into()],
            examples: vec![json!({"x": 1.0})],
        }
    }

    fn echo() -> Executor {
        Box::new(|args, ctx, _| {
            ctx.workflow = None;
            let x = args["x"].as_f64().unwrap();
            let passed = x >= 0.0;
            Ok(Execution {
                payload: json!({"x": x}),
                validation: ValidationReport {
                    gates: vec![Gate {
                        name: "sign".into(),
                        passed,
                        value: Some(x),
                        limit: Some(0.0),
                        detail: String::new(),
                    }],
                },
                provenance: Provenance::new("echo", Value::Null),
                artifact: None,
                clarification: None,
            })
        })
    }

    #[test]
    fn duplicate_names_are_refused() {
        let mut r = ToolRegistry::new(ToolEnv::default());
        r.register_tool(echo_spec("a", "t"), echo()).unwrap();
        assert_eq!(
            r.register_tool(echo_spec("a", "t"), echo()),
            Err(ToolError::DuplicateName("a".into()))
        );
    }

    #[test]
    fn capability_lookup_and_unknown_tool() {
        let mut r = ToolRegistry::new(ToolEnv::default());
        r.register_tool(echo_spec("a", "re-optimization"), echo()).unwrap();
        r.register_tool(echo_spec("b", "status"), echo()).unwrap();
        let names: Vec<&str> = r.with_capability("re-optimization").iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, vec!["a"]);
        let mut ctx = AgentContext::new("s");
        assert_eq!(
            r.invoke("zzz", &json!({}), &mut ctx),
            Err(ToolError::UnknownTool("zzz".into()))
        );
        assert!(r.self_test().is_ok());
    }

    #[test]
    fn failed_gate_leaves_context_untouched() {
        let mut r = ToolRegistry::new(ToolEnv::default());
        r.register_tool(echo_spec("a", "t"), echo()).unwrap();
        let mut ctx = AgentContext::new("s");
        ctx.set_workflow(crate::session::WorkflowState::new("p", []));
        let before = ctx.clone();
        let res = r.invoke("a", &json!({"x": -1.0}), &mut ctx).unwrap();
        assert!(!res.ok);
        assert_eq!(ctx, before);
        let res = r.invoke("a", &json!({"x": 2.0}), &mut ctx).unwrap();
        assert!(res.ok && res.validation.passed());
        assert!(ctx.workflow.is_none());
    }
}
