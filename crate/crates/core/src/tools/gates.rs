use serde::{Deserialize, Serialize};

use crate::network::{ModKind, PowerSystem};
use crate::opf::ACOPFSolution;
use crate::powerflow::{PowerFlowSolution, ValidationThresholds};
use crate::session::{DiffEntry, Gate, ValidationReport};

/// Inner Newton tolerance used by the relaxed-tolerance retry.
pub const RELAXED_TOLERANCE: f64 = 1e-6;

/// Requested versus actual value of one modified quantity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModificationCheck {
    pub label: String,
    pub requested: f64,
    pub actual: f64,
}

/// The quantities the gates look at, extracted from any solver result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveOutcome {
    pub converged: bool,
    pub max_mismatch_pu: f64,
    pub min_voltage_pu: f64,
    pub max_voltage_pu: f64,
    pub modifications: Vec<ModificationCheck>,
}

impl SolveOutcome {
    pub fn from_acopf(sol: &ACOPFSolution, checks: Vec<ModificationCheck>) -> Self {
        SolveOutcome {
            converged: sol.solved,
            max_mismatch_pu: sol.max_mismatch_pu,
            min_voltage_pu: sol.min_voltage_pu,
            max_voltage_pu: sol.max_voltage_pu,
            modifications: checks,
        }
    }

    pub fn from_power_flow(sol: &PowerFlowSolution, checks: Vec<ModificationCheck>) -> Self {
        SolveOutcome {
            converged: sol.converged,
            max_mismatch_pu: sol.max_mismatch_pu,
            min_voltage_pu: sol.min_voltage_pu(),
            max_voltage_pu: sol.max_voltage_pu(),
            modifications: checks,
        }
    }
}

/// Final requested values of every edit in the log, read back from the
/// network a solver ran on. Relative edits are checked through replay, so
/// only absolute ones appear here.
pub fn modification_checks(log: &[DiffEntry], net: &PowerSystem) -> Vec<ModificationCheck> {
    let mut checks: Vec<ModificationCheck> = Vec::new();
    let mut push = |label: String, requested: f64, actual: f64| {
        checks.retain(|c| c.label != label);
        checks.push(ModificationCheck { label, requested, actual });
    };
    for e in log {
        match &e.modification.kind {
            ModKind::SetBusLoad { bus_id, p_mw, q_mvar } => {
                let Some(b) = net.bus_position(*bus_id).map(|i| &net.buses[i]) else { continue };
                push(format!("bus {bus_id} P load"), *p_mw, b.pd_mw);
                if let Some(q) = q_mvar {
                    push(format!("bus {bus_id} Q load"), *q, b.qd_mvar);
                }
            }
            ModKind::BranchOutage { index } | ModKind::BranchRestore { index } => {
                let wanted = matches!(e.modification.kind, ModKind::BranchRestore { .. });
                if let Some(br) = net.branches.get(*index) {
                    push(
                        format!("branch {index} in service"),
                        f64::from(u8::from(wanted)),
                        f64::from(u8::from(br.in_service)),
                    );
                }
            }
            ModKind::SetGenLimit { index, pmin_mw, pmax_mw } => {
                let Some(g) = net.generators.get(*index) else { continue };
                if let Some(v) = pmin_mw {
                    push(format!("generator {index} Pmin"), *v, g.pmin_mw);
                }
                if let Some(v) = pmax_mw {
                    push(format!("generator {index} Pmax"), *v, g.pmax_mw);
                }
            }
            ModKind::ScaleBusLoad { .. } => {}
        }
    }
    checks
}

pub fn gate_report(outcome: &SolveOutcome, th: &ValidationThresholds) -> ValidationReport {
    let mut gates = vec![
        Gate {
            name: "convergence".into(),
            passed: outcome.converged,
            value: None,
            limit: None,
            detail: if outcome.converged { "solver converged" } else { "solver did not converge" }.into(),
        },
        Gate {
            name: "balance_mismatch".into(),
            passed: outcome.max_mismatch_pu.is_finite() && outcome.max_mismatch_pu < th.balance_tol_pu,
            value: Some(outcome.max_mismatch_pu),
            limit: Some(th.balance_tol_pu),
            detail: "largest bus power mismatch, p.u.".into(),
        },
        Gate {
            name: "voltage_sanity".into(),
            passed: outcome.min_voltage_pu >= th.v_sanity_min_pu && outcome.max_voltage_pu <= th.v_sanity_max_pu,
            value: Some(outcome.min_voltage_pu),
            limit: Some(th.v_sanity_min_pu),
            detail: format!(
                "voltages must lie in [{}, {}] p.u.",
                th.v_sanity_min_pu, th.v_sanity_max_pu
            ),
        },
    ];
    let bad: Vec<&ModificationCheck> = outcome
        .modifications
        .iter()
        .filter(|c| (c.requested - c.actual).abs() > 1e-9 * c.requested.abs().max(1.0))
        .collect();
    gates.push(Gate {
        name: "modifications_reflected".into(),
        passed: bad.is_empty(),
        value: None,
        limit: None,
        detail: if bad.is_empty() {
            "every modified element holds its requested value".into()
        } else {
            bad.iter().map(|c| c.label.as_str()).collect::<Vec<_>>().join(", ")
        },
    });
    ValidationReport { gates }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum RecoveryAction {
    RetryFlatStart,
    RelaxTolerance { tolerance: f64 },
    RequestClarification,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Recover(RecoveryAction),
}

/// Gate verdict for a result produced after `recoveries_taken` steps of the
/// ladder: flat start, then relaxed tolerance, then clarification.
pub fn validate_result(outcome: &SolveOutcome, th: &ValidationThresholds, recoveries_taken: usize) -> Verdict {
    if gate_report(outcome, th).passed() {
        return Verdict::Pass;
    }
    Verdict::Recover(match recoveries_taken {
        0 => RecoveryAction::RetryFlatStart,
        1 => RecoveryAction::RelaxTolerance {
            tolerance: RELAXED_TOLERANCE,
        },
        _ => RecoveryAction::RequestClarification,
    })
}

/// How a solve should be attempted.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Attempt {
    pub flat_start: bool,
    pub relaxed_tolerance: Option<f64>,
}

pub struct Recovered<T> {
    /// The passing value, or `None` when the ladder ran out.
    pub value: Option<T>,
    pub validation: ValidationReport,
    /// Ladder steps taken, in order.
    pub recovery: Vec<String>,
    pub clarification: Option<String>,
    pub attempts: usize,
}

/// Runs `solve` and walks the recovery ladder until the gates pass.
///
/// `first_is_flat` says whether the first attempt already started flat; the
/// flat-start retry is then recorded as skipped rather than repeated, since
/// it would reproduce the same result.
pub fn run_with_recovery<T>(
    th: &ValidationThresholds,
    first_is_flat: bool,
    mut solve: impl FnMut(Attempt) -> Result<(T, SolveOutcome), String>,
) -> Recovered<T> {
    let mut attempt = Attempt {
        flat_start: first_is_flat,
        relaxed_tolerance: None,
    };
    let mut recovery = Vec::new();
    let mut attempts = 0;
    let mut last_report;
    let mut last_error = None;
    loop {
        attempts += 1;
        let verdict = match solve(attempt) {
            Ok((value, outcome)) => {
                last_report = gate_report(&outcome, th);
                match validate_result(&outcome, th, recovery.len()) {
                    Verdict::Pass => {
                        return Recovered {
                            value: Some(value),
                            validation: last_report,
                            recovery,
                            clarification: None,
                            attempts,
                        }
                    }
                    v => v,
                }
            }
            Err(message) => {
                last_report = ValidationReport {
                    gates: vec![Gate {
                        name: "convergence".into(),
                        passed: false,
                        value: None,
                        limit: None,
                        detail: message.clone(),
                    }],
                };
                last_error = Some(message);
                let failed = SolveOutcome {
                    converged: false,
                    max_mismatch_pu: f64::INFINITY,
                    min_voltage_pu: 0.0,
                    max_voltage_pu: 0.0,
                    modifications: Vec::new(),
                };
                validate_result(&failed, th, recovery.len())
            }
        };
        match verdict {
            Verdict::Pass => unreachable!("passing results return above"),
            Verdict::Recover(RecoveryAction::RetryFlatStart) => {
                if attempt.flat_start {
                    recovery.push("flat-start retry skipped: the attempt already started flat".to_string());
                    // Fall through to the next rung without re-solving.
                    recovery.push(format!("retry with relaxed tolerance {RELAXED_TOLERANCE:e}"));
                    attempt.relaxed_tolerance = Some(RELAXED_TOLERANCE);
                } else {
                    recovery.push("retry from a flat start".to_string());
                    attempt.flat_start = true;
                }
            }
            Verdict::Recover(RecoveryAction::RelaxTolerance { tolerance }) => {
                recovery.push(format!("retry with relaxed tolerance {tolerance:e}"));
                attempt.flat_start = true;
                attempt.relaxed_tolerance = Some(tolerance);
            }
            Verdict::Recover(RecoveryAction::RequestClarification) => {
                let failed: Vec<String> = last_report.failed().map(|g| format!("{} ({})", g.name, g.detail)).collect();
                let mut text = format!(
                    "The result did not pass validation after a flat-start retry and a relaxed tolerance: {}.",
                    failed.join("; ")
                );
                if last_error.is_some() {
                    text.push_str(" The request may be infeasible as posed.");
                }
                text.push_str(" Please check the requested changes or ask for a different analysis.");
                recovery.push("request clarification".to_string());
                return Recovered {
                    value: None,
                    validation: last_report,
                    recovery,
                    clarification: Some(text),
                    attempts,
                };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(mismatch: f64) -> SolveOutcome {
        SolveOutcome {
            converged: true,
            max_mismatch_pu: mismatch,
            min_voltage_pu: 0.95,
            max_voltage_pu: 1.05,
            modifications: vec![],
        }
    }

    #[test]
    fn ladder_order_on_mismatch() {
        let th = ValidationThresholds::default();
        assert_eq!(validate_result(&outcome(1e-9), &th, 0), Verdict::Pass);
        let bad = outcome(5e-4);
        assert_eq!(validate_result(&bad, &th, 0), Verdict::Recover(RecoveryAction::RetryFlatStart));
        assert_eq!(
            validate_result(&bad, &th, 1),
            Verdict::Recover(RecoveryAction::RelaxTolerance { tolerance: 1e-6 })
        );
        assert_eq!(validate_result(&bad, &th, 2), Verdict::Recover(RecoveryAction::RequestClarification));
    }

    #[test]
    fn voltage_and_modification_gates() {
        let th = ValidationThresholds::default();
        let mut o = outcome(1e-9);
        o.min_voltage_pu = 0.4;
        assert!(!gate_report(&o, &th).gate("voltage_sanity").unwrap().passed);
        let mut o = outcome(1e-9);
        o.modifications.push(ModificationCheck {
            label: "bus 10 P load".into(),
            requested: 50.0,
            actual: 0.0,
        });
        assert!(!gate_report(&o, &th).gate("modifications_reflected").unwrap().passed);
    }

    #[test]
    fn ladder_walks_every_rung_before_clarifying() {
        let th = ValidationThresholds::default();
        let mut seen = Vec::new();
        let r: Recovered<()> = run_with_recovery(&th, false, |a| {
            seen.push(a);
            Ok(((), outcome(5e-4)))
        });
        assert!(r.value.is_none());
        assert_eq!(r.attempts, 3);
        assert_eq!(
            seen,
            vec![
                Attempt { flat_start: false, relaxed_tolerance: None },
                Attempt { flat_start: true, relaxed_tolerance: None },
                Attempt { flat_start: true, relaxed_tolerance: Some(1e-6) },
            ]
        );
        assert_eq!(r.recovery.last().unwrap(), "request clarification");
        assert!(r.clarification.unwrap().contains("balance_mismatch"));
    }

    #[test]
    fn second_rung_success_stops_the_ladder() {
        let th = ValidationThresholds::default();
        let mut n = 0;
        let r = run_with_recovery(&th, false, |_| {
            n += 1;
            Ok((n, outcome(if n == 2 { 1e-9 } else { 5e-4 })))
        });
        assert_eq!(r.value, Some(2));
        assert_eq!(r.recovery, vec!["retry from a flat start".to_string()]);
    }
}
