//! AC optimal power flow by a primal-dual interior-point method, plus
//! deterministic quality grading of the result.

mod cost;
pub mod ipm;
mod model;
mod quality;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::sha256_hex;
use crate::network::{connected_components, BusType, PowerSystem};
use crate::powerflow::{compute_flows_with, max_mismatch, BranchFlow, GridState};

pub use cost::{cost_eval, economic_dispatch_bound};
pub use ipm::{IpmSettings, IpmStatus, KktConditions};
pub use model::{AcopfModel, ConstraintKind, InequalityRef};
pub use quality::{assess_quality, QualityError, QualityWeights, SolutionQuality};

use ipm::NlpProblem;

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum OpfError {
    #[error("model error: {0}")]
    ModelError(String),
    #[error("infeasibility detected: {0}")]
    InfeasibleDetected(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OpfStart {
    /// Angles 0, magnitudes and generator outputs at the middle of their
    /// limits.
    #[default]
    Flat,
    Warm { state: GridState },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcopfOptions {
    /// Bound on each scaled KKT residual.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Internal objective scaling; the reported cost is unscaled.
    pub cost_mult: f64,
    pub initial_barrier: f64,
    pub start: OpfStart,
}

impl Default for AcopfOptions {
    fn default() -> Self {
        AcopfOptions {
            tolerance: 1e-6,
            max_iterations: 150,
            cost_mult: 1e-4,
            initial_barrier: 1.0,
            start: OpfStart::Flat,
        }
    }
}

/// Initial barrier used by the single restart after a numerical breakdown.
const RESTART_BARRIER: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenDispatch {
    pub generator: usize,
    pub bus_id: u32,
    pub in_service: bool,
    pub p_mw: f64,
    pub q_mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintMargin {
    pub kind: ConstraintKind,
    /// Branch index, bus id, or generator index depending on `kind`.
    pub element: usize,
    pub label: String,
    pub limit: f64,
    pub value: f64,
    /// Distance to the limit in the constraint's unit; negative when violated.
    pub margin: f64,
}

impl ConstraintMargin {
    /// Margin divided by the unit scale (1 for p.u. voltages, base MVA for
    /// power quantities).
    pub fn normalized(&self, base_mva: f64) -> f64 {
        match self.kind {
            ConstraintKind::VoltageMax | ConstraintKind::VoltageMin => self.margin,
            _ => self.margin / base_mva,
        }
    }
}

/// Normalized margin below which a constraint counts as violated.
pub const FEASIBILITY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Multipliers {
    pub cost_mult: f64,
    /// Equalities: active balance per bus, reactive balance per bus, slack angles.
    pub equality: Vec<f64>,
    /// Same order as `constraint_margins`.
    pub inequality: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ACOPFSolution {
    pub case_name: String,
    pub solved: bool,
    pub objective_cost: f64,
    pub gen_dispatch: Vec<GenDispatch>,
    pub branch_loading: Vec<BranchFlow>,
    pub min_voltage_pu: f64,
    pub max_voltage_pu: f64,
    pub losses_mw: f64,
    pub constraint_margins: Vec<ConstraintMargin>,
    pub iterations: usize,
    pub max_iterations: usize,
    pub convergence_message: String,
    pub solved_at: DateTime<Utc>,
    pub state: GridState,
    /// SHA-256 over the serialized state.
    pub state_checksum: String,
    pub max_mismatch_pu: f64,
    /// Marginal cost of active power per bus, $/MWh.
    pub bus_price: Vec<f64>,
    pub kkt: KktConditions,
    pub multipliers: Multipliers,
    pub tolerance: f64,
}

impl ACOPFSolution {
    pub fn max_loading_percent(&self) -> Option<f64> {
        self.branch_loading
            .iter()
            .filter_map(|f| f.loading_percent)
            .fold(None, |acc, l| Some(acc.map_or(l, |a: f64| a.max(l))))
    }

    pub fn worst_normalized_margin(&self, base_mva: f64) -> f64 {
        self.constraint_margins
            .iter()
            .map(|m| m.normalized(base_mva))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn total_generation_mw(&self) -> f64 {
        self.gen_dispatch.iter().map(|g| g.p_mw).sum()
    }
}

pub fn state_checksum(state: &GridState) -> String {
    let json = serde_json::to_vec(state).expect("state serializes");
    sha256_hex(&json)
}

fn check_model(net: &PowerSystem) -> Result<(), OpfError> {
    if net.cost_models.len() != net.generators.len() {
        return Err(OpfError::ModelError(format!(
            "{} cost models for {} generators",
            net.cost_models.len(),
            net.generators.len()
        )));
    }
    for (g, c) in net.cost_models.iter().enumerate() {
        if c.coefficients.len() > 3 {
            return Err(OpfError::ModelError(format!("cost polynomial above degree 2, generator {g}")));
        }
        if c.c2() < 0.0 {
            return Err(OpfError::ModelError(format!("nonconvex cost, generator {g}")));
        }
        if c.coefficients.iter().any(|v| !v.is_finite()) {
            return Err(OpfError::ModelError(format!("non-finite cost coefficient, generator {g}")));
        }
    }
    if net.in_service_generators().next().is_none() {
        return Err(OpfError::ModelError("no in-service generator".into()));
    }
    let comps = connected_components(net);
    for (c, group) in comps.groups.iter().enumerate() {
        let slacks = group.iter().filter(|&&i| net.buses[i].bus_type == BusType::Slack).count();
        if slacks != 1 {
            return Err(OpfError::ModelError(format!(
                "component {c} has {slacks} slack buses; the network must be connected around one slack"
            )));
        }
    }
    Ok(())
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    match (lo.is_finite(), hi.is_finite()) {
        (true, true) => 0.5 * (lo + hi),
        (true, false) => lo + 1.0,
        (false, true) => hi - 1.0,
        (false, false) => 0.0,
    }
}

fn initial_point(model: &AcopfModel, start: &OpfStart) -> Vec<f64> {
    let net = model.net;
    let base = net.base_mva;
    let mut x = vec![0.0; model.dim()];
    if let OpfStart::Warm { state } = start {
        if state.vm_pu.len() == model.nb && state.gen_p_mw.len() == net.generators.len() {
            for i in 0..model.nb {
                x[model.th(i)] = state.va_deg[i].to_radians();
                x[model.vm(i)] = state.vm_pu[i];
            }
            for (k, &g) in model.gens.iter().enumerate() {
                x[model.pg(k)] = state.gen_p_mw[g] / base;
                x[model.qg(k)] = state.gen_q_mvar[g] / base;
            }
            return x;
        }
    }
    for (i, b) in net.buses.iter().enumerate() {
        x[model.vm(i)] = midpoint(b.vmin_pu, b.vmax_pu);
    }
    for (k, &g) in model.gens.iter().enumerate() {
        let gen = &net.generators[g];
        x[model.pg(k)] = midpoint(gen.pmin_mw, gen.pmax_mw) / base;
        x[model.qg(k)] = midpoint(gen.qmin_mvar, gen.qmax_mvar) / base;
    }
    x
}

/// Margins of every modeled inequality evaluated directly on `state`.
pub fn constraint_margins(net: &PowerSystem, state: &GridState, flows: &[BranchFlow]) -> Vec<ConstraintMargin> {
    let model = AcopfModel::new(net, 1.0);
    model
        .inequalities
        .iter()
        .map(|ineq| {
            let (label, value) = match ineq.kind {
                ConstraintKind::BranchFlowFrom => (
                    format!("branch {} from end", net.branches[ineq.element].label()),
                    flows[ineq.element].s_from_mva(),
                ),
                ConstraintKind::BranchFlowTo => (
                    format!("branch {} to end", net.branches[ineq.element].label()),
                    flows[ineq.element].s_to_mva(),
                ),
                ConstraintKind::VoltageMax | ConstraintKind::VoltageMin => (
                    format!("bus {} voltage", net.buses[ineq.element].id),
                    state.vm_pu[ineq.element],
                ),
                ConstraintKind::ActiveMax | ConstraintKind::ActiveMin => {
                    (format!("generator {} active output", ineq.element), state.gen_p_mw[ineq.element])
                }
                ConstraintKind::ReactiveMax | ConstraintKind::ReactiveMin => {
                    (format!("generator {} reactive output", ineq.element), state.gen_q_mvar[ineq.element])
                }
            };
            let element = match ineq.kind {
                ConstraintKind::VoltageMax | ConstraintKind::VoltageMin => net.buses[ineq.element].id as usize,
                _ => ineq.element,
            };
            let margin = if ineq.kind.is_upper() { ineq.limit - value } else { value - ineq.limit };
            ConstraintMargin {
                kind: ineq.kind,
                element,
                label,
                limit: ineq.limit,
                value,
                margin,
            }
        })
        .collect()
}

/// Infinity norm of the Lagrangian gradient at the solution's state and
/// multipliers, recomputed from scratch.
pub fn lagrangian_gradient_norm(net: &PowerSystem, sol: &ACOPFSolution) -> f64 {
    let model = AcopfModel::new(net, sol.multipliers.cost_mult);
    let x = state_vector(&model, &sol.state);
    let ev = model.evaluate(&x);
    ipm::lagrangian_gradient(&ev, &sol.multipliers.equality, &sol.multipliers.inequality)
        .iter()
        .fold(0.0, |m: f64, v| m.max(v.abs()))
}

fn state_vector(model: &AcopfModel, state: &GridState) -> Vec<f64> {
    initial_point(model, &OpfStart::Warm { state: state.clone() })
}

/// Minimize total polynomial generation cost subject to the AC network
/// equations and operating limits.
///
/// Iteration exhaustion yields `solved = false` with a diagnostic message.
/// A numerical breakdown triggers one restart from a larger initial
/// barrier; a second breakdown is reported as `InfeasibleDetected`.
pub fn solve_acopf(net: &PowerSystem, options: &AcopfOptions) -> Result<ACOPFSolution, OpfError> {
    check_model(net)?;
    let model = AcopfModel::new(net, options.cost_mult);
    let x0 = initial_point(&model, &options.start);
    let mut settings = IpmSettings {
        feas_tol: options.tolerance,
        grad_tol: options.tolerance,
        comp_tol: options.tolerance,
        cost_tol: options.tolerance,
        max_iterations: options.max_iterations,
        z0: options.initial_barrier,
        ..Default::default()
    };
    let mut result = ipm::solve(&model, x0.clone(), &settings);
    let mut restarted = false;
    if result.status == IpmStatus::NumericalFailure {
        settings.z0 = RESTART_BARRIER.max(options.initial_barrier * 10.0);
        let used = result.iterations;
        result = ipm::solve(&model, x0, &settings);
        result.iterations += used;
        restarted = true;
        if result.status == IpmStatus::NumericalFailure {
            return Err(OpfError::InfeasibleDetected(format!(
                "interior point broke down twice (after {} iterations); the limits appear infeasible",
                result.iterations
            )));
        }
    }

    let base = net.base_mva;
    let x = &result.x;
    let mut gen_p = vec![0.0; net.generators.len()];
    let mut gen_q = vec![0.0; net.generators.len()];
    for (k, &g) in model.gens.iter().enumerate() {
        gen_p[g] = x[model.pg(k)] * base;
        gen_q[g] = x[model.qg(k)] * base;
    }
    let state = GridState {
        vm_pu: (0..model.nb).map(|i| x[model.vm(i)]).collect(),
        va_deg: (0..model.nb).map(|i| x[model.th(i)].to_degrees()).collect(),
        gen_p_mw: gen_p,
        gen_q_mvar: gen_q,
    };
    let flows = compute_flows_with(net, &model.ybus, &state.voltages());
    let margins = constraint_margins(net, &state, &flows.branch_flows);
    let (objective_cost, _) = cost_eval(&net.cost_models, &state.gen_p_mw);
    let (_, mismatch) = max_mismatch(net, &state);
    let solved = result.status == IpmStatus::Converged;
    let mut message = match result.status {
        IpmStatus::Converged => format!("converged in {} iterations", result.iterations),
        _ => format!(
            "iteration limit {} reached without meeting the tolerance {:e} (feasibility {:.2e}, stationarity {:.2e})",
            options.max_iterations, options.tolerance, result.conditions.feascond, result.conditions.gradcond
        ),
    };
    if restarted {
        message.push_str(" after a restart from a larger barrier");
    }

    Ok(ACOPFSolution {
        case_name: net.case_name.clone(),
        solved,
        objective_cost,
        gen_dispatch: net
            .generators
            .iter()
            .enumerate()
            .map(|(g, gen)| GenDispatch {
                generator: g,
                bus_id: gen.bus_id,
                in_service: gen.in_service,
                p_mw: state.gen_p_mw[g],
                q_mvar: state.gen_q_mvar[g],
            })
            .collect(),
        min_voltage_pu: state.vm_pu.iter().copied().fold(f64::INFINITY, f64::min),
        max_voltage_pu: state.vm_pu.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        losses_mw: flows.losses_mw,
        branch_loading: flows.branch_flows,
        constraint_margins: margins,
        iterations: result.iterations,
        max_iterations: options.max_iterations,
        convergence_message: message,
        solved_at: Utc::now(),
        state_checksum: state_checksum(&state),
        state,
        max_mismatch_pu: mismatch,
        bus_price: (0..model.nb)
            .map(|i| result.lam[i] / (options.cost_mult * base))
            .collect(),
        kkt: result.conditions,
        multipliers: Multipliers {
            cost_mult: options.cost_mult,
            equality: result.lam,
            inequality: result.mu,
        },
        tolerance: options.tolerance,
    })
}
