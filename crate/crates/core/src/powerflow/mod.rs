//! AC power flow: admittance matrix, polar Newton–Raphson, branch flows and
//! the power-balance gate every surfaced result must pass.

mod flows;
mod newton;
mod ybus;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use flows::{
    bus_injections, check_balance, compute_flows, compute_flows_with, max_mismatch,
    scheduled_injections, BalanceCheck, BranchFlow, FlowSummary, GridState,
};
pub use newton::{solve_powerflow, BusRoles, PolarMismatch};
pub use ybus::{branch_stamp, build_ybus, AdmittanceMatrix, BranchStamp};

/// Tolerances and operating bands shared by all validators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValidationThresholds {
    /// Hard gate on the worst bus power mismatch, p.u.
    pub balance_tol_pu: f64,
    /// Newton target, p.u.
    pub nr_tol_pu: f64,
    pub v_sanity_min_pu: f64,
    pub v_sanity_max_pu: f64,
    pub thermal_warn_percent: f64,
    pub thermal_severe_percent: f64,
    pub v_low_pu: f64,
    pub v_high_pu: f64,
}

impl Default for ValidationThresholds {
    fn default() -> Self {
        ValidationThresholds {
            balance_tol_pu: 1e-4,
            nr_tol_pu: 1e-8,
            v_sanity_min_pu: 0.5,
            v_sanity_max_pu: 1.5,
            thermal_warn_percent: 110.0,
            thermal_severe_percent: 115.0,
            v_low_pu: 0.94,
            v_high_pu: 1.06,
        }
    }
}

impl ValidationThresholds {
    pub fn is_consistent(&self) -> bool {
        self.nr_tol_pu > 0.0
            && self.nr_tol_pu < self.balance_tol_pu
            && self.thermal_warn_percent <= self.thermal_severe_percent
            && self.v_sanity_min_pu < self.v_sanity_max_pu
            && self.v_low_pu < self.v_high_pu
    }

    /// Same gates with the Newton target loosened, used by the recovery path.
    pub fn relaxed(&self, nr_tol_pu: f64) -> Self {
        ValidationThresholds {
            nr_tol_pu: nr_tol_pu.min(self.balance_tol_pu * 0.5),
            ..*self
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PowerFlowStart {
    /// V = 1.0 p.u. (setpoints on voltage-controlled buses), angles 0.
    #[default]
    Flat,
    Warm { vm_pu: Vec<f64>, va_deg: Vec<f64> },
}

impl PowerFlowStart {
    pub fn warm_from(state: &GridState) -> Self {
        PowerFlowStart::Warm {
            vm_pu: state.vm_pu.clone(),
            va_deg: state.va_deg.clone(),
        }
    }

    pub fn is_flat(&self) -> bool {
        matches!(self, PowerFlowStart::Flat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowOptions {
    pub enforce_q_limits: bool,
    pub max_iterations: usize,
    /// Consecutive mismatch increases that count as divergence.
    pub max_growth_streak: usize,
}

impl Default for PowerFlowOptions {
    fn default() -> Self {
        PowerFlowOptions {
            enforce_q_limits: true,
            max_iterations: 30,
            max_growth_streak: 5,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum PowerFlowError {
    #[error("power flow diverged after {iterations} iterations (mismatch {last_mismatch:.3e} p.u.)")]
    Diverged { iterations: usize, last_mismatch: f64 },
    #[error("component {component} has load but no slack bus")]
    IslandWithoutSlack { component: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerFlowSolution {
    pub converged: bool,
    pub iterations: usize,
    /// Worst absolute P or Q bus mismatch recomputed from the final state.
    pub max_mismatch_pu: f64,
    pub vm_pu: Vec<f64>,
    pub va_deg: Vec<f64>,
    pub gen_p_mw: Vec<f64>,
    pub gen_q_mvar: Vec<f64>,
    pub branch_flows: Vec<BranchFlow>,
    pub losses_mw: f64,
    pub slack_p_mw: f64,
    /// Bus ids switched from voltage control to fixed Q at a limit.
    pub q_limited_buses: Vec<u32>,
    pub start: PowerFlowStart,
    pub thresholds: ValidationThresholds,
}

impl PowerFlowSolution {
    pub fn state(&self) -> GridState {
        GridState {
            vm_pu: self.vm_pu.clone(),
            va_deg: self.va_deg.clone(),
            gen_p_mw: self.gen_p_mw.clone(),
            gen_q_mvar: self.gen_q_mvar.clone(),
        }
    }

    pub fn max_loading_percent(&self) -> Option<f64> {
        self.branch_flows
            .iter()
            .filter_map(|f| f.loading_percent)
            .fold(None, |acc, l| Some(acc.map_or(l, |a: f64| a.max(l))))
    }

    pub fn min_voltage_pu(&self) -> f64 {
        self.vm_pu.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_voltage_pu(&self) -> f64 {
        self.vm_pu.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}
