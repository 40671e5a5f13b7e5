use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::PowerSystem;
use crate::powerflow::ValidationThresholds;

use super::{economic_dispatch_bound, ACOPFSolution, FEASIBILITY_TOL};

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum QualityError {
    #[error("cannot grade an unsolved OPF result")]
    UnsolvedInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QualityWeights {
    pub convergence: f64,
    pub constraints: f64,
    pub economics: f64,
    pub security: f64,
}

impl Default for QualityWeights {
    fn default() -> Self {
        QualityWeights {
            convergence: 0.2,
            constraints: 0.4,
            economics: 0.2,
            security: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionQuality {
    pub overall_score: f64,
    pub convergence_quality: f64,
    pub constraint_satisfaction: f64,
    pub economic_efficiency: f64,
    pub system_security: f64,
    pub detailed_metrics: BTreeMap<String, f64>,
    pub recommendations: Vec<String>,
}

/// Loading at which a branch earns a recommendation and starts losing
/// security score.
pub const LOADING_ATTENTION_PERCENT: f64 = 95.0;
/// Relative cost gap over the economic-dispatch bound that scores zero.
const ECONOMIC_GAP_FLOOR: f64 = 0.10;
/// Normalized violation that scores zero on constraint satisfaction.
const VIOLATION_FLOOR: f64 = 0.05;
/// Voltage excursion outside the band, p.u., that scores zero on security.
const VOLTAGE_EXCURSION_FLOOR: f64 = 0.05;

fn clamp10(v: f64) -> f64 {
    (10.0 * v).clamp(0.0, 10.0)
}

/// Deterministic grading of a solved ACOPF result.
///
/// - convergence: share of the iteration budget left unused;
/// - constraints: 10 when no margin is negative beyond tolerance, falling
///   linearly with the worst normalized violation;
/// - economics: cost gap to the lossless economic-dispatch bound;
/// - security: the weaker of thermal headroom (full marks below 95%
///   loading, zero at the warning level) and voltage position in the
///   operating band.
pub fn assess_quality(
    sol: &ACOPFSolution,
    net: &PowerSystem,
    thresholds: &ValidationThresholds,
    weights: &QualityWeights,
) -> Result<SolutionQuality, QualityError> {
    if !sol.solved {
        return Err(QualityError::UnsolvedInput);
    }
    let mut metrics = BTreeMap::new();
    let mut recommendations = Vec::new();

    let budget = sol.max_iterations.max(1) as f64;
    let convergence = clamp10(1.0 - sol.iterations as f64 / budget);
    metrics.insert("iterations".to_string(), sol.iterations as f64);
    metrics.insert("iteration_budget".to_string(), budget);

    let worst = sol.worst_normalized_margin(net.base_mva);
    let worst = if worst.is_finite() { worst } else { 0.0 };
    metrics.insert("worst_normalized_margin".to_string(), worst);
    let constraints = if worst >= -FEASIBILITY_TOL {
        10.0
    } else {
        clamp10(1.0 - (-worst) / VIOLATION_FLOOR)
    };

    let economics = match economic_dispatch_bound(net) {
        Some(bound) if bound > 0.0 => {
            let gap = ((sol.objective_cost - bound) / bound).max(0.0);
            metrics.insert("economic_dispatch_bound".to_string(), bound);
            metrics.insert("cost_gap_fraction".to_string(), gap);
            clamp10(1.0 - gap / ECONOMIC_GAP_FLOOR)
        }
        _ => 10.0,
    };

    let max_loading = sol.max_loading_percent().unwrap_or(0.0);
    metrics.insert("max_loading_percent".to_string(), max_loading);
    let thermal = if max_loading < LOADING_ATTENTION_PERCENT {
        10.0
    } else {
        let span = (thresholds.thermal_warn_percent - LOADING_ATTENTION_PERCENT).max(1e-9);
        clamp10((thresholds.thermal_warn_percent - max_loading) / span)
    };
    let excursion = (thresholds.v_low_pu - sol.min_voltage_pu)
        .max(sol.max_voltage_pu - thresholds.v_high_pu)
        .max(0.0);
    let excursion = if excursion <= FEASIBILITY_TOL { 0.0 } else { excursion };
    metrics.insert("voltage_excursion_pu".to_string(), excursion);
    let voltage = clamp10(1.0 - excursion / VOLTAGE_EXCURSION_FLOOR);
    let security = thermal.min(voltage);

    for f in &sol.branch_loading {
        if let Some(l) = f.loading_percent {
            if l >= LOADING_ATTENTION_PERCENT {
                let label = &net.branches[f.index].label();
                recommendations.push(format!(
                    "Branch {label} is within 5% of its rating; consider redispatch or uprating."
                ));
            }
        }
    }
    if excursion > 0.0 {
        recommendations.push("Bus voltages leave the operating band; review reactive support.".to_string());
    }
    if constraints < 10.0 {
        recommendations.push("Some operating limits are violated; the dispatch should not be applied as is.".to_string());
    }

    let w = weights;
    let total_w = w.convergence + w.constraints + w.economics + w.security;
    let overall = (w.convergence * convergence
        + w.constraints * constraints
        + w.economics * economics
        + w.security * security)
        / total_w;

    Ok(SolutionQuality {
        overall_score: overall.clamp(0.0, 10.0),
        convergence_quality: convergence,
        constraint_satisfaction: constraints,
        economic_efficiency: economics,
        system_security: security,
        detailed_metrics: metrics,
        recommendations,
    })
}
