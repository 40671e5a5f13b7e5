//! N-1 outage screening of lines and transformers against a solved base
//! case, with islanding curtailment, ranking and per-outage caching.

mod cache;
mod rank;

use std::collections::HashMap;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{connected_components, BranchKind, BusType, PowerSystem};
use crate::powerflow::{
    solve_powerflow, PowerFlowOptions, PowerFlowSolution, PowerFlowStart, ValidationThresholds,
};

pub use cache::{cache_key, CacheBinding, ContingencyCache};
pub use rank::{rank_critical, CriticalElement, Evidence, ScoringWeights};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutageKind {
    Line,
    Transformer,
}

impl OutageKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OutageKind::Line => "line",
            OutageKind::Transformer => "transformer",
        }
    }
}

impl From<BranchKind> for OutageKind {
    fn from(k: BranchKind) -> Self {
        match k {
            BranchKind::Line => OutageKind::Line,
            BranchKind::Transformer => OutageKind::Transformer,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContingencyScope {
    #[default]
    Lines,
    Transformers,
    All,
}

impl ContingencyScope {
    fn admits(self, kind: BranchKind) -> bool {
        match self {
            ContingencyScope::Lines => kind == BranchKind::Line,
            ContingencyScope::Transformers => kind == BranchKind::Transformer,
            ContingencyScope::All => true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ContingencyCase {
    pub outage_kind: OutageKind,
    /// Position in the network's branch list.
    pub element_index: usize,
    /// "from-to" in external bus numbers.
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContingencyStatus {
    Secure,
    Violations,
    Islanding,
    Diverged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverloadSeverity {
    /// Above 100% but below the warning level.
    Marginal,
    Warning,
    Severe,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverloadEntry {
    pub index: usize,
    pub label: String,
    pub loading_percent: f64,
    pub severity: OverloadSeverity,
}

impl OverloadEntry {
    pub fn new(index: usize, label: String, loading_percent: f64, warn: f64, severe: f64) -> Self {
        let severity = if loading_percent >= severe {
            OverloadSeverity::Severe
        } else if loading_percent >= warn {
            OverloadSeverity::Warning
        } else {
            OverloadSeverity::Marginal
        };
        OverloadEntry {
            index,
            label,
            loading_percent,
            severity,
        }
    }
}

/// Loading above which a branch counts as overloaded.
pub const OVERLOAD_PERCENT: f64 = 100.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyResult {
    pub contingency: ContingencyCase,
    pub status: ContingencyStatus,
    /// `None` when the post-outage power flow did not converge.
    pub max_loading_percent: Option<f64>,
    pub overloaded_branches: Vec<OverloadEntry>,
    pub min_voltage_pu: Option<f64>,
    pub min_voltage_bus: Option<u32>,
    pub low_voltage_buses: Vec<u32>,
    pub high_voltage_buses: Vec<u32>,
    pub curtailment_mw: f64,
    pub solve_iterations: usize,
    pub from_cache: bool,
}

impl ContingencyResult {
    /// Equality ignoring the cache flag.
    pub fn same_values(&self, other: &ContingencyResult) -> bool {
        let mut a = self.clone();
        a.from_cache = other.from_cache;
        &a == other
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SummaryStats {
    pub total: usize,
    pub secure: usize,
    pub violations: usize,
    pub islanding: usize,
    pub diverged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContingencyAnalysisResult {
    pub case_name: String,
    /// Checksum of the base state the sweep was run against.
    pub base_reference: String,
    pub scope: ContingencyScope,
    pub results: Vec<ContingencyResult>,
    pub ranking: Vec<CriticalElement>,
    pub summary_stats: SummaryStats,
    pub cache_hits: usize,
    pub fresh_evaluations: usize,
    pub computed_at: DateTime<Utc>,
}

impl ContingencyAnalysisResult {
    pub fn max_loading_percent(&self) -> Option<f64> {
        self.results
            .iter()
            .filter_map(|r| r.max_loading_percent)
            .fold(None, |acc, l| Some(acc.map_or(l, |a: f64| a.max(l))))
    }

    pub fn result_for(&self, element_index: usize) -> Option<&ContingencyResult> {
        self.results.iter().find(|r| r.contingency.element_index == element_index)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Serialize, Deserialize)]
pub enum ContingencyError {
    #[error("the base case is not solved; solve it before running contingencies")]
    BaseNotSolved,
    #[error("branch {0} does not exist or is already out of service")]
    UnknownElement(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepOptions {
    pub scope: ContingencyScope,
    pub top_k: usize,
    pub parallel: bool,
    pub powerflow: PowerFlowOptions,
    pub weights: ScoringWeights,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            scope: ContingencyScope::Lines,
            top_k: 5,
            parallel: true,
            powerflow: PowerFlowOptions::default(),
            weights: ScoringWeights::default(),
        }
    }
}

/// One case per in-service branch in scope, by branch index.
pub fn enumerate_contingencies(net: &PowerSystem, scope: ContingencyScope) -> Vec<ContingencyCase> {
    net.branches
        .iter()
        .enumerate()
        .filter(|(_, b)| b.in_service && scope.admits(b.kind))
        .map(|(k, b)| ContingencyCase {
            outage_kind: b.kind.into(),
            element_index: k,
            label: b.label(),
        })
        .collect()
}

pub fn contingency_for(net: &PowerSystem, element_index: usize) -> Result<ContingencyCase, ContingencyError> {
    match net.branches.get(element_index) {
        Some(b) if b.in_service => Ok(ContingencyCase {
            outage_kind: b.kind.into(),
            element_index,
            label: b.label(),
        }),
        _ => Err(ContingencyError::UnknownElement(element_index)),
    }
}

/// Fixes the base dispatch: generator outputs and voltage setpoints taken
/// from the base solution.
fn dispatch_fixed(base_net: &PowerSystem, base: &PowerFlowSolution) -> PowerSystem {
    let mut net = base_net.clone();
    let lookup = net.bus_lookup();
    for (g, gen) in net.generators.iter_mut().enumerate() {
        if let Some(&p) = base.gen_p_mw.get(g) {
            gen.pg_mw = p;
        }
        if let Some(&vm) = base.vm_pu.get(lookup[&gen.bus_id]) {
            gen.vg_pu = vm;
        }
    }
    net
}

/// Thermal and voltage screening of a solved state.
fn classify(
    net: &PowerSystem,
    sol: &PowerFlowSolution,
    bus_ids: &[u32],
    branch_map: &[usize],
    thresholds: &ValidationThresholds,
) -> (Option<f64>, Vec<OverloadEntry>, Option<f64>, Option<u32>, Vec<u32>, Vec<u32>) {
    let mut overloads = Vec::new();
    let mut max_loading: Option<f64> = None;
    for f in &sol.branch_flows {
        if let Some(l) = f.loading_percent {
            max_loading = Some(max_loading.map_or(l, |m| m.max(l)));
            if l > OVERLOAD_PERCENT {
                let original = branch_map[f.index];
                overloads.push(OverloadEntry::new(
                    original,
                    net.branches[f.index].label(),
                    l,
                    thresholds.thermal_warn_percent,
                    thresholds.thermal_severe_percent,
                ));
            }
        }
    }
    let mut min_v: Option<(f64, u32)> = None;
    let mut low = Vec::new();
    let mut high = Vec::new();
    for (i, &vm) in sol.vm_pu.iter().enumerate() {
        if min_v.is_none_or(|(m, _)| vm < m) {
            min_v = Some((vm, bus_ids[i]));
        }
        if vm < thresholds.v_low_pu {
            low.push(bus_ids[i]);
        }
        if vm > thresholds.v_high_pu {
            high.push(bus_ids[i]);
        }
    }
    (max_loading, overloads, min_v.map(|m| m.0), min_v.map(|m| m.1), low, high)
}

/// Screening of the base state itself, in the same terms as an outage.
pub fn screen_base(base_net: &PowerSystem, base: &PowerFlowSolution, thresholds: &ValidationThresholds) -> ContingencyResult {
    let ids: Vec<u32> = base_net.buses.iter().map(|b| b.id).collect();
    let map: Vec<usize> = (0..base_net.branches.len()).collect();
    let (max_loading, overloads, min_v, min_bus, low, high) = classify(base_net, base, &ids, &map, thresholds);
    let secure = overloads.is_empty() && low.is_empty() && high.is_empty();
    ContingencyResult {
        contingency: ContingencyCase {
            outage_kind: OutageKind::Line,
            element_index: usize::MAX,
            label: "none".into(),
        },
        status: if secure { ContingencyStatus::Secure } else { ContingencyStatus::Violations },
        max_loading_percent: max_loading,
        overloaded_branches: overloads,
        min_voltage_pu: min_v,
        min_voltage_bus: min_bus,
        low_voltage_buses: low,
        high_voltage_buses: high,
        curtailment_mw: 0.0,
        solve_iterations: base.iterations,
        from_cache: false,
    }
}

/// Apply one outage and screen the post-outage state.
///
/// Islands without a slack bus are dropped and their load counted as
/// curtailment. The remaining network is solved warm from the base state,
/// then from a flat start if that diverges. Divergence is a status.
pub fn evaluate_contingency(
    base_net: &PowerSystem,
    base: &PowerFlowSolution,
    case: &ContingencyCase,
    thresholds: &ValidationThresholds,
    pf_options: &PowerFlowOptions,
) -> ContingencyResult {
    let mut net = dispatch_fixed(base_net, base);
    net.branches[case.element_index].in_service = false;

    let comps = connected_components(&net);
    let mut keep: Vec<usize> = Vec::new();
    let mut curtailment = 0.0;
    for group in &comps.groups {
        if group.iter().any(|&i| net.buses[i].bus_type == BusType::Slack) {
            keep.extend(group);
        } else {
            curtailment += group.iter().map(|&i| net.buses[i].pd_mw.max(0.0)).sum::<f64>();
        }
    }
    keep.sort_unstable();
    let islanded = keep.len() < net.buses.len();
    let (island, bus_map, branch_map) = if islanded {
        net.subnetwork(&keep)
    } else {
        let n = net.buses.len();
        let m = net.branches.len();
        (net, (0..n).collect(), (0..m).collect())
    };

    let warm = PowerFlowStart::Warm {
        vm_pu: bus_map.iter().map(|&i| base.vm_pu[i]).collect(),
        va_deg: bus_map.iter().map(|&i| base.va_deg[i]).collect(),
    };
    let mut iterations = 0;
    let mut solved = None;
    for start in [warm, PowerFlowStart::Flat] {
        match solve_powerflow(&island, &start, thresholds, pf_options) {
            Ok(sol) if sol.converged => {
                iterations += sol.iterations;
                solved = Some(sol);
                break;
            }
            Ok(sol) => iterations += sol.iterations,
            Err(crate::powerflow::PowerFlowError::Diverged { iterations: it, .. }) => iterations += it,
            Err(_) => {}
        }
    }

    let Some(sol) = solved else {
        return ContingencyResult {
            contingency: case.clone(),
            status: ContingencyStatus::Diverged,
            max_loading_percent: None,
            overloaded_branches: Vec::new(),
            min_voltage_pu: None,
            min_voltage_bus: None,
            low_voltage_buses: Vec::new(),
            high_voltage_buses: Vec::new(),
            curtailment_mw: curtailment,
            solve_iterations: iterations,
            from_cache: false,
        };
    };

    let ids: Vec<u32> = island.buses.iter().map(|b| b.id).collect();
    let (max_loading, overloads, min_v, min_bus, low, high) = classify(&island, &sol, &ids, &branch_map, thresholds);
    let status = if islanded {
        ContingencyStatus::Islanding
    } else if !overloads.is_empty() || !low.is_empty() || !high.is_empty() {
        ContingencyStatus::Violations
    } else {
        ContingencyStatus::Secure
    };
    ContingencyResult {
        contingency: case.clone(),
        status,
        max_loading_percent: max_loading,
        overloaded_branches: overloads,
        min_voltage_pu: min_v,
        min_voltage_bus: min_bus,
        low_voltage_buses: low,
        high_voltage_buses: high,
        curtailment_mw: curtailment,
        solve_iterations: iterations,
        from_cache: false,
    }
}

/// Evaluate every outage in scope, consulting the cache first.
///
/// Results come back in branch-index order whatever the execution order.
pub fn run_n1(
    base_net: &PowerSystem,
    base: &PowerFlowSolution,
    base_reference: &str,
    cache: Option<CacheBinding<'_>>,
    thresholds: &ValidationThresholds,
    opts: &SweepOptions,
) -> Result<ContingencyAnalysisResult, ContingencyError> {
    if !base.converged || base.vm_pu.len() != base_net.buses.len() {
        return Err(ContingencyError::BaseNotSolved);
    }
    let cases = enumerate_contingencies(base_net, opts.scope);
    let eval = |case: &ContingencyCase| -> (ContingencyResult, bool) {
        if let Some(binding) = &cache {
            if let Some(mut hit) = binding.cache.get(&binding.key(case)) {
                hit.from_cache = true;
                return (hit, true);
            }
        }
        (evaluate_contingency(base_net, base, case, thresholds, &opts.powerflow), false)
    };
    let evaluated: Vec<(ContingencyResult, bool)> = if opts.parallel {
        cases.par_iter().map(eval).collect()
    } else {
        cases.iter().map(eval).collect()
    };

    let cache_hits = evaluated.iter().filter(|(_, hit)| *hit).count();
    if let Some(binding) = &cache {
        for (r, hit) in &evaluated {
            if !hit {
                binding.cache.insert(binding.key(&r.contingency), r.clone());
            }
        }
    }
    let results: Vec<ContingencyResult> = evaluated.into_iter().map(|(r, _)| r).collect();

    let mut counts: HashMap<ContingencyStatus, usize> = HashMap::new();
    for r in &results {
        *counts.entry(r.status).or_default() += 1;
    }
    let count = |s| counts.get(&s).copied().unwrap_or(0);
    let summary_stats = SummaryStats {
        total: results.len(),
        secure: count(ContingencyStatus::Secure),
        violations: count(ContingencyStatus::Violations),
        islanding: count(ContingencyStatus::Islanding),
        diverged: count(ContingencyStatus::Diverged),
    };
    let ranking = rank_critical(&results, opts.top_k, thresholds.v_low_pu, &opts.weights);

    Ok(ContingencyAnalysisResult {
        case_name: base_net.case_name.clone(),
        base_reference: base_reference.to_string(),
        scope: opts.scope,
        fresh_evaluations: results.len() - cache_hits,
        cache_hits,
        results,
        ranking,
        summary_stats,
        computed_at: Utc::now(),
    })
}
