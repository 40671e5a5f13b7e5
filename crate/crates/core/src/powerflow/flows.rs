use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::PowerSystem;

use super::ybus::{build_ybus, AdmittanceMatrix};
use super::ValidationThresholds;

/// A full steady-state operating point: bus voltages plus generator outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridState {
    pub vm_pu: Vec<f64>,
    pub va_deg: Vec<f64>,
    /// Per generator, zero when out of service.
    pub gen_p_mw: Vec<f64>,
    pub gen_q_mvar: Vec<f64>,
}

impl GridState {
    pub fn voltages(&self) -> Vec<Complex64> {
        self.vm_pu
            .iter()
            .zip(&self.va_deg)
            .map(|(&m, &a)| Complex64::from_polar(m, a.to_radians()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchFlow {
    pub index: usize,
    pub from_bus: u32,
    pub to_bus: u32,
    pub p_from_mw: f64,
    pub q_from_mvar: f64,
    pub p_to_mw: f64,
    pub q_to_mvar: f64,
    /// Apparent power at the more loaded end over the rating; `None` for
    /// unrated or out-of-service branches.
    pub loading_percent: Option<f64>,
}

impl BranchFlow {
    pub fn s_from_mva(&self) -> f64 {
        self.p_from_mw.hypot(self.q_from_mvar)
    }

    pub fn s_to_mva(&self) -> f64 {
        self.p_to_mw.hypot(self.q_to_mvar)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSummary {
    pub branch_flows: Vec<BranchFlow>,
    pub losses_mw: f64,
}

impl FlowSummary {
    pub fn max_loading_percent(&self) -> Option<f64> {
        self.branch_flows
            .iter()
            .filter_map(|f| f.loading_percent)
            .fold(None, |acc, l| Some(acc.map_or(l, |a: f64| a.max(l))))
    }
}

/// Computed complex injection per bus, p.u.
pub fn bus_injections(ybus: &AdmittanceMatrix, v: &[Complex64]) -> Vec<Complex64> {
    let current = ybus.mul(v);
    v.iter().zip(&current).map(|(vi, ii)| vi * ii.conj()).collect()
}

/// Scheduled injection (generation minus load) per bus, p.u.
pub fn scheduled_injections(net: &PowerSystem, gen_p_mw: &[f64], gen_q_mvar: &[f64]) -> Vec<Complex64> {
    let lookup = net.bus_lookup();
    let mut s: Vec<Complex64> = net
        .buses
        .iter()
        .map(|b| Complex64::new(-b.pd_mw, -b.qd_mvar))
        .collect();
    for (g, gen) in net.generators.iter().enumerate() {
        if gen.in_service {
            s[lookup[&gen.bus_id]] += Complex64::new(gen_p_mw[g], gen_q_mvar[g]);
        }
    }
    s.iter().map(|x| x / net.base_mva).collect()
}

/// Branch flows, loadings and total losses for a voltage state.
pub fn compute_flows(net: &PowerSystem, vm_pu: &[f64], va_deg: &[f64]) -> FlowSummary {
    let ybus = build_ybus(net);
    let v: Vec<Complex64> = vm_pu
        .iter()
        .zip(va_deg)
        .map(|(&m, &a)| Complex64::from_polar(m, a.to_radians()))
        .collect();
    compute_flows_with(net, &ybus, &v)
}

pub fn compute_flows_with(net: &PowerSystem, ybus: &AdmittanceMatrix, v: &[Complex64]) -> FlowSummary {
    let base = net.base_mva;
    let mut flows: Vec<BranchFlow> = net
        .branches
        .iter()
        .enumerate()
        .map(|(k, br)| BranchFlow {
            index: k,
            from_bus: br.from_bus,
            to_bus: br.to_bus,
            p_from_mw: 0.0,
            q_from_mvar: 0.0,
            p_to_mw: 0.0,
            q_to_mvar: 0.0,
            loading_percent: None,
        })
        .collect();
    let mut losses = 0.0;
    for s in &ybus.stamps {
        let (vf, vt) = (v[s.from], v[s.to]);
        let sf = vf * (s.yff * vf + s.yft * vt).conj() * base;
        let st = vt * (s.ytf * vf + s.ytt * vt).conj() * base;
        let br = &net.branches[s.branch];
        let f = &mut flows[s.branch];
        f.p_from_mw = sf.re;
        f.q_from_mvar = sf.im;
        f.p_to_mw = st.re;
        f.q_to_mvar = st.im;
        if br.is_rated() {
            f.loading_percent = Some(sf.norm().max(st.norm()) / br.rating_mva * 100.0);
        }
        losses += sf.re + st.re;
    }
    FlowSummary {
        branch_flows: flows,
        losses_mw: losses,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceCheck {
    pub passed: bool,
    /// Dense index of the worst bus.
    pub worst_bus: usize,
    pub worst_bus_id: u32,
    pub mismatch_pu: f64,
    pub tolerance_pu: f64,
}

/// Largest absolute P or Q mismatch over all buses, p.u.
pub fn max_mismatch(net: &PowerSystem, state: &GridState) -> (usize, f64) {
    let ybus = build_ybus(net);
    let calc = bus_injections(&ybus, &state.voltages());
    let sched = scheduled_injections(net, &state.gen_p_mw, &state.gen_q_mvar);
    let mut worst = (0, 0.0);
    for (i, (c, s)) in calc.iter().zip(&sched).enumerate() {
        let d = c - s;
        let m = d.re.abs().max(d.im.abs());
        if m > worst.1 || m.is_nan() {
            worst = (i, m);
        }
    }
    worst
}

/// Recomputes S_injected − S_scheduled per bus; passes iff the worst
/// mismatch is below `balance_tol_pu`.
pub fn check_balance(net: &PowerSystem, state: &GridState, thresholds: &ValidationThresholds) -> BalanceCheck {
    let (worst_bus, mismatch) = max_mismatch(net, state);
    BalanceCheck {
        passed: mismatch < thresholds.balance_tol_pu,
        worst_bus,
        worst_bus_id: net.buses.get(worst_bus).map_or(0, |b| b.id),
        mismatch_pu: mismatch,
        tolerance_pu: thresholds.balance_tol_pu,
    }
}
