use num_complex::Complex64;

use crate::linalg::TripletBuilder;
use crate::network::{connected_components, BusType, PowerSystem};

use super::flows::{bus_injections, compute_flows_with, max_mismatch, scheduled_injections, GridState};
use super::ybus::{build_ybus, AdmittanceMatrix};
use super::{
    PowerFlowError, PowerFlowOptions, PowerFlowSolution, PowerFlowStart, ValidationThresholds,
};

/// Which buses hold angle, magnitude, or both fixed during Newton steps.
#[derive(Debug, Clone, PartialEq)]
pub struct BusRoles {
    pub kind: Vec<BusType>,
    /// Buses of dead components (no slack, nothing connected, nothing
    /// injected); their state is left untouched.
    pub fixed: Vec<bool>,
}

impl BusRoles {
    /// Slack buses stay slack; voltage-controlled buses need an in-service
    /// generator, otherwise they are treated as load buses.
    pub fn from_network(net: &PowerSystem) -> Result<Self, PowerFlowError> {
        let lookup = net.bus_lookup();
        let mut has_gen = vec![false; net.buses.len()];
        for (_, g) in net.in_service_generators() {
            has_gen[lookup[&g.bus_id]] = true;
        }
        let kind: Vec<BusType> = net
            .buses
            .iter()
            .enumerate()
            .map(|(i, b)| match b.bus_type {
                BusType::Slack => BusType::Slack,
                BusType::Pv if has_gen[i] => BusType::Pv,
                _ => BusType::Pq,
            })
            .collect();

        let comps = connected_components(net);
        let mut fixed = vec![false; net.buses.len()];
        for (c, group) in comps.groups.iter().enumerate() {
            if group.iter().any(|&i| kind[i] == BusType::Slack) {
                continue;
            }
            let dead = group.len() == 1 && {
                let b = &net.buses[group[0]];
                !has_gen[group[0]] && b.pd_mw == 0.0 && b.qd_mvar == 0.0 && b.gs_mw == 0.0 && b.bs_mvar == 0.0
            };
            if !dead {
                return Err(PowerFlowError::IslandWithoutSlack { component: c });
            }
            fixed[group[0]] = true;
        }
        Ok(BusRoles { kind, fixed })
    }
}

/// The polar mismatch function F(θ, |V|) = S_calc − S_sched restricted to the
/// Newton unknowns, with its analytic Jacobian.
///
/// Unknown vector layout: angles (radians) of every PV and PQ bus, then
/// magnitudes of every PQ bus, both in ascending bus order. Residual layout:
/// ΔP of PV and PQ buses, then ΔQ of PQ buses.
#[derive(Debug, Clone)]
pub struct PolarMismatch {
    ybus: AdmittanceMatrix,
    s_sched: Vec<Complex64>,
    vm: Vec<f64>,
    va: Vec<f64>,
    angle_col: Vec<Option<usize>>,
    mag_col: Vec<Option<usize>>,
    pvpq: Vec<usize>,
    pq: Vec<usize>,
}

impl PolarMismatch {
    /// `vm`/`va_rad` supply the values of the fixed quantities.
    pub fn new(
        net: &PowerSystem,
        roles: &BusRoles,
        s_sched: Vec<Complex64>,
        vm: Vec<f64>,
        va_rad: Vec<f64>,
    ) -> Self {
        let n = net.buses.len();
        let active = |i: usize| !roles.fixed[i];
        let pvpq: Vec<usize> = (0..n)
            .filter(|&i| active(i) && roles.kind[i] != BusType::Slack)
            .collect();
        let pq: Vec<usize> = (0..n)
            .filter(|&i| active(i) && roles.kind[i] == BusType::Pq)
            .collect();
        let mut angle_col = vec![None; n];
        for (k, &i) in pvpq.iter().enumerate() {
            angle_col[i] = Some(k);
        }
        let mut mag_col = vec![None; n];
        for (k, &i) in pq.iter().enumerate() {
            mag_col[i] = Some(pvpq.len() + k);
        }
        PolarMismatch {
            ybus: build_ybus(net),
            s_sched,
            vm,
            va: va_rad,
            angle_col,
            mag_col,
            pvpq,
            pq,
        }
    }

    /// Convenience constructor from a network's own scheduled dispatch.
    pub fn from_network(net: &PowerSystem, vm: Vec<f64>, va_rad: Vec<f64>) -> Result<Self, PowerFlowError> {
        let roles = BusRoles::from_network(net)?;
        let p: Vec<f64> = net.generators.iter().map(|g| g.pg_mw).collect();
        let q: Vec<f64> = net.generators.iter().map(|g| g.qg_mvar).collect();
        let sched = scheduled_injections(net, &p, &q);
        Ok(Self::new(net, &roles, sched, vm, va_rad))
    }

    pub fn dim(&self) -> usize {
        self.pvpq.len() + self.pq.len()
    }

    pub fn ybus(&self) -> &AdmittanceMatrix {
        &self.ybus
    }

    pub fn x(&self) -> Vec<f64> {
        let mut x: Vec<f64> = self.pvpq.iter().map(|&i| self.va[i]).collect();
        x.extend(self.pq.iter().map(|&i| self.vm[i]));
        x
    }

    /// Full voltage vectors after substituting the unknowns.
    pub fn expand(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut vm = self.vm.clone();
        let mut va = self.va.clone();
        for (k, &i) in self.pvpq.iter().enumerate() {
            va[i] = x[k];
        }
        for (k, &i) in self.pq.iter().enumerate() {
            vm[i] = x[self.pvpq.len() + k];
        }
        (vm, va)
    }

    fn voltages(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
        vm.iter()
            .zip(va)
            .map(|(&m, &a)| Complex64::from_polar(m, a))
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> Vec<f64> {
        let (vm, va) = self.expand(x);
        let s = bus_injections(&self.ybus, &Self::voltages(&vm, &va));
        let mut f: Vec<f64> = self
            .pvpq
            .iter()
            .map(|&i| s[i].re - self.s_sched[i].re)
            .collect();
        f.extend(self.pq.iter().map(|&i| s[i].im - self.s_sched[i].im));
        f
    }

    pub fn jacobian(&self, x: &[f64]) -> TripletBuilder {
        let (vm, va) = self.expand(x);
        let v = Self::voltages(&vm, &va);
        let current = self.ybus.mul(&v);
        let mut jac = TripletBuilder::with_capacity(self.dim(), 4 * self.ybus.rows.iter().map(Vec::len).sum::<usize>());
        let j = Complex64::i();
        for (&i, row_p) in self.pvpq.iter().zip(0..) {
            let row_q = self.mag_col[i];
            for &(k, y) in &self.ybus.rows[i] {
                let unit = v[k] / vm[k];
                let (d_ang, d_mag) = if k == i {
                    (
                        j * v[i] * (current[i] - y * v[i]).conj(),
                        v[i] * (y * unit).conj() + current[i].conj() * unit,
                    )
                } else {
                    (-j * v[i] * (y * v[k]).conj(), v[i] * (y * unit).conj())
                };
                if let Some(c) = self.angle_col[k] {
                    jac.add(row_p, c, d_ang.re);
                    if let Some(rq) = row_q {
                        jac.add(rq, c, d_ang.im);
                    }
                }
                if let Some(c) = self.mag_col[k] {
                    jac.add(row_p, c, d_mag.re);
                    if let Some(rq) = row_q {
                        jac.add(rq, c, d_mag.im);
                    }
                }
            }
        }
        jac
    }
}

struct NewtonOutcome {
    vm: Vec<f64>,
    va: Vec<f64>,
    iterations: usize,
}

fn newton(problem: &PolarMismatch, opts: &PowerFlowOptions, tol: f64) -> Result<NewtonOutcome, PowerFlowError> {
    let mut x = problem.x();
    let mut f = problem.evaluate(&x);
    let norm = |f: &[f64]| f.iter().fold(0.0_f64, |m, v| if v.is_nan() { f64::NAN } else { m.max(v.abs()) });
    let mut current = norm(&f);
    let mut growth = 0;
    let mut iterations = 0;
    while !(current < tol) {
        if iterations >= opts.max_iterations || !current.is_finite() || growth >= opts.max_growth_streak {
            return Err(PowerFlowError::Diverged {
                iterations,
                last_mismatch: current,
            });
        }
        let jac = problem.jacobian(&x);
        let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
        let dx = jac.solve(&rhs).map_err(|_| PowerFlowError::Diverged {
            iterations,
            last_mismatch: current,
        })?;
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        iterations += 1;
        f = problem.evaluate(&x);
        let next = norm(&f);
        growth = if next > current { growth + 1 } else { 0 };
        current = next;
    }
    let (vm, va) = problem.expand(&x);
    Ok(NewtonOutcome { vm, va, iterations })
}

/// Magnitude setpoint of a voltage-controlled bus: the first in-service
/// generator's setpoint, else the bus's own stored magnitude.
fn voltage_setpoints(net: &PowerSystem) -> Vec<Option<f64>> {
    let lookup = net.bus_lookup();
    let mut set = vec![None; net.buses.len()];
    for (_, g) in net.in_service_generators() {
        let i = lookup[&g.bus_id];
        if set[i].is_none() {
            set[i] = Some(g.vg_pu);
        }
    }
    set
}

fn initial_state(net: &PowerSystem, roles: &BusRoles, start: &PowerFlowStart) -> (Vec<f64>, Vec<f64>) {
    let n = net.buses.len();
    let (mut vm, mut va) = match start {
        PowerFlowStart::Warm { vm_pu, va_deg } if vm_pu.len() == n && va_deg.len() == n => (
            vm_pu.clone(),
            va_deg.iter().map(|a| a.to_radians()).collect(),
        ),
        _ => (vec![1.0; n], vec![0.0; n]),
    };
    let setpoints = voltage_setpoints(net);
    for i in 0..n {
        if roles.kind[i] != BusType::Pq {
            vm[i] = setpoints[i].unwrap_or(net.buses[i].vm_pu);
        }
        if roles.fixed[i] {
            vm[i] = 1.0;
            va[i] = 0.0;
        }
    }
    (vm, va)
}

/// Polar Newton–Raphson with PV→PQ switching on generator Q limits.
///
/// Generator active outputs come from the network; the slack bus picks up
/// the balance. On success the reported mismatch is recomputed from the
/// final state over every bus.
pub fn solve_powerflow(
    net: &PowerSystem,
    start: &PowerFlowStart,
    thresholds: &ValidationThresholds,
    opts: &PowerFlowOptions,
) -> Result<PowerFlowSolution, PowerFlowError> {
    let mut roles = BusRoles::from_network(net)?;
    let lookup = net.bus_lookup();
    let n_gen = net.generators.len();
    let mut gen_p: Vec<f64> = net
        .generators
        .iter()
        .map(|g| if g.in_service { g.pg_mw } else { 0.0 })
        .collect();
    let mut gen_q: Vec<f64> = net
        .generators
        .iter()
        .map(|g| if g.in_service { g.qg_mvar } else { 0.0 })
        .collect();
    let mut gens_at: Vec<Vec<usize>> = vec![Vec::new(); net.buses.len()];
    for (g, gen) in net.in_service_generators() {
        gens_at[lookup[&gen.bus_id]].push(g);
    }

    let (mut vm, mut va) = initial_state(net, &roles, start);
    let mut iterations = 0;
    let mut q_limited: Vec<u32> = Vec::new();
    // Buses clamped at a Q limit keep their generators at the limit.
    let mut clamped = vec![false; net.buses.len()];

    loop {
        let sched = scheduled_injections(net, &gen_p, &gen_q);
        let problem = PolarMismatch::new(net, &roles, sched, vm.clone(), va.clone());
        let outcome = newton(&problem, opts, thresholds.nr_tol_pu).map_err(|e| match e {
            PowerFlowError::Diverged { iterations: it, last_mismatch } => PowerFlowError::Diverged {
                iterations: iterations + it,
                last_mismatch,
            },
            other => other,
        })?;
        iterations += outcome.iterations;
        vm = outcome.vm;
        va = outcome.va;

        let v: Vec<Complex64> = vm.iter().zip(&va).map(|(&m, &a)| Complex64::from_polar(m, a)).collect();
        let s = bus_injections(problem.ybus(), &v);
        // Generator outputs implied by the solved state.
        for (i, bus) in net.buses.iter().enumerate() {
            let gens = &gens_at[i];
            if gens.is_empty() || roles.fixed[i] || clamped[i] {
                continue;
            }
            if roles.kind[i] == BusType::Slack {
                let total = s[i].re * net.base_mva + bus.pd_mw;
                let others: f64 = gens[1..].iter().map(|&g| gen_p[g]).sum();
                gen_p[gens[0]] = total - others;
            }
            if roles.kind[i] != BusType::Pq {
                let total_q = s[i].im * net.base_mva + bus.qd_mvar;
                share_reactive(net, gens, total_q, &mut gen_q);
            }
        }

        if !opts.enforce_q_limits {
            break;
        }
        let mut switched = false;
        for i in 0..net.buses.len() {
            if roles.kind[i] != BusType::Pv || clamped[i] {
                continue;
            }
            let gens = &gens_at[i];
            let total: f64 = gens.iter().map(|&g| gen_q[g]).sum();
            let qmax: f64 = gens.iter().map(|&g| net.generators[g].qmax_mvar).sum();
            let qmin: f64 = gens.iter().map(|&g| net.generators[g].qmin_mvar).sum();
            let tol = 1e-6;
            if total > qmax + tol {
                for &g in gens {
                    gen_q[g] = net.generators[g].qmax_mvar;
                }
            } else if total < qmin - tol {
                for &g in gens {
                    gen_q[g] = net.generators[g].qmin_mvar;
                }
            } else {
                continue;
            }
            roles.kind[i] = BusType::Pq;
            clamped[i] = true;
            q_limited.push(net.buses[i].id);
            switched = true;
        }
        if !switched {
            break;
        }
    }
    q_limited.sort_unstable();

    let va_deg: Vec<f64> = va.iter().map(|a| a.to_degrees()).collect();
    let state = GridState {
        vm_pu: vm.clone(),
        va_deg: va_deg.clone(),
        gen_p_mw: gen_p.clone(),
        gen_q_mvar: gen_q.clone(),
    };
    let (_, mismatch) = max_mismatch(net, &state);
    let ybus = build_ybus(net);
    let flows = compute_flows_with(net, &ybus, &state.voltages());
    let slack_p_mw = net
        .slack_indices()
        .iter()
        .flat_map(|&i| gens_at[i].iter())
        .map(|&g| gen_p[g])
        .sum();
    debug_assert_eq!(gen_p.len(), n_gen);

    Ok(PowerFlowSolution {
        converged: mismatch < thresholds.balance_tol_pu,
        iterations,
        max_mismatch_pu: mismatch,
        vm_pu: vm,
        va_deg,
        gen_p_mw: gen_p,
        gen_q_mvar: gen_q,
        branch_flows: flows.branch_flows,
        losses_mw: flows.losses_mw,
        slack_p_mw,
        q_limited_buses: q_limited,
        start: start.clone(),
        thresholds: *thresholds,
    })
}

/// Splits a bus's reactive output over its generators in proportion to
/// their Q ranges, or evenly when a range is unbounded or degenerate.
fn share_reactive(net: &PowerSystem, gens: &[usize], total_q: f64, gen_q: &mut [f64]) {
    let ranges: Vec<f64> = gens
        .iter()
        .map(|&g| net.generators[g].qmax_mvar - net.generators[g].qmin_mvar)
        .collect();
    let sum_range: f64 = ranges.iter().sum();
    if gens.len() > 1 && sum_range.is_finite() && sum_range > 1e-9 {
        let sum_min: f64 = gens.iter().map(|&g| net.generators[g].qmin_mvar).sum();
        for (&g, r) in gens.iter().zip(&ranges) {
            gen_q[g] = net.generators[g].qmin_mvar + (total_q - sum_min) * r / sum_range;
        }
    } else {
        let each = total_q / gens.len() as f64;
        for &g in gens {
            gen_q[g] = each;
        }
    }
}
