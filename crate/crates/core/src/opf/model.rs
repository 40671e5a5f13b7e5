//! Polar ACOPF as a smooth nonlinear program.
//!
//! Variables: bus angles (rad), bus magnitudes (p.u.), then active and
//! reactive output (p.u.) of every in-service generator. Equalities: active
//! and reactive balance at every bus, then a zero angle at each slack bus.
//! Inequalities: squared apparent power at both ends of rated branches, then
//! voltage, active and reactive output bounds.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::linalg::TripletBuilder;
use crate::network::PowerSystem;
use crate::powerflow::{build_ybus, AdmittanceMatrix, BranchStamp};

use super::ipm::{Evaluation, NlpProblem, SparseRow};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    BranchFlowFrom,
    BranchFlowTo,
    VoltageMax,
    VoltageMin,
    ActiveMax,
    ActiveMin,
    ReactiveMax,
    ReactiveMin,
}

impl ConstraintKind {
    pub fn is_upper(self) -> bool {
        matches!(
            self,
            ConstraintKind::BranchFlowFrom
                | ConstraintKind::BranchFlowTo
                | ConstraintKind::VoltageMax
                | ConstraintKind::ActiveMax
                | ConstraintKind::ReactiveMax
        )
    }
}

/// One inequality: `kind` applied to `element` (branch index, dense bus
/// index or generator index) with `limit` in physical units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InequalityRef {
    pub kind: ConstraintKind,
    pub element: usize,
    pub limit: f64,
}

pub struct AcopfModel<'a> {
    pub net: &'a PowerSystem,
    pub ybus: AdmittanceMatrix,
    pub nb: usize,
    /// Generator index for each generator variable.
    pub gens: Vec<usize>,
    pub gen_bus: Vec<usize>,
    pub slack: Vec<usize>,
    pub rated: Vec<BranchStamp>,
    pub inequalities: Vec<InequalityRef>,
    pub cost_mult: f64,
}

impl<'a> AcopfModel<'a> {
    pub fn new(net: &'a PowerSystem, cost_mult: f64) -> Self {
        let nb = net.buses.len();
        let lookup = net.bus_lookup();
        let ybus = build_ybus(net);
        let gens: Vec<usize> = net.in_service_generators().map(|(g, _)| g).collect();
        let gen_bus = gens
            .iter()
            .map(|&g| lookup[&net.generators[g].bus_id])
            .collect();
        let rated: Vec<BranchStamp> = ybus
            .stamps
            .iter()
            .filter(|s| net.branches[s.branch].is_rated())
            .copied()
            .collect();
        let mut inequalities = Vec::new();
        for s in &rated {
            let limit = net.branches[s.branch].rating_mva;
            inequalities.push(InequalityRef { kind: ConstraintKind::BranchFlowFrom, element: s.branch, limit });
            inequalities.push(InequalityRef { kind: ConstraintKind::BranchFlowTo, element: s.branch, limit });
        }
        for (i, b) in net.buses.iter().enumerate() {
            if b.vmax_pu.is_finite() {
                inequalities.push(InequalityRef { kind: ConstraintKind::VoltageMax, element: i, limit: b.vmax_pu });
            }
            if b.vmin_pu.is_finite() {
                inequalities.push(InequalityRef { kind: ConstraintKind::VoltageMin, element: i, limit: b.vmin_pu });
            }
        }
        for &g in &gens {
            let gen = &net.generators[g];
            let bounds = [
                (ConstraintKind::ActiveMax, gen.pmax_mw),
                (ConstraintKind::ActiveMin, gen.pmin_mw),
                (ConstraintKind::ReactiveMax, gen.qmax_mvar),
                (ConstraintKind::ReactiveMin, gen.qmin_mvar),
            ];
            for (kind, limit) in bounds {
                if limit.is_finite() {
                    inequalities.push(InequalityRef { kind, element: g, limit });
                }
            }
        }
        AcopfModel {
            net,
            ybus,
            nb,
            gen_bus,
            slack: net.slack_indices(),
            gens,
            rated,
            inequalities,
            cost_mult,
        }
    }

    pub fn ng(&self) -> usize {
        self.gens.len()
    }
    pub fn th(&self, i: usize) -> usize {
        i
    }
    pub fn vm(&self, i: usize) -> usize {
        self.nb + i
    }
    pub fn pg(&self, k: usize) -> usize {
        2 * self.nb + k
    }
    pub fn qg(&self, k: usize) -> usize {
        2 * self.nb + self.ng() + k
    }

    pub fn voltages(&self, x: &[f64]) -> Vec<Complex64> {
        (0..self.nb)
            .map(|i| Complex64::from_polar(x[self.vm(i)], x[self.th(i)]))
            .collect()
    }

    /// Position of generator `g` among the variables.
    pub fn gen_slot(&self, g: usize) -> Option<usize> {
        self.gens.iter().position(|&k| k == g)
    }

    /// Unscaled cost, $/h.
    pub fn cost(&self, x: &[f64]) -> f64 {
        let base = self.net.base_mva;
        self.gens
            .iter()
            .enumerate()
            .map(|(k, &g)| self.net.cost_models[g].eval(x[self.pg(k)] * base))
            .sum()
    }

    /// Complex flow at the `from` end (or `to` end) of a stamp with its
    /// gradient over (θa, θb, va, vb) where a is the measured end.
    fn end_flow(&self, s: &BranchStamp, from_end: bool, x: &[f64]) -> EndFlow {
        let (a, b, self_y, mutual_y) = if from_end {
            (s.from, s.to, s.yff, s.yft)
        } else {
            (s.to, s.from, s.ytt, s.ytf)
        };
        let (va, vb) = (x[self.vm(a)], x[self.vm(b)]);
        let ang = x[self.th(a)] - x[self.th(b)];
        let self_term = va * va * self_y.conj();
        let cross = va * vb * mutual_y.conj() * Complex64::from_polar(1.0, ang);
        let j = Complex64::i();
        EndFlow {
            a,
            b,
            s: self_term + cross,
            self_coef: self_y.conj(),
            cross,
            grad: [j * cross, -j * cross, 2.0 * va * self_y.conj() + cross / va, cross / vb],
        }
    }
}

struct EndFlow {
    a: usize,
    b: usize,
    s: Complex64,
    self_coef: Complex64,
    cross: Complex64,
    /// dS/dθa, dS/dθb, dS/dva, dS/dvb
    grad: [Complex64; 4],
}

/// Adds the Hessian of Re(c · va·vb·B·e^{j(θa−θb)}) given Z = c·(cross term).
fn add_cross_hessian(kkt: &mut TripletBuilder, idx: [usize; 4], va: f64, vb: f64, z: Complex64) {
    let [ta, tb, ma, mb] = idx;
    let (re, im) = (z.re, z.im);
    let entries = [
        (ta, ta, -re),
        (tb, tb, -re),
        (ta, tb, re),
        (ta, ma, -im / va),
        (ta, mb, -im / vb),
        (tb, ma, im / va),
        (tb, mb, im / vb),
        (ma, mb, re / (va * vb)),
    ];
    for (r, c, v) in entries {
        kkt.add(r, c, v);
        if r != c {
            kkt.add(c, r, v);
        }
    }
}

impl NlpProblem for AcopfModel<'_> {
    fn dim(&self) -> usize {
        2 * self.nb + 2 * self.ng()
    }

    fn evaluate(&self, x: &[f64]) -> Evaluation {
        let nb = self.nb;
        let base = self.net.base_mva;
        let cm = self.cost_mult;

        let mut df = vec![0.0; self.dim()];
        for (k, &g) in self.gens.iter().enumerate() {
            let p = x[self.pg(k)] * base;
            df[self.pg(k)] = cm * self.net.cost_models[g].marginal(p) * base;
        }
        let f = cm * self.cost(x);

        // Bus balance and its gradient.
        let v = self.voltages(x);
        let mut g = vec![0.0; 2 * nb + self.slack.len()];
        let mut dg: Vec<SparseRow> = vec![Vec::new(); g.len()];
        let j = Complex64::i();
        for i in 0..nb {
            let bus = &self.net.buses[i];
            let mut s_i = Complex64::default();
            let mut grad: Vec<(usize, Complex64)> = Vec::with_capacity(2 * self.ybus.rows[i].len());
            let vi = x[self.vm(i)];
            for &(k, y) in &self.ybus.rows[i] {
                if k == i {
                    s_i += vi * vi * y.conj();
                    grad.push((self.vm(i), 2.0 * vi * y.conj()));
                } else {
                    let vk = x[self.vm(k)];
                    let cross = v[i] * (y * v[k]).conj();
                    s_i += cross;
                    grad.push((self.th(i), j * cross));
                    grad.push((self.th(k), -j * cross));
                    grad.push((self.vm(i), cross / vi));
                    grad.push((self.vm(k), cross / vk));
                }
            }
            g[i] = s_i.re + bus.pd_mw / base;
            g[nb + i] = s_i.im + bus.qd_mvar / base;
            let mut merged: std::collections::BTreeMap<usize, Complex64> = Default::default();
            for (col, d) in grad {
                *merged.entry(col).or_default() += d;
            }
            dg[i] = merged.iter().map(|(&c, d)| (c, d.re)).collect();
            dg[nb + i] = merged.iter().map(|(&c, d)| (c, d.im)).collect();
        }
        for (k, &bus) in self.gen_bus.iter().enumerate() {
            g[bus] -= x[self.pg(k)];
            g[nb + bus] -= x[self.qg(k)];
            dg[bus].push((self.pg(k), -1.0));
            dg[nb + bus].push((self.qg(k), -1.0));
        }
        for (r, &s) in self.slack.iter().enumerate() {
            g[2 * nb + r] = x[self.th(s)];
            dg[2 * nb + r] = vec![(self.th(s), 1.0)];
        }

        let mut h = Vec::with_capacity(self.inequalities.len());
        let mut dh: Vec<SparseRow> = Vec::with_capacity(self.inequalities.len());
        for s in &self.rated {
            let limit = (self.net.branches[s.branch].rating_mva / base).powi(2);
            for from_end in [true, false] {
                let ef = self.end_flow(s, from_end, x);
                h.push(ef.s.norm_sqr() - limit);
                let idx = [self.th(ef.a), self.th(ef.b), self.vm(ef.a), self.vm(ef.b)];
                let row: SparseRow = idx
                    .iter()
                    .zip(ef.grad)
                    .map(|(&c, d)| (c, 2.0 * (ef.s.conj() * d).re))
                    .collect();
                dh.push(row);
            }
        }
        for ineq in self.inequalities.iter().skip(2 * self.rated.len()) {
            let (col, value, scale) = match ineq.kind {
                ConstraintKind::VoltageMax | ConstraintKind::VoltageMin => (self.vm(ineq.element), x[self.vm(ineq.element)], 1.0),
                ConstraintKind::ActiveMax | ConstraintKind::ActiveMin => {
                    let k = self.gen_slot(ineq.element).expect("in-service generator");
                    (self.pg(k), x[self.pg(k)], base)
                }
                ConstraintKind::ReactiveMax | ConstraintKind::ReactiveMin => {
                    let k = self.gen_slot(ineq.element).expect("in-service generator");
                    (self.qg(k), x[self.qg(k)], base)
                }
                ConstraintKind::BranchFlowFrom | ConstraintKind::BranchFlowTo => unreachable!(),
            };
            let limit = ineq.limit / scale;
            if ineq.kind.is_upper() {
                h.push(value - limit);
                dh.push(vec![(col, 1.0)]);
            } else {
                h.push(limit - value);
                dh.push(vec![(col, -1.0)]);
            }
        }

        Evaluation { f, df, g, h, dg, dh }
    }

    fn add_lagrangian_hessian(&self, x: &[f64], lam: &[f64], mu: &[f64], kkt: &mut TripletBuilder) {
        let nb = self.nb;
        let base = self.net.base_mva;
        for (k, &g) in self.gens.iter().enumerate() {
            let c2 = self.net.cost_models[g].c2();
            kkt.add(self.pg(k), self.pg(k), self.cost_mult * 2.0 * c2 * base * base);
        }

        let v = self.voltages(x);
        for i in 0..nb {
            let c = Complex64::new(lam[i], -lam[nb + i]);
            if c == Complex64::default() {
                continue;
            }
            let vi = x[self.vm(i)];
            for &(k, y) in &self.ybus.rows[i] {
                if k == i {
                    kkt.add(self.vm(i), self.vm(i), 2.0 * (c * y.conj()).re);
                } else {
                    let cross = v[i] * (y * v[k]).conj();
                    add_cross_hessian(
                        kkt,
                        [self.th(i), self.th(k), self.vm(i), self.vm(k)],
                        vi,
                        x[self.vm(k)],
                        c * cross,
                    );
                }
            }
        }

        for (r, s) in self.rated.iter().enumerate() {
            for (e, from_end) in [true, false].into_iter().enumerate() {
                let m = mu[2 * r + e];
                if m == 0.0 {
                    continue;
                }
                let ef = self.end_flow(s, from_end, x);
                let idx = [self.th(ef.a), self.th(ef.b), self.vm(ef.a), self.vm(ef.b)];
                // 2μ(∇P∇P' + ∇Q∇Q')
                for p in 0..4 {
                    for q in 0..4 {
                        let val = 2.0 * m * (ef.grad[p].re * ef.grad[q].re + ef.grad[p].im * ef.grad[q].im);
                        kkt.add(idx[p], idx[q], val);
                    }
                }
                // 2μ(P∇²P + Q∇²Q) = ∇² Re(2μ·conj(S)·S)
                let c = 2.0 * m * ef.s.conj();
                kkt.add(idx[2], idx[2], 2.0 * (c * ef.self_coef).re);
                add_cross_hessian(kkt, idx, x[idx[2]], x[idx[3]], c * ef.cross);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::case_io::load_builtin;

    fn numeric_check(net: &PowerSystem) {
        let model = AcopfModel::new(net, 1.0);
        let n = model.dim();
        let mut x = vec![0.0; n];
        for i in 0..model.nb {
            x[model.th(i)] = 0.05 * ((i * 7 % 11) as f64 - 5.0) / 5.0;
            x[model.vm(i)] = 0.97 + 0.01 * ((i * 3 % 7) as f64);
        }
        for k in 0..model.ng() {
            x[model.pg(k)] = 0.3 + 0.1 * k as f64;
            x[model.qg(k)] = 0.05 * k as f64;
        }
        let base = model.evaluate(&x);
        let neq = base.g.len();
        let niq = base.h.len();
        let lam: Vec<f64> = (0..neq).map(|r| 0.3 + 0.01 * (r % 13) as f64).collect();
        let mu: Vec<f64> = (0..niq).map(|r| 0.2 + 0.02 * (r % 5) as f64).collect();
        let mut kkt = TripletBuilder::new(n);
        model.add_lagrangian_hessian(&x, &lam, &mu, &mut kkt);
        let hess = kkt.to_dense();
        let lx = |x: &[f64]| super::super::ipm::lagrangian_gradient(&model.evaluate(x), &lam, &mu);
        let h = 1e-6;
        for col in 0..n {
            let mut xp = x.to_vec();
            let mut xm = x.to_vec();
            xp[col] += h;
            xm[col] -= h;
            let (gp, gm) = (lx(&xp), lx(&xm));
            for row in 0..n {
                let fd = (gp[row] - gm[row]) / (2.0 * h);
                assert!(
                    (fd - hess[row][col]).abs() <= 1e-5 * fd.abs().max(1.0),
                    "H[{row},{col}] {} vs fd {fd}",
                    hess[row][col]
                );
            }
            // Gradients of g and h against the same perturbation.
            let (ep, em) = (model.evaluate(&xp), model.evaluate(&xm));
            for r in 0..neq {
                let fd = (ep.g[r] - em.g[r]) / (2.0 * h);
                let an: f64 = base.dg[r].iter().filter(|(c, _)| *c == col).map(|(_, v)| v).sum();
                assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1.0), "dg[{r},{col}]");
            }
            for r in 0..niq {
                let fd = (ep.h[r] - em.h[r]) / (2.0 * h);
                let an: f64 = base.dh[r].iter().filter(|(c, _)| *c == col).map(|(_, v)| v).sum();
                assert!((fd - an).abs() <= 1e-6 * fd.abs().max(1.0), "dh[{r},{col}] {an} vs {fd}");
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences_case14() {
        let mut net = load_builtin("case14").unwrap();
        for br in &mut net.branches {
            br.rating_mva = 50.0;
        }
        net.branches[7].shift_deg = 3.0;
        numeric_check(&net);
    }

    #[test]
    fn derivatives_match_finite_differences_case30() {
        numeric_check(&load_builtin("case30").unwrap());
    }
}
