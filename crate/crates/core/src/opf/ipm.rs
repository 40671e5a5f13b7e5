//! Primal-dual interior-point method for
//!
//! ```text
//!   min f(x)  s.t.  g(x) = 0,  h(x) <= 0
//! ```
//!
//! Inequalities carry explicit slacks z > 0 with h(x) + z = 0. Each step
//! solves the reduced KKT system
//!
//! ```text
//!   [ Lxx + dh' (mu/z) dh   dg' ] [dx  ]   [ -N ]
//!   [ dg                    0   ] [dlam] = [ -g ]
//! ```
//!
//! and the barrier parameter follows gamma = sigma * z'mu / niq.

use crate::linalg::TripletBuilder;

/// One sparse constraint gradient.
pub type SparseRow = Vec<(usize, f64)>;

pub struct Evaluation {
    pub f: f64,
    pub df: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    pub dg: Vec<SparseRow>,
    pub dh: Vec<SparseRow>,
}

pub trait NlpProblem {
    fn dim(&self) -> usize;
    /// Objective already scaled by the problem's cost multiplier.
    fn evaluate(&self, x: &[f64]) -> Evaluation;
    /// Adds the Hessian of f + lam'g + mu'h into the leading block of `kkt`.
    fn add_lagrangian_hessian(&self, x: &[f64], lam: &[f64], mu: &[f64], kkt: &mut TripletBuilder);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpmSettings {
    pub feas_tol: f64,
    pub grad_tol: f64,
    pub comp_tol: f64,
    pub cost_tol: f64,
    pub max_iterations: usize,
    pub step_fraction: f64,
    pub sigma: f64,
    pub z0: f64,
    pub alpha_min: f64,
}

impl Default for IpmSettings {
    fn default() -> Self {
        IpmSettings {
            feas_tol: 1e-6,
            grad_tol: 1e-6,
            comp_tol: 1e-6,
            cost_tol: 1e-6,
            max_iterations: 150,
            step_fraction: 0.995,
            sigma: 0.1,
            z0: 1.0,
            alpha_min: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IpmStatus {
    Converged,
    IterationLimit,
    NumericalFailure,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct KktConditions {
    pub feascond: f64,
    pub gradcond: f64,
    pub compcond: f64,
    pub costcond: f64,
}

#[derive(Debug, Clone)]
pub struct IpmResult {
    pub status: IpmStatus,
    pub x: Vec<f64>,
    pub lam: Vec<f64>,
    pub mu: Vec<f64>,
    pub z: Vec<f64>,
    pub f: f64,
    pub iterations: usize,
    pub conditions: KktConditions,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m: f64, x| if x.is_nan() { f64::NAN } else { m.max(x.abs()) })
}

fn dot_row(row: &SparseRow, v: &[f64]) -> f64 {
    row.iter().map(|&(j, a)| a * v[j]).sum()
}

/// Gradient of the Lagrangian f + lam'g + mu'h.
pub fn lagrangian_gradient(ev: &Evaluation, lam: &[f64], mu: &[f64]) -> Vec<f64> {
    let mut lx = ev.df.clone();
    for (row, &l) in ev.dg.iter().zip(lam) {
        for &(j, a) in row {
            lx[j] += a * l;
        }
    }
    for (row, &m) in ev.dh.iter().zip(mu) {
        for &(j, a) in row {
            lx[j] += a * m;
        }
    }
    lx
}

fn conditions(ev: &Evaluation, x: &[f64], z: &[f64], lam: &[f64], mu: &[f64], f_prev: f64) -> KktConditions {
    let lx = lagrangian_gradient(ev, lam, mu);
    let maxh = ev.h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let feas = if ev.h.is_empty() { inf_norm(&ev.g) } else { inf_norm(&ev.g).max(maxh) };
    let zmu: f64 = z.iter().zip(mu).map(|(a, b)| a * b).sum();
    KktConditions {
        feascond: feas / (1.0 + inf_norm(x).max(inf_norm(z))),
        gradcond: inf_norm(&lx) / (1.0 + inf_norm(lam).max(inf_norm(mu))),
        compcond: zmu / (1.0 + inf_norm(x)),
        costcond: (ev.f - f_prev).abs() / (1.0 + f_prev.abs()),
    }
}

impl KktConditions {
    fn met(&self, s: &IpmSettings) -> bool {
        self.feascond < s.feas_tol
            && self.gradcond < s.grad_tol
            && self.compcond < s.comp_tol
            && self.costcond < s.cost_tol
    }
}

fn max_step(v: &[f64], dv: &[f64], fraction: f64) -> f64 {
    let ratio = v
        .iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(a, d)| a / -d)
        .fold(f64::INFINITY, f64::min);
    (fraction * ratio).min(1.0)
}

pub fn solve<P: NlpProblem>(problem: &P, x0: Vec<f64>, s: &IpmSettings) -> IpmResult {
    let n = problem.dim();
    let mut x = x0;
    let mut ev = problem.evaluate(&x);
    let neq = ev.g.len();
    let niq = ev.h.len();

    let mut gamma = 1.0;
    let mut z = vec![s.z0; niq];
    let mut mu = vec![s.z0; niq];
    let mut lam = vec![0.0; neq];
    for k in 0..niq {
        if ev.h[k] < -s.z0 {
            z[k] = -ev.h[k];
        }
        if gamma / z[k] > s.z0 {
            mu[k] = gamma / z[k];
        }
    }

    let mut f_prev = ev.f;
    let mut cond = conditions(&ev, &x, &z, &lam, &mu, f_prev);
    // The cost condition is vacuous before the first step.
    let mut status = IpmStatus::IterationLimit;
    let mut iterations = 0;
    if cond.met(s) {
        status = IpmStatus::Converged;
    }

    while status == IpmStatus::IterationLimit && iterations < s.max_iterations {
        iterations += 1;
        let lx = lagrangian_gradient(&ev, &lam, &mu);
        let mut kkt = TripletBuilder::new(n + neq);
        problem.add_lagrangian_hessian(&x, &lam, &mu, &mut kkt);
        let mut rhs = vec![0.0; n + neq];
        for j in 0..n {
            rhs[j] = -lx[j];
            kkt.touch(j, j);
        }
        for k in 0..niq {
            let w = mu[k] / z[k];
            let row = &ev.dh[k];
            for &(a, ga) in row {
                for &(b, gb) in row {
                    kkt.add(a, b, w * ga * gb);
                }
            }
            let c = (mu[k] * ev.h[k] + gamma) / z[k];
            for &(a, ga) in row {
                rhs[a] -= ga * c;
            }
        }
        for (r, row) in ev.dg.iter().enumerate() {
            for &(a, ga) in row {
                kkt.add(n + r, a, ga);
                kkt.add(a, n + r, ga);
            }
            rhs[n + r] = -ev.g[r];
        }
        let step = match kkt.solve(&rhs) {
            Ok(v) => v,
            Err(_) => {
                status = IpmStatus::NumericalFailure;
                break;
            }
        };
        let (dx, dlam) = step.split_at(n);
        let dz: Vec<f64> = (0..niq)
            .map(|k| -ev.h[k] - z[k] - dot_row(&ev.dh[k], dx))
            .collect();
        let dmu: Vec<f64> = (0..niq)
            .map(|k| -mu[k] + (gamma - mu[k] * dz[k]) / z[k])
            .collect();

        let alpha_p = max_step(&z, &dz, s.step_fraction);
        let alpha_d = max_step(&mu, &dmu, s.step_fraction);
        for j in 0..n {
            x[j] += alpha_p * dx[j];
        }
        for k in 0..niq {
            z[k] += alpha_p * dz[k];
            mu[k] += alpha_d * dmu[k];
        }
        for r in 0..neq {
            lam[r] += alpha_d * dlam[r];
        }
        if niq > 0 {
            gamma = s.sigma * z.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / niq as f64;
        }

        ev = problem.evaluate(&x);
        cond = conditions(&ev, &x, &z, &lam, &mu, f_prev);
        f_prev = ev.f;

        if x.iter().any(|v| !v.is_finite())
            || alpha_p < s.alpha_min
            || alpha_d < s.alpha_min
            || !(f64::EPSILON..=1.0 / f64::EPSILON).contains(&gamma) && niq > 0
        {
            status = IpmStatus::NumericalFailure;
            break;
        }
        if cond.met(s) {
            status = IpmStatus::Converged;
        }
    }

    IpmResult {
        status,
        x,
        lam,
        mu,
        z,
        f: ev.f,
        iterations,
        conditions: cond,
    }
}
