//! Shared oracles for the integration tests.

#![allow(dead_code)]

use num_complex::Complex64;
use powerdesk::network::{BusType, PowerSystem};

/// Dense bus admittance matrix stamped directly from branch data.
pub fn dense_ybus(net: &PowerSystem) -> Vec<Vec<Complex64>> {
    let n = net.buses.len();
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    let mut y = vec![vec![Complex64::new(0.0, 0.0); n]; n];
    for br in net.branches.iter().filter(|b| b.in_service) {
        let (f, t) = (pos(br.from_bus), pos(br.to_bus));
        let ys = 1.0 / Complex64::new(br.r_pu, br.x_pu);
        let bc = Complex64::new(0.0, br.b_pu / 2.0);
        let a = Complex64::from_polar(br.tap_ratio, br.shift_deg.to_radians());
        y[f][f] += (ys + bc) / a.norm_sqr();
        y[f][t] += -ys / a.conj();
        y[t][f] += -ys / a;
        y[t][t] += ys + bc;
    }
    for (i, b) in net.buses.iter().enumerate() {
        y[i][i] += Complex64::new(b.gs_mw, b.bs_mvar) / net.base_mva;
    }
    y
}

/// Plain Gauss–Seidel power flow without generator Q limits.
/// Returns complex bus voltages.
pub fn gauss_seidel(net: &PowerSystem, tol: f64, max_sweeps: usize) -> Vec<Complex64> {
    let n = net.buses.len();
    let y = dense_ybus(net);
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut setpoint = vec![None; n];
    for (i, b) in net.buses.iter().enumerate() {
        p[i] -= b.pd_mw;
        q[i] -= b.qd_mvar;
    }
    for g in net.generators.iter().filter(|g| g.in_service) {
        let i = pos(g.bus_id);
        p[i] += g.pg_mw;
        q[i] += g.qg_mvar;
        if setpoint[i].is_none() {
            setpoint[i] = Some(g.vg_pu);
        }
    }
    let kind: Vec<BusType> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| match b.bus_type {
            BusType::Slack => BusType::Slack,
            BusType::Pv if setpoint[i].is_some() => BusType::Pv,
            _ => BusType::Pq,
        })
        .collect();
    let mut v: Vec<Complex64> = (0..n)
        .map(|i| match kind[i] {
            BusType::Pq => Complex64::new(1.0, 0.0),
            _ => Complex64::new(setpoint[i].unwrap_or(net.buses[i].vm_pu), 0.0),
        })
        .collect();
    for _ in 0..max_sweeps {
        let mut worst: f64 = 0.0;
        for i in 0..n {
            if kind[i] == BusType::Slack {
                continue;
            }
            let sum: Complex64 = (0..n).filter(|&k| k != i).map(|k| y[i][k] * v[k]).sum();
            let mut qi = q[i] / net.base_mva;
            if kind[i] == BusType::Pv {
                qi = -(v[i].conj() * (sum + y[i][i] * v[i])).im;
            }
            let s = Complex64::new(p[i] / net.base_mva, qi);
            let mut next = (s.conj() / v[i].conj() - sum) / y[i][i];
            if kind[i] == BusType::Pv {
                next = next / next.norm() * v[i].norm();
            }
            worst = worst.max((next - v[i]).norm());
            v[i] = next;
        }
        if worst < tol {
            return v;
        }
    }
    panic!("Gauss-Seidel oracle did not converge");
}

pub struct ReferenceOpf {
    pub objective: f64,
    pub vmin: f64,
    pub vmax: f64,
    pub pg: Vec<f64>,
}

/// Objectives and dispatch recorded once from an independent open-source
/// OPF solver on the same case data.
pub fn reference_opf() -> std::collections::HashMap<String, ReferenceOpf> {
    let text = include_str!("../data/reference_opf.json");
    let v: serde_json::Value = serde_json::from_str(text).unwrap();
    v.as_object()
        .unwrap()
        .iter()
        .map(|(k, e)| {
            (
                k.clone(),
                ReferenceOpf {
                    objective: e["f"].as_f64().unwrap(),
                    vmin: e["vmin"].as_f64().unwrap(),
                    vmax: e["vmax"].as_f64().unwrap(),
                    pg: e["pg"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect(),
                },
            )
        })
        .collect()
}
