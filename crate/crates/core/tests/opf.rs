use std::time::Instant;

use powerdesk::case_io::load_builtin;
use powerdesk::opf::{lagrangian_gradient_norm, solve_acopf, AcopfOptions};
use powerdesk::powerflow::{check_balance, ValidationThresholds};

mod common;

#[test]
fn objectives_match_reference_solver() {
    let reference = common::reference_opf();
    for name in ["case14", "case30", "case57", "case118", "case300"] {
        let net = load_builtin(name).unwrap();
        let t = Instant::now();
        let sol = solve_acopf(&net, &AcopfOptions::default()).unwrap();
        let golden = reference[name].objective;
        let rel = (sol.objective_cost - golden).abs() / golden;
        println!(
            "{name}: {:.6} vs {golden:.6} rel {rel:.2e} it {} mismatch {:.2e} kkt {:?} {:?}",
            sol.objective_cost,
            sol.iterations,
            sol.max_mismatch_pu,
            sol.kkt,
            t.elapsed()
        );
        assert!(sol.solved, "{name}: {}", sol.convergence_message);
        assert!(rel < 5e-3, "{name}");
        assert!(lagrangian_gradient_norm(&net, &sol) < 1e-5);
        assert!(check_balance(&net, &sol.state, &ValidationThresholds::default()).passed);
    }
}

#[test]
fn dispatch_tracks_reference() {
    let reference = common::reference_opf();
    for name in ["case14", "case30", "case118"] {
        let net = load_builtin(name).unwrap();
        let sol = solve_acopf(&net, &AcopfOptions::default()).unwrap();
        let r = &reference[name];
        for (g, p) in r.pg.iter().enumerate() {
            assert!((sol.gen_dispatch[g].p_mw - p).abs() < 0.05, "{name} gen {g}");
        }
        assert!((sol.min_voltage_pu - r.vmin).abs() < 1e-3);
        assert!((sol.max_voltage_pu - r.vmax).abs() < 1e-3);
    }
}

#[test]
fn reported_margins_match_raw_state() {
    let net = load_builtin("case30").unwrap();
    let sol = solve_acopf(&net, &AcopfOptions::default()).unwrap();
    let v: Vec<num_complex::Complex64> = sol
        .state
        .vm_pu
        .iter()
        .zip(&sol.state.va_deg)
        .map(|(&m, &a)| num_complex::Complex64::from_polar(m, a.to_radians()))
        .collect();
    let pos = |id: u32| net.buses.iter().position(|b| b.id == id).unwrap();
    for m in &sol.constraint_margins {
        use powerdesk::opf::ConstraintKind::*;
        let recomputed = match m.kind {
            BranchFlowFrom | BranchFlowTo => {
                let br = &net.branches[m.element];
                let ys = 1.0 / num_complex::Complex64::new(br.r_pu, br.x_pu);
                let bc = num_complex::Complex64::new(0.0, br.b_pu / 2.0);
                let a = num_complex::Complex64::from_polar(br.tap_ratio, br.shift_deg.to_radians());
                let (vf, vt) = (v[pos(br.from_bus)], v[pos(br.to_bus)]);
                let s = if m.kind == BranchFlowFrom {
                    let i = (ys + bc) / a.norm_sqr() * vf - ys / a.conj() * vt;
                    vf * i.conj()
                } else {
                    let i = -ys / a * vf + (ys + bc) * vt;
                    vt * i.conj()
                };
                br.rating_mva - s.norm() * net.base_mva
            }
            VoltageMax => net.buses[pos(m.element as u32)].vmax_pu - sol.state.vm_pu[pos(m.element as u32)],
            VoltageMin => sol.state.vm_pu[pos(m.element as u32)] - net.buses[pos(m.element as u32)].vmin_pu,
            ActiveMax => net.generators[m.element].pmax_mw - sol.state.gen_p_mw[m.element],
            ActiveMin => sol.state.gen_p_mw[m.element] - net.generators[m.element].pmin_mw,
            ReactiveMax => net.generators[m.element].qmax_mvar - sol.state.gen_q_mvar[m.element],
            ReactiveMin => sol.state.gen_q_mvar[m.element] - net.generators[m.element].qmin_mvar,
        };
        assert!((recomputed - m.margin).abs() < 1e-8, "{}: {} vs {}", m.label, recomputed, m.margin);
        assert!(m.normalized(net.base_mva) >= -powerdesk::opf::FEASIBILITY_TOL, "{}", m.label);
    }
}

#[test]
fn relaxing_binding_rating_never_raises_cost() {
    let net = load_builtin("case30").unwrap();
    let sol = solve_acopf(&net, &AcopfOptions::default()).unwrap();
    let binding = sol
        .constraint_margins
        .iter()
        .filter(|m| matches!(m.kind, powerdesk::opf::ConstraintKind::BranchFlowFrom | powerdesk::opf::ConstraintKind::BranchFlowTo))
        .min_by(|a, b| a.margin.total_cmp(&b.margin))
        .unwrap();
    assert!(binding.margin < 1e-3, "no binding rating in case30: {}", binding.margin);
    let mut relaxed = net.clone();
    relaxed.branches[binding.element].rating_mva *= 1.1;
    let better = solve_acopf(&relaxed, &AcopfOptions::default()).unwrap();
    assert!(better.solved);
    assert!(better.objective_cost <= sol.objective_cost * (1.0 + 1e-7));
}

#[test]
fn load_increase_never_lowers_cost() {
    for name in ["case14", "case30"] {
        let net = load_builtin(name).unwrap();
        let base = solve_acopf(&net, &AcopfOptions::default()).unwrap();
        for bus in [2usize, 5, 9] {
            let mut heavier = net.clone();
            heavier.buses[bus].pd_mw += 5.0;
            let sol = solve_acopf(&heavier, &AcopfOptions::default()).unwrap();
            assert!(sol.solved);
            assert!(sol.objective_cost >= base.objective_cost * (1.0 - 1e-7), "{name} bus {bus}");
        }
    }
}

#[test]
fn case118_quality_is_reproducible() {
    use powerdesk::opf::assess_quality;
    let net = load_builtin("case118").unwrap();
    let th = ValidationThresholds::default();
    let a = solve_acopf(&net, &AcopfOptions::default()).unwrap();
    let b = solve_acopf(&net, &AcopfOptions::default()).unwrap();
    let qa = assess_quality(&a, &net, &th, &Default::default()).unwrap();
    let qb = assess_quality(&b, &net, &th, &Default::default()).unwrap();
    assert_eq!(qa.overall_score.to_bits(), qb.overall_score.to_bits());
    assert_eq!(a.state_checksum, b.state_checksum);
}
