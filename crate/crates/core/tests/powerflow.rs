use powerdesk::case_io::load_builtin;
use powerdesk::network::PowerSystem;
use powerdesk::powerflow::{
    build_ybus, check_balance, compute_flows, solve_powerflow, PolarMismatch, PowerFlowOptions,
    PowerFlowStart, ValidationThresholds,
};
use rand::{Rng, SeedableRng};

mod common;

fn no_qlim() -> PowerFlowOptions {
    PowerFlowOptions {
        enforce_q_limits: false,
        ..Default::default()
    }
}

#[test]
fn newton_matches_gauss_seidel_case14_case30() {
    for name in ["case14", "case30"] {
        let net = load_builtin(name).unwrap();
        let nr = solve_powerflow(&net, &PowerFlowStart::Flat, &ValidationThresholds::default(), &no_qlim()).unwrap();
        let gs = common::gauss_seidel(&net, 1e-13, 200_000);
        for (i, (a, b)) in nr.vm_pu.iter().zip(&gs).enumerate() {
            assert!((a - b.norm()).abs() < 1e-6, "{name} bus {i}: {a} vs {}", b.norm());
        }
    }
}

#[test]
fn jacobian_matches_central_differences() {
    let net = load_builtin("case14").unwrap();
    let mut rng = rand::rngs::StdRng::seed_from_u64(7);
    let n = net.buses.len();
    let vm: Vec<f64> = (0..n).map(|_| rng.gen_range(0.95..1.05)).collect();
    let va: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.3..0.3)).collect();
    let problem = PolarMismatch::from_network(&net, vm, va).unwrap();
    let x = problem.x();
    let analytic = problem.jacobian(&x).to_dense();
    let h = 1e-6;
    for col in 0..x.len() {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[col] += h;
        xm[col] -= h;
        let fp = problem.evaluate(&xp);
        let fm = problem.evaluate(&xm);
        for row in 0..x.len() {
            let fd = (fp[row] - fm[row]) / (2.0 * h);
            let a = analytic[row][col];
            assert!((fd - a).abs() <= 1e-6 * a.abs().max(1.0), "J[{row},{col}] analytic {a} fd {fd}");
        }
    }
}

#[test]
fn case14_ybus_diagonal_dominates_each_entry() {
    // Row-sum dominance fails at off-nominal transformer taps, so the
    // check is per entry.
    let net = load_builtin("case14").unwrap();
    let y = build_ybus(&net);
    for (i, row) in y.rows.iter().enumerate() {
        let off: f64 = row.iter().filter(|(c, _)| *c != i).map(|(_, v)| v.norm()).fold(0.0, f64::max);
        assert!(y.diagonal(i).norm() >= off * (1.0 - 1e-9), "row {i}");
    }
}

#[test]
fn outaged_branch_equals_rebuilt_without_it() {
    let mut outaged = load_builtin("case14").unwrap();
    outaged.branches[0].in_service = false;
    let mut removed = load_builtin("case14").unwrap();
    removed.branches.remove(0);
    let a = build_ybus(&outaged);
    let b = build_ybus(&removed);
    assert_eq!(a.rows, b.rows);
    assert_eq!(a.stamps.len(), 19);
}

#[test]
fn outage_equals_deletion_in_solution() {
    let net = load_builtin("case30").unwrap();
    for k in [3, 10, 25] {
        let mut outaged = net.clone();
        outaged.branches[k].in_service = false;
        let mut removed = net.clone();
        removed.branches.remove(k);
        let th = ValidationThresholds::default();
        let a = solve_powerflow(&outaged, &PowerFlowStart::Flat, &th, &Default::default()).unwrap();
        let b = solve_powerflow(&removed, &PowerFlowStart::Flat, &th, &Default::default()).unwrap();
        for (x, y) in a.vm_pu.iter().zip(&b.vm_pu) {
            assert!((x - y).abs() < 1e-10);
        }
        for (x, y) in a.va_deg.iter().zip(&b.va_deg) {
            assert!((x - y).abs() < 1e-10);
        }
    }
}

#[test]
fn perturbed_voltage_fails_balance_near_bus() {
    let net = load_builtin("case14").unwrap();
    let th = ValidationThresholds::default();
    let sol = solve_powerflow(&net, &PowerFlowStart::Flat, &th, &Default::default()).unwrap();
    assert!(check_balance(&net, &sol.state(), &th).passed);
    let mut state = sol.state();
    let pos = net.bus_position(3).unwrap();
    state.vm_pu[pos] += 0.05;
    let check = check_balance(&net, &state, &th);
    assert!(!check.passed);
    let near: Vec<u32> = net
        .branches
        .iter()
        .filter(|b| b.from_bus == 3 || b.to_bus == 3)
        .flat_map(|b| [b.from_bus, b.to_bus])
        .collect();
    assert!(check.worst_bus_id == 3 || near.contains(&check.worst_bus_id), "{}", check.worst_bus_id);
}

#[test]
fn zero_network_flat_state_balances_exactly() {
    let mut net = load_builtin("case14").unwrap();
    zero_out(&mut net);
    let th = ValidationThresholds::default();
    let state = powerdesk::powerflow::GridState {
        vm_pu: vec![1.0; 14],
        va_deg: vec![0.0; 14],
        gen_p_mw: vec![0.0; net.generators.len()],
        gen_q_mvar: vec![0.0; net.generators.len()],
    };
    let check = check_balance(&net, &state, &th);
    assert!(check.passed);
    assert!(check.mismatch_pu < 1e-12);
    let flows = compute_flows(&net, &state.vm_pu, &state.va_deg);
    assert!(flows.branch_flows.iter().all(|f| f.p_from_mw.abs() < 1e-12));
}

fn zero_out(net: &mut PowerSystem) {
    for b in &mut net.buses {
        b.pd_mw = 0.0;
        b.qd_mvar = 0.0;
        b.gs_mw = 0.0;
        b.bs_mvar = 0.0;
    }
    for br in &mut net.branches {
        br.b_pu = 0.0;
        br.tap_ratio = 1.0;
        br.shift_deg = 0.0;
    }
    for g in &mut net.generators {
        g.pg_mw = 0.0;
        g.vg_pu = 1.0;
    }
}

#[test]
fn zero_injection_case_converges_quickly() {
    let mut net = load_builtin("case14").unwrap();
    zero_out(&mut net);
    let sol = solve_powerflow(&net, &PowerFlowStart::Flat, &ValidationThresholds::default(), &Default::default()).unwrap();
    assert!(sol.iterations <= 2);
    assert!(sol.losses_mw.abs() < 1e-9);
}

#[test]
fn converged_solutions_pass_gate_on_all_cases() {
    let th = ValidationThresholds::default();
    for name in powerdesk::case_io::BUILTIN_CASES {
        let net = load_builtin(name).unwrap();
        let sol = solve_powerflow(&net, &PowerFlowStart::Flat, &th, &Default::default()).unwrap();
        assert!(sol.max_mismatch_pu < th.nr_tol_pu, "{name}: {}", sol.max_mismatch_pu);
        assert!(check_balance(&net, &sol.state(), &th).passed);
        assert!(sol.branch_flows.iter().all(|f| f.loading_percent.is_none_or(|l| l >= 0.0)));
    }
}
