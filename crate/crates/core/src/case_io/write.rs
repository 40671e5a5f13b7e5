use std::fmt::Write as _;

use crate::network::{BranchKind, PowerSystem};

fn num(v: f64) -> String {
    if v == f64::INFINITY {
        "Inf".into()
    } else if v == f64::NEG_INFINITY {
        "-Inf".into()
    } else {
        format!("{v}")
    }
}

fn row(out: &mut String, values: &[f64]) {
    out.push('\t');
    let cells: Vec<String> = values.iter().map(|&v| num(v)).collect();
    out.push_str(&cells.join("\t"));
    out.push_str(";\n");
}

/// Render `net` in the matrix case format accepted by [`super::parse_case`].
pub fn serialize_case(net: &PowerSystem) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "function mpc = {}", net.case_name);
    out.push_str("\n%% MATPOWER Case Format : Version 2\nmpc.version = '2';\n\n");
    out.push_str("%%-----  Power Flow Data  -----%%\n%% system MVA base\n");
    let _ = writeln!(out, "mpc.baseMVA = {};\n", num(net.base_mva));

    out.push_str("%% bus data\n%\tbus_i\ttype\tPd\tQd\tGs\tBs\tarea\tVm\tVa\tbaseKV\tzone\tVmax\tVmin\nmpc.bus = [\n");
    for b in &net.buses {
        row(
            &mut out,
            &[
                b.id as f64,
                b.bus_type.code() as f64,
                b.pd_mw,
                b.qd_mvar,
                b.gs_mw,
                b.bs_mvar,
                b.area as f64,
                b.vm_pu,
                b.va_deg,
                b.base_kv,
                b.zone as f64,
                b.vmax_pu,
                b.vmin_pu,
            ],
        );
    }
    out.push_str("];\n\n");

    out.push_str("%% generator data\n%\tbus\tPg\tQg\tQmax\tQmin\tVg\tmBase\tstatus\tPmax\tPmin\nmpc.gen = [\n");
    for g in &net.generators {
        row(
            &mut out,
            &[
                g.bus_id as f64,
                g.pg_mw,
                g.qg_mvar,
                g.qmax_mvar,
                g.qmin_mvar,
                g.vg_pu,
                g.mbase_mva,
                if g.in_service { 1.0 } else { 0.0 },
                g.pmax_mw,
                g.pmin_mw,
            ],
        );
    }
    out.push_str("];\n\n");

    out.push_str("%% branch data\n%\tfbus\ttbus\tr\tx\tb\trateA\trateB\trateC\tratio\tangle\tstatus\tangmin\tangmax\nmpc.branch = [\n");
    for br in &net.branches {
        let tap = if br.kind == BranchKind::Line && br.tap_ratio == 1.0 && br.shift_deg == 0.0 {
            0.0
        } else {
            br.tap_ratio
        };
        row(
            &mut out,
            &[
                br.from_bus as f64,
                br.to_bus as f64,
                br.r_pu,
                br.x_pu,
                br.b_pu,
                br.rating_mva,
                br.rate_b_mva,
                br.rate_c_mva,
                tap,
                br.shift_deg,
                if br.in_service { 1.0 } else { 0.0 },
                br.angmin_deg,
                br.angmax_deg,
            ],
        );
    }
    out.push_str("];\n\n");

    out.push_str("%%-----  OPF Data  -----%%\n%% generator cost data\n%\t2\tstartup\tshutdown\tn\tc(n-1)\t...\tc0\nmpc.gencost = [\n");
    for c in &net.cost_models {
        let mut values = vec![2.0, c.startup, c.shutdown, c.coefficients.len() as f64];
        values.extend_from_slice(&c.coefficients);
        row(&mut out, &values);
    }
    out.push_str("];\n");
    out
}
