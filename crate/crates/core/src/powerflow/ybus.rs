use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::network::PowerSystem;

/// Pi-model admittances of one in-service branch, kept for flow recovery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchStamp {
    pub branch: usize,
    pub from: usize,
    pub to: usize,
    pub yff: Complex64,
    pub yft: Complex64,
    pub ytf: Complex64,
    pub ytt: Complex64,
}

/// Bus admittance matrix in row-compressed form.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmittanceMatrix {
    pub dim: usize,
    /// Per row, `(column, value)` sorted by column.
    pub rows: Vec<Vec<(usize, Complex64)>>,
    pub stamps: Vec<BranchStamp>,
}

impl AdmittanceMatrix {
    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.rows[row]
            .binary_search_by_key(&col, |&(c, _)| c)
            .map(|k| self.rows[row][k].1)
            .unwrap_or_default()
    }

    pub fn diagonal(&self, i: usize) -> Complex64 {
        self.get(i, i)
    }

    /// I = Y·V
    pub fn mul(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, y)| y * v[c]).sum())
            .collect()
    }
}

pub fn branch_stamp(
    net: &PowerSystem,
    k: usize,
    lookup: &std::collections::HashMap<u32, usize>,
) -> BranchStamp {
    let br = &net.branches[k];
    let ys = Complex64::new(br.r_pu, br.x_pu).inv();
    let half_b = Complex64::new(0.0, br.b_pu / 2.0);
    let tap = Complex64::from_polar(br.tap_ratio, br.shift_deg.to_radians());
    BranchStamp {
        branch: k,
        from: lookup[&br.from_bus],
        to: lookup[&br.to_bus],
        yff: (ys + half_b) / (tap * tap.conj()),
        yft: -ys / tap.conj(),
        ytf: -ys / tap,
        ytt: ys + half_b,
    }
}

/// Standard pi-model stamping with off-nominal tap and phase shift.
/// Out-of-service branches contribute nothing.
pub fn build_ybus(net: &PowerSystem) -> AdmittanceMatrix {
    let n = net.buses.len();
    let lookup = net.bus_lookup();
    let mut dense_rows: Vec<std::collections::BTreeMap<usize, Complex64>> =
        vec![Default::default(); n];
    let mut stamps = Vec::new();
    for (k, br) in net.branches.iter().enumerate() {
        if !br.in_service {
            continue;
        }
        let s = branch_stamp(net, k, &lookup);
        *dense_rows[s.from].entry(s.from).or_default() += s.yff;
        *dense_rows[s.from].entry(s.to).or_default() += s.yft;
        *dense_rows[s.to].entry(s.from).or_default() += s.ytf;
        *dense_rows[s.to].entry(s.to).or_default() += s.ytt;
        stamps.push(s);
    }
    for (i, bus) in net.buses.iter().enumerate() {
        let ysh = Complex64::new(bus.gs_mw, bus.bs_mvar) / net.base_mva;
        if ysh != Complex64::default() || dense_rows[i].is_empty() {
            *dense_rows[i].entry(i).or_default() += ysh;
        }
    }
    AdmittanceMatrix {
        dim: n,
        rows: dense_rows
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
        stamps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::two_bus;

    #[test]
    fn single_lossless_stamp() {
        let mut net = two_bus();
        net.branches[0].r_pu = 0.0;
        let y = build_ybus(&net);
        let off = y.get(0, 1);
        assert!((off - Complex64::new(0.0, 10.0)).norm() < 1e-12, "{off}");
        assert!((y.diagonal(0) - Complex64::new(0.0, -10.0)).norm() < 1e-12);
    }

    #[test]
    fn isolated_bus_row_holds_only_shunt() {
        let mut net = two_bus();
        net.branches[0].in_service = false;
        net.buses[1].bs_mvar = 19.0;
        let y = build_ybus(&net);
        assert_eq!(y.rows[1], vec![(1, Complex64::new(0.0, 0.19))]);
        assert!(y.stamps.is_empty());
    }

    #[test]
    fn symmetric_pattern_with_phase_shift() {
        let mut net = two_bus();
        net.branches[0].tap_ratio = 0.95;
        net.branches[0].shift_deg = 5.0;
        let y = build_ybus(&net);
        for i in 0..2 {
            for &(j, _) in &y.rows[i] {
                assert!(y.rows[j].iter().any(|&(c, _)| c == i));
            }
        }
        assert!((y.get(0, 1) - y.get(1, 0)).norm() > 1e-6);
    }
}
