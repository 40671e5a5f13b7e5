//! Steady-state network model shared by every solver and agent.
//!
//! A [`PowerSystem`] is an immutable value. Edits are expressed as
//! [`Modification`] records and applied with [`apply_modification`], which
//! returns a new network and leaves its input untouched.

mod modification;
mod topology;
mod validate;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub use modification::{apply_modification, ModKind, Modification, ModificationError};
pub use topology::{connected_components, Components};
pub use validate::{validate_network, ElementRef, ValidationReport, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BusType {
    Pq,
    Pv,
    Slack,
}

impl BusType {
    /// Numeric code used by the matrix case format.
    pub fn code(self) -> u8 {
        match self {
            BusType::Pq => 1,
            BusType::Pv => 2,
            BusType::Slack => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    /// External bus number, kept for display.
    pub id: u32,
    /// Dense zero-based position in [`PowerSystem::buses`].
    pub index: usize,
    pub bus_type: BusType,
    pub pd_mw: f64,
    pub qd_mvar: f64,
    /// Shunt conductance, MW consumed at 1.0 p.u.
    pub gs_mw: f64,
    /// Shunt susceptance, MVAr injected at 1.0 p.u.
    pub bs_mvar: f64,
    pub area: u32,
    pub vm_pu: f64,
    pub va_deg: f64,
    pub base_kv: f64,
    pub zone: u32,
    pub vmax_pu: f64,
    pub vmin_pu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus_id: u32,
    pub pg_mw: f64,
    pub qg_mvar: f64,
    pub qmax_mvar: f64,
    pub qmin_mvar: f64,
    /// Voltage magnitude setpoint.
    pub vg_pu: f64,
    pub mbase_mva: f64,
    pub in_service: bool,
    pub pmax_mw: f64,
    pub pmin_mw: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BranchKind {
    Line,
    Transformer,
}

impl BranchKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BranchKind::Line => "line",
            BranchKind::Transformer => "transformer",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub from_bus: u32,
    pub to_bus: u32,
    pub r_pu: f64,
    pub x_pu: f64,
    /// Total line charging susceptance.
    pub b_pu: f64,
    /// Long-term rating; 0 means unlimited.
    pub rating_mva: f64,
    pub rate_b_mva: f64,
    pub rate_c_mva: f64,
    /// Off-nominal turns ratio; 1.0 for lines.
    pub tap_ratio: f64,
    pub shift_deg: f64,
    pub in_service: bool,
    pub angmin_deg: f64,
    pub angmax_deg: f64,
    pub kind: BranchKind,
}

impl Branch {
    pub fn is_rated(&self) -> bool {
        self.rating_mva > 0.0
    }

    /// "from-to" label in external bus numbers.
    pub fn label(&self) -> String {
        format!("{}-{}", self.from_bus, self.to_bus)
    }
}

/// Polynomial generator cost, coefficients stored highest order first as in
/// the case format (at most quadratic).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub startup: f64,
    pub shutdown: f64,
    pub coefficients: Vec<f64>,
}

impl CostModel {
    pub fn quadratic(c2: f64, c1: f64, c0: f64) -> Self {
        CostModel {
            startup: 0.0,
            shutdown: 0.0,
            coefficients: vec![c2, c1, c0],
        }
    }

    fn coeff(&self, power: usize) -> f64 {
        let n = self.coefficients.len();
        if power < n {
            self.coefficients[n - 1 - power]
        } else {
            0.0
        }
    }

    /// $/MW²h
    pub fn c2(&self) -> f64 {
        self.coeff(2)
    }

    /// $/MWh
    pub fn c1(&self) -> f64 {
        self.coeff(1)
    }

    /// $/h
    pub fn c0(&self) -> f64 {
        self.coeff(0)
    }

    pub fn eval(&self, p_mw: f64) -> f64 {
        (self.c2() * p_mw + self.c1()) * p_mw + self.c0()
    }

    pub fn marginal(&self, p_mw: f64) -> f64 {
        2.0 * self.c2() * p_mw + self.c1()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSystem {
    pub case_name: String,
    pub base_mva: f64,
    pub buses: Vec<Bus>,
    pub generators: Vec<Generator>,
    pub branches: Vec<Branch>,
    /// One entry per generator, same order.
    pub cost_models: Vec<CostModel>,
}

impl PowerSystem {
    /// External id → dense index.
    pub fn bus_lookup(&self) -> HashMap<u32, usize> {
        self.buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect()
    }

    pub fn bus_position(&self, id: u32) -> Option<usize> {
        self.buses.iter().position(|b| b.id == id)
    }

    pub fn slack_indices(&self) -> Vec<usize> {
        self.buses
            .iter()
            .enumerate()
            .filter(|(_, b)| b.bus_type == BusType::Slack)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn count_branches(&self, kind: BranchKind) -> usize {
        self.branches.iter().filter(|b| b.kind == kind).count()
    }

    /// Buses carrying a nonzero active or reactive load.
    pub fn load_count(&self) -> usize {
        self.buses
            .iter()
            .filter(|b| b.pd_mw != 0.0 || b.qd_mvar != 0.0)
            .count()
    }

    pub fn total_load_mw(&self) -> f64 {
        self.buses.iter().map(|b| b.pd_mw).sum()
    }

    pub fn in_service_generators(&self) -> impl Iterator<Item = (usize, &Generator)> {
        self.generators
            .iter()
            .enumerate()
            .filter(|(_, g)| g.in_service)
    }

    /// Restrict the network to `keep` (dense bus indices, ascending).
    ///
    /// Branches with either end outside the set are dropped, as are
    /// generators on dropped buses. Returns the reduced network plus maps from
    /// new to original bus and branch indices.
    pub fn subnetwork(&self, keep: &[usize]) -> (PowerSystem, Vec<usize>, Vec<usize>) {
        let mut new_index = vec![usize::MAX; self.buses.len()];
        let mut buses = Vec::with_capacity(keep.len());
        for (new, &old) in keep.iter().enumerate() {
            new_index[old] = new;
            let mut b = self.buses[old].clone();
            b.index = new;
            buses.push(b);
        }
        let kept_ids: HashMap<u32, usize> = buses.iter().map(|b| (b.id, b.index)).collect();
        let mut branch_map = Vec::new();
        let mut branches = Vec::new();
        for (k, br) in self.branches.iter().enumerate() {
            if kept_ids.contains_key(&br.from_bus) && kept_ids.contains_key(&br.to_bus) {
                branch_map.push(k);
                branches.push(br.clone());
            }
        }
        let mut generators = Vec::new();
        let mut cost_models = Vec::new();
        for (g, cost) in self.generators.iter().zip(&self.cost_models) {
            if kept_ids.contains_key(&g.bus_id) {
                generators.push(g.clone());
                cost_models.push(cost.clone());
            }
        }
        let bus_map = keep.to_vec();
        (
            PowerSystem {
                case_name: self.case_name.clone(),
                base_mva: self.base_mva,
                buses,
                generators,
                branches,
                cost_models,
            },
            bus_map,
            branch_map,
        )
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;

    pub fn bus(id: u32, index: usize, bus_type: BusType, pd: f64, qd: f64) -> Bus {
        Bus {
            id,
            index,
            bus_type,
            pd_mw: pd,
            qd_mvar: qd,
            gs_mw: 0.0,
            bs_mvar: 0.0,
            area: 1,
            vm_pu: 1.0,
            va_deg: 0.0,
            base_kv: 0.0,
            zone: 1,
            vmax_pu: 1.1,
            vmin_pu: 0.9,
        }
    }

    pub fn line(from: u32, to: u32, r: f64, x: f64) -> Branch {
        Branch {
            from_bus: from,
            to_bus: to,
            r_pu: r,
            x_pu: x,
            b_pu: 0.0,
            rating_mva: 0.0,
            rate_b_mva: 0.0,
            rate_c_mva: 0.0,
            tap_ratio: 1.0,
            shift_deg: 0.0,
            in_service: true,
            angmin_deg: -360.0,
            angmax_deg: 360.0,
            kind: BranchKind::Line,
        }
    }

    pub fn generator(bus_id: u32, pg: f64, pmax: f64) -> Generator {
        Generator {
            bus_id,
            pg_mw: pg,
            qg_mvar: 0.0,
            qmax_mvar: 300.0,
            qmin_mvar: -300.0,
            vg_pu: 1.0,
            mbase_mva: 100.0,
            in_service: true,
            pmax_mw: pmax,
            pmin_mw: 0.0,
        }
    }

    /// Slack at bus 1 feeding a 100 MW load at bus 2 through x = 0.1 p.u.
    pub fn two_bus() -> PowerSystem {
        PowerSystem {
            case_name: "two_bus".into(),
            base_mva: 100.0,
            buses: vec![
                bus(1, 0, BusType::Slack, 0.0, 0.0),
                bus(2, 1, BusType::Pq, 100.0, 0.0),
            ],
            generators: vec![generator(1, 0.0, 500.0)],
            branches: vec![line(1, 2, 0.01, 0.1)],
            cost_models: vec![CostModel::quadratic(0.01, 10.0, 0.0)],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cost_coefficients_follow_declared_degree() {
        let linear = CostModel {
            startup: 0.0,
            shutdown: 0.0,
            coefficients: vec![10.0, 5.0],
        };
        assert_eq!(linear.c2(), 0.0);
        assert_eq!(linear.c1(), 10.0);
        assert_eq!(linear.c0(), 5.0);
        assert_eq!(linear.eval(20.0), 205.0);
    }

    #[test]
    fn subnetwork_remaps_indices() {
        let mut net = fixtures::two_bus();
        net.buses.push(fixtures::bus(3, 2, BusType::Pq, 5.0, 0.0));
        net.branches.push(fixtures::line(2, 3, 0.0, 0.2));
        let (sub, bus_map, branch_map) = net.subnetwork(&[1, 2]);
        assert_eq!(sub.buses.len(), 2);
        assert_eq!(sub.buses[0].id, 2);
        assert_eq!(sub.buses[1].index, 1);
        assert_eq!(bus_map, vec![1, 2]);
        assert_eq!(branch_map, vec![1]);
        assert!(sub.generators.is_empty());
    }
}
