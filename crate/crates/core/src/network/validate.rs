use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{connected_components, BusType, PowerSystem};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "element", content = "index", rename_all = "snake_case")]
pub enum ElementRef {
    System,
    Bus(usize),
    Generator(usize),
    Branch(usize),
    Component(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub element: ElementRef,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn len(&self) -> usize {
        self.violations.len()
    }

    fn push(&mut self, element: ElementRef, message: String) {
        self.violations.push(Violation { element, message });
    }

    pub fn messages(&self) -> Vec<&str> {
        self.violations.iter().map(|v| v.message.as_str()).collect()
    }
}

/// Lists every invariant violation of `net`; an empty report means the
/// network is well formed.
pub fn validate_network(net: &PowerSystem) -> ValidationReport {
    let mut report = ValidationReport::default();

    if !(net.base_mva > 0.0) {
        report.push(
            ElementRef::System,
            format!("non-positive base MVA {}", net.base_mva),
        );
    }

    let mut seen = HashSet::new();
    for (i, bus) in net.buses.iter().enumerate() {
        if !seen.insert(bus.id) {
            report.push(ElementRef::Bus(i), format!("duplicate bus id {}, bus {i}", bus.id));
        }
        if bus.index != i {
            report.push(
                ElementRef::Bus(i),
                format!("bus {i} carries stale index {}", bus.index),
            );
        }
        if !(bus.vmin_pu > 0.0 && bus.vmin_pu <= bus.vmax_pu) {
            report.push(
                ElementRef::Bus(i),
                format!(
                    "invalid voltage limits [{}, {}], bus {i}",
                    bus.vmin_pu, bus.vmax_pu
                ),
            );
        }
    }

    for (i, g) in net.generators.iter().enumerate() {
        if !seen.contains(&g.bus_id) {
            report.push(
                ElementRef::Generator(i),
                format!("generator {i} references missing bus {}", g.bus_id),
            );
        }
        if g.pmin_mw > g.pmax_mw {
            report.push(
                ElementRef::Generator(i),
                format!("pmin above pmax, generator {i}"),
            );
        }
        if g.qmin_mvar > g.qmax_mvar {
            report.push(
                ElementRef::Generator(i),
                format!("qmin above qmax, generator {i}"),
            );
        }
    }

    if net.cost_models.len() != net.generators.len() {
        report.push(
            ElementRef::System,
            format!(
                "{} cost models for {} generators",
                net.cost_models.len(),
                net.generators.len()
            ),
        );
    }
    for (i, c) in net.cost_models.iter().enumerate() {
        if c.coefficients.len() > 3 {
            report.push(
                ElementRef::Generator(i),
                format!("cost polynomial above degree 2, generator {i}"),
            );
        }
        if c.c2() < 0.0 {
            report.push(
                ElementRef::Generator(i),
                format!("negative quadratic cost coefficient, generator {i}"),
            );
        }
    }

    let mut dangling = false;
    for (i, br) in net.branches.iter().enumerate() {
        for end in [br.from_bus, br.to_bus] {
            if !seen.contains(&end) {
                dangling = true;
                report.push(
                    ElementRef::Branch(i),
                    format!("branch {i} references missing bus {end}"),
                );
            }
        }
        if br.x_pu == 0.0 {
            report.push(
                ElementRef::Branch(i),
                format!("zero series reactance, branch {i}"),
            );
        }
        if !(br.tap_ratio > 0.0) {
            report.push(
                ElementRef::Branch(i),
                format!("non-positive tap ratio, branch {i}"),
            );
        }
    }

    if !dangling {
        let components = connected_components(net);
        let gen_buses: HashSet<u32> = net
            .generators
            .iter()
            .filter(|g| g.in_service)
            .map(|g| g.bus_id)
            .collect();
        for (c, members) in components.groups.iter().enumerate() {
            let has_gen = members.iter().any(|&b| gen_buses.contains(&net.buses[b].id));
            if !has_gen {
                continue;
            }
            let slacks = members
                .iter()
                .filter(|&&b| net.buses[b].bus_type == BusType::Slack)
                .count();
            match slacks {
                0 => report.push(ElementRef::Component(c), format!("no slack in component {c}")),
                1 => {}
                n => report.push(
                    ElementRef::Component(c),
                    format!("{n} slack buses in component {c}"),
                ),
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{generator, two_bus};

    #[test]
    fn well_formed_two_bus() {
        assert!(validate_network(&two_bus()).is_empty());
    }

    #[test]
    fn dangling_generator_is_reported() {
        let mut net = two_bus();
        net.generators.push(generator(9, 0.0, 10.0));
        net.cost_models.push(net.cost_models[0].clone());
        let report = validate_network(&net);
        assert_eq!(report.messages(), vec!["generator 1 references missing bus 9"]);
    }

    #[test]
    fn two_slacks_in_one_component() {
        let mut net = two_bus();
        net.buses[1].bus_type = BusType::Slack;
        let report = validate_network(&net);
        assert_eq!(report.messages(), vec!["2 slack buses in component 0"]);
    }

    #[test]
    fn inverted_voltage_limits() {
        let mut net = two_bus();
        net.buses[0].vmin_pu = 1.2;
        assert_eq!(validate_network(&net).len(), 1);
    }
}
