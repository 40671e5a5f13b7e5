use std::collections::VecDeque;

use super::PowerSystem;

/// Partition of dense bus indices into electrically connected groups.
///
/// Groups are ordered by their smallest bus index and each group is sorted,
/// so component numbering is stable for a given network.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub component_of: Vec<usize>,
    pub groups: Vec<Vec<usize>>,
}

impl Components {
    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Only in-service branches conduct.
pub fn connected_components(net: &PowerSystem) -> Components {
    let n = net.buses.len();
    let lookup = net.bus_lookup();
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n];
    for br in net.branches.iter().filter(|b| b.in_service) {
        if let (Some(&f), Some(&t)) = (lookup.get(&br.from_bus), lookup.get(&br.to_bus)) {
            adjacency[f].push(t);
            adjacency[t].push(f);
        }
    }

    let mut component_of = vec![usize::MAX; n];
    let mut groups = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..n {
        if component_of[start] != usize::MAX {
            continue;
        }
        let id = groups.len();
        let mut members = vec![start];
        component_of[start] = id;
        queue.push_back(start);
        while let Some(u) = queue.pop_front() {
            for &v in &adjacency[u] {
                if component_of[v] == usize::MAX {
                    component_of[v] = id;
                    members.push(v);
                    queue.push_back(v);
                }
            }
        }
        members.sort_unstable();
        groups.push(members);
    }
    Components {
        component_of,
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::fixtures::{bus, two_bus};
    use crate::network::BusType;

    #[test]
    fn two_bus_is_one_component() {
        let c = connected_components(&two_bus());
        assert_eq!(c.groups, vec![vec![0, 1]]);
    }

    #[test]
    fn no_branches_gives_singletons() {
        let mut net = two_bus();
        net.branches.clear();
        net.buses.push(bus(3, 2, BusType::Pq, 0.0, 0.0));
        let c = connected_components(&net);
        assert_eq!(c.groups, vec![vec![0], vec![1], vec![2]]);
    }

    #[test]
    fn out_of_service_branch_does_not_conduct() {
        let mut net = two_bus();
        net.branches[0].in_service = false;
        assert_eq!(connected_components(&net).len(), 2);
    }
}
