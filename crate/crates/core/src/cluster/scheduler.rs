//! Deterministic pod placement.

use crate::descriptors::ResourceSpec;

/// What the scheduler sees of one node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeView<'a> {
    pub name: &'a str,
    pub allocatable: ResourceSpec,
    pub used: ResourceSpec,
}

impl NodeView<'_> {
    pub fn free(&self) -> ResourceSpec {
        self.allocatable.saturating_sub(self.used)
    }

    pub fn fits(&self, requests: &ResourceSpec) -> bool {
        self.used
            .saturating_add(*requests)
            .fits_within(&self.allocatable)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScheduleError {
    #[error("node {0} selected but does not exist")]
    UnknownNode(String),
    #[error("node {node} lacks capacity: requests {requests}, free {free}")]
    SelectedNodeFull {
        node: String,
        requests: ResourceSpec,
        free: ResourceSpec,
    },
    #[error("no node can host requests {0}")]
    NoFeasibleNode(ResourceSpec),
}

/// With a selector the named node is used iff the pod fits there. Otherwise
/// the feasible node with the most free cpu wins, ties going to the
/// lexicographically smaller name. The result does not depend on the order
/// of `nodes`.
pub fn pick_node<'a>(
    nodes: &[NodeView<'a>],
    requests: &ResourceSpec,
    selector: Option<&str>,
) -> Result<&'a str, ScheduleError> {
    if let Some(sel) = selector {
        let node = nodes
            .iter()
            .find(|n| n.name == sel)
            .ok_or_else(|| ScheduleError::UnknownNode(sel.to_string()))?;
        return if node.fits(requests) {
            Ok(node.name)
        } else {
            Err(ScheduleError::SelectedNodeFull {
                node: sel.to_string(),
                requests: *requests,
                free: node.free(),
            })
        };
    }
    nodes
        .iter()
        .filter(|n| n.fits(requests))
        .max_by(|a, b| {
            a.free()
                .cpu_millicores
                .cmp(&b.free().cpu_millicores)
                .then_with(|| b.name.cmp(a.name))
        })
        .map(|n| n.name)
        .ok_or(ScheduleError::NoFeasibleNode(*requests))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn view(name: &str, alloc_cpu: u64, used_cpu: u64) -> NodeView<'_> {
        NodeView {
            name,
            allocatable: ResourceSpec::new(alloc_cpu, 3584, 40960),
            used: ResourceSpec::cpu(used_cpu),
        }
    }

    #[test]
    fn selector_honoured() {
        let nodes = [view("kw1", 2600, 0), view("kw2", 3600, 0)];
        assert_eq!(
            pick_node(&nodes, &ResourceSpec::cpu(1800), Some("kw2")),
            Ok("kw2")
        );
        assert!(matches!(
            pick_node(&nodes, &ResourceSpec::cpu(3700), Some("kw2")),
            Err(ScheduleError::SelectedNodeFull { .. })
        ));
        assert!(matches!(
            pick_node(&nodes, &ResourceSpec::cpu(1), Some("kw9")),
            Err(ScheduleError::UnknownNode(_))
        ));
    }

    #[test]
    fn most_free_cpu_wins() {
        // kw1 free 2900, kw2 free 3600
        let nodes = [view("kw1", 2900, 0), view("kw2", 3600, 0)];
        assert_eq!(pick_node(&nodes, &ResourceSpec::cpu(100), None), Ok("kw2"));
    }

    #[test]
    fn tie_goes_to_smaller_name() {
        let nodes = [view("kw2", 3000, 0), view("kw1", 3000, 0)];
        assert_eq!(pick_node(&nodes, &ResourceSpec::cpu(100), None), Ok("kw1"));
    }

    #[test]
    fn infeasible_everywhere() {
        let nodes = [view("kw1", 1000, 900), view("kw2", 1000, 0)];
        assert_eq!(
            pick_node(&nodes, &ResourceSpec::cpu(1001), None),
            Err(ScheduleError::NoFeasibleNode(ResourceSpec::cpu(1001)))
        );
        // most free cpu but memory does not fit
        let mut big = view("kw2", 4000, 0);
        big.used.memory_mib = 3584;
        let nodes = [view("kw1", 1000, 0), big];
        assert_eq!(
            pick_node(&nodes, &ResourceSpec::new(10, 1, 0), None),
            Ok("kw1")
        );
    }

    proptest! {
        #[test]
        fn order_independent(
            specs in proptest::collection::vec((0u64..4000, 0u64..4000), 1..6),
            req in 0u64..3000,
            rot in 0usize..6,
        ) {
            let names: Vec<String> = (0..specs.len()).map(|i| format!("n{i}")).collect();
            let nodes: Vec<NodeView> = specs.iter().zip(&names)
                .map(|((a, u), n)| view(n, *a, (*u).min(*a)))
                .collect();
            let mut rotated = nodes.clone();
            rotated.rotate_left(rot % nodes.len());
            rotated.reverse();
            let r = ResourceSpec::cpu(req);
            prop_assert_eq!(pick_node(&nodes, &r, None), pick_node(&rotated, &r, None));
            if let Ok(name) = pick_node(&nodes, &r, None) {
                let chosen = nodes.iter().find(|n| n.name == name).unwrap();
                prop_assert!(chosen.fits(&r));
                for n in nodes.iter().filter(|n| n.fits(&r)) {
                    prop_assert!(n.free().cpu_millicores <= chosen.free().cpu_millicores);
                }
            } else {
                prop_assert!(nodes.iter().all(|n| !n.fits(&r)));
            }
        }
    }
}
