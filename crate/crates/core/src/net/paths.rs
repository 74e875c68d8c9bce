//! Path computation over the powered-on part of a [`Topology`].
//!
//! Hosts terminate paths: they may be the source or the destination but are
//! never used as transit nodes.

use std::cmp::Ordering;
use std::collections::{BTreeSet, BinaryHeap};

use thiserror::Error;

use super::topology::{DirectedEdge, NodeId, Topology};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PathError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("no powered-on path from {0} to {1}")]
    NoPath(NodeId, NodeId),
    #[error("negative edge weight on {0} -> {1}")]
    NegativeWeight(NodeId, NodeId),
}

struct Label {
    dist: f64,
    path: Vec<NodeId>,
}

impl PartialEq for Label {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Label {}

impl PartialOrd for Label {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Label {
    // Reversed so BinaryHeap pops the cheapest, then lexicographically smallest path.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .dist
            .total_cmp(&self.dist)
            .then_with(|| other.path.cmp(&self.path))
    }
}

/// Minimum-weight path using the link weights stored in the topology.
pub fn shortest_path(topo: &Topology, src: NodeId, dst: NodeId) -> Result<Vec<NodeId>, PathError> {
    shortest_path_by(topo, src, dst, |e| e.weight())
}

/// Dijkstra over usable links with a caller-supplied directed edge cost.
///
/// Among equal-cost paths the lexicographically smallest node sequence wins.
pub fn shortest_path_by<F>(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    mut weight: F,
) -> Result<Vec<NodeId>, PathError>
where
    F: FnMut(&DirectedEdge<'_>) -> f64,
{
    for n in [src, dst] {
        if !topo.contains(n) {
            return Err(PathError::UnknownNode(n));
        }
    }
    let mut settled = BTreeSet::new();
    let mut heap = BinaryHeap::new();
    heap.push(Label { dist: 0.0, path: vec![src] });
    while let Some(Label { dist, path }) = heap.pop() {
        let node = *path.last().expect("labels are never empty");
        if !settled.insert(node) {
            continue;
        }
        if node == dst {
            return Ok(path);
        }
        if !node.is_switch() && node != src {
            continue;
        }
        for edge in topo.edges_from(node) {
            if settled.contains(&edge.to) {
                continue;
            }
            let w = weight(&edge);
            if w < 0.0 {
                return Err(PathError::NegativeWeight(edge.from, edge.to));
            }
            let mut next = path.clone();
            next.push(edge.to);
            heap.push(Label { dist: dist + w, path: next });
        }
    }
    Err(PathError::NoPath(src, dst))
}

/// Every loop-free path from `src` to `dst`, in lexicographic order.
///
/// Exhaustive DFS; meant for desk-scale topologies.
pub fn all_simple_paths(topo: &Topology, src: NodeId, dst: NodeId) -> Vec<Vec<NodeId>> {
    let mut out = Vec::new();
    if !topo.contains(src) || !topo.contains(dst) {
        return out;
    }
    if src == dst {
        out.push(vec![src]);
        return out;
    }
    let mut stack = vec![src];
    dfs(topo, dst, &mut stack, &mut out);
    out
}

fn dfs(topo: &Topology, dst: NodeId, stack: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
    let node = *stack.last().unwrap();
    if stack.len() > 1 && !node.is_switch() {
        return;
    }
    for edge in topo.edges_from(node) {
        if stack.contains(&edge.to) {
            continue;
        }
        stack.push(edge.to);
        if edge.to == dst {
            out.push(stack.clone());
        } else {
            dfs(topo, dst, stack, out);
        }
        stack.pop();
    }
}

/// Sum of directed edge costs along `path`, or `None` if a hop is not usable.
pub fn path_cost_by<F>(topo: &Topology, path: &[NodeId], mut weight: F) -> Option<f64>
where
    F: FnMut(&DirectedEdge<'_>) -> f64,
{
    let mut total = 0.0;
    for pair in path.windows(2) {
        let edge = topo.edge_between(pair[0], pair[1])?;
        total += weight(&edge);
    }
    Some(total)
}

pub fn path_cost(topo: &Topology, path: &[NodeId]) -> Option<f64> {
    path_cost_by(topo, path, |e| e.weight())
}
