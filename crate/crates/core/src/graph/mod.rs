//! The shared graph, the secret Hamiltonian cycle and vertex permutations.
//!
//! Everything here is a pure function of its inputs plus an explicit random
//! source, so replicas that apply the same updates in the same order end up
//! with byte-identical state.

mod codec;
mod cycle;
mod ops;
mod permutation;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use codec::{
    decode_cycle, decode_graph, decode_permutation, encode_cycle, encode_graph, encode_permutation, DecodeError,
    Reader, ENCODING_VERSION,
};
pub use cycle::HamiltonianCycle;
pub use ops::{
    apply_permutation, assign_new_id, build_initial_graph, build_initial_graph_with_cycle, is_hamiltonian_cycle,
    locate_insertion_pair, neighbor_set_for_insert, neighbor_set_with_pair, splice_delete, splice_insert,
    NEIGHBOR_SET_RETRIES,
};
pub use permutation::Permutation;

/// Append-style writers behind the canonical encodings, for composing
/// larger messages without intermediate buffers.
pub(crate) mod codec_write {
    pub(crate) use super::codec::{write_cycle as cycle, write_graph as graph, write_permutation as permutation};
}

/// Vertex index of the shared graph; doubles as the node's network identity.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl From<u32> for NodeId {
    fn from(v: u32) -> Self {
        NodeId(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("invalid initialization parameters: {0}")]
    InvalidInitialization(String),
    #[error("permutation domain mismatch")]
    PermutationDomainMismatch,
    #[error("not a permutation: {0}")]
    NotAPermutation(String),
    #[error("malformed cycle: {0}")]
    MalformedCycle(String),
    #[error("self-loop on vertex {0}")]
    SelfLoop(NodeId),
    #[error("edge endpoint {0} is not a vertex")]
    DanglingEdge(NodeId),
    #[error("cannot construct unambiguous neighbor set")]
    NeighborSetUnsatisfiable,
    #[error("ambiguous or invalid insertion broadcast: {0} cycle-adjacent pairs")]
    AmbiguousInsertion(usize),
    #[error("invalid splice: {0}")]
    InvalidSplice(String),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("below minimum order: {0} vertices")]
    BelowMinimumOrder(usize),
}

/// Undirected simple graph over [`NodeId`]s.
///
/// Stored as a sorted adjacency map, which makes iteration order (and so the
/// canonical encoding) independent of insertion history.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Graph {
    adjacency: BTreeMap<NodeId, BTreeSet<NodeId>>,
    edge_count: usize,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a graph, rejecting self-loops and edges whose endpoints are
    /// not listed as vertices. Duplicate edges (in either orientation)
    /// collapse.
    pub fn from_parts(
        vertices: impl IntoIterator<Item = NodeId>,
        edges: impl IntoIterator<Item = (NodeId, NodeId)>,
    ) -> Result<Self, GraphError> {
        let mut g = Graph::new();
        for v in vertices {
            g.add_vertex(v);
        }
        for (a, b) in edges {
            g.add_edge(a, b)?;
        }
        Ok(g)
    }

    /// Cycle graph following `order`, closing back to the first element.
    pub fn cycle_graph(order: &[NodeId]) -> Result<Self, GraphError> {
        let n = order.len();
        Graph::from_parts(order.iter().copied(), (0..n).map(|i| (order[i], order[(i + 1) % n])))
    }

    pub fn add_vertex(&mut self, v: NodeId) -> bool {
        if self.adjacency.contains_key(&v) {
            return false;
        }
        self.adjacency.insert(v, BTreeSet::new());
        true
    }

    /// Returns `Ok(true)` if the edge was new.
    pub fn add_edge(&mut self, a: NodeId, b: NodeId) -> Result<bool, GraphError> {
        if a == b {
            return Err(GraphError::SelfLoop(a));
        }
        for v in [a, b] {
            if !self.adjacency.contains_key(&v) {
                return Err(GraphError::DanglingEdge(v));
            }
        }
        let fresh = self.adjacency.get_mut(&a).unwrap().insert(b);
        self.adjacency.get_mut(&b).unwrap().insert(a);
        if fresh {
            self.edge_count += 1;
        }
        Ok(fresh)
    }

    /// Removes `v` and every incident edge.
    pub fn remove_vertex(&mut self, v: NodeId) -> bool {
        let Some(neighbors) = self.adjacency.remove(&v) else {
            return false;
        };
        for u in &neighbors {
            if let Some(ns) = self.adjacency.get_mut(u) {
                ns.remove(&v);
            }
        }
        self.edge_count -= neighbors.len();
        true
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.adjacency.contains_key(&v)
    }

    pub fn has_edge(&self, a: NodeId, b: NodeId) -> bool {
        self.adjacency.get(&a).is_some_and(|ns| ns.contains(&b))
    }

    /// Number of vertices.
    pub fn order(&self) -> usize {
        self.adjacency.len()
    }

    /// Number of edges.
    pub fn size(&self) -> usize {
        self.edge_count
    }

    pub fn degree(&self, v: NodeId) -> usize {
        self.adjacency.get(&v).map_or(0, BTreeSet::len)
    }

    pub fn vertices(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        self.adjacency.keys().copied()
    }

    pub fn vertex_set(&self) -> BTreeSet<NodeId> {
        self.adjacency.keys().copied().collect()
    }

    pub fn neighbors(&self, v: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adjacency.get(&v).into_iter().flatten().copied()
    }

    /// Edges in ascending order, smaller endpoint first.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.adjacency
            .iter()
            .flat_map(|(&u, ns)| ns.range(u..).map(move |&v| (u, v)))
    }

    /// Relabels every vertex and edge endpoint through `p`.
    pub fn permuted(&self, p: &Permutation) -> Result<Graph, GraphError> {
        if !p.has_domain(self.vertices()) {
            return Err(GraphError::PermutationDomainMismatch);
        }
        let mut out = Graph::new();
        for v in self.vertices() {
            out.add_vertex(p.apply(v).expect("domain checked"));
        }
        for (a, b) in self.edges() {
            out.add_edge(p.apply(a).unwrap(), p.apply(b).unwrap())?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().copied().map(NodeId).collect()
    }

    #[test]
    fn edges_are_unordered() {
        let mut g = Graph::from_parts(ids(&[0, 1, 2]), []).unwrap();
        assert!(g.add_edge(NodeId(0), NodeId(1)).unwrap());
        assert!(!g.add_edge(NodeId(1), NodeId(0)).unwrap());
        assert_eq!(g.size(), 1);
        assert!(g.has_edge(NodeId(1), NodeId(0)));
    }

    #[test]
    fn rejects_self_loops_and_dangling_edges() {
        let mut g = Graph::from_parts(ids(&[0, 1]), []).unwrap();
        assert_eq!(g.add_edge(NodeId(1), NodeId(1)), Err(GraphError::SelfLoop(NodeId(1))));
        assert_eq!(
            g.add_edge(NodeId(1), NodeId(5)),
            Err(GraphError::DanglingEdge(NodeId(5)))
        );
    }

    #[test]
    fn remove_vertex_drops_incident_edges() {
        let mut g = Graph::cycle_graph(&ids(&[0, 1, 2, 3])).unwrap();
        assert_eq!(g.size(), 4);
        assert!(g.remove_vertex(NodeId(2)));
        assert_eq!(g.size(), 2);
        assert_eq!(
            g.edges().collect::<Vec<_>>(),
            vec![(NodeId(0), NodeId(1)), (NodeId(0), NodeId(3))]
        );
        assert!(!g.remove_vertex(NodeId(2)));
    }
}
