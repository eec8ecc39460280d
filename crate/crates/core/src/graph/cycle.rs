use std::collections::BTreeSet;
use std::fmt;

use super::{GraphError, NodeId, Permutation};

/// A cyclic vertex ordering, always held in canonical form: rotated so the
/// smallest id comes first and oriented so the second element is the
/// smaller of the first element's two cycle neighbors.
///
/// Two orderings that describe the same undirected cycle therefore compare
/// (and encode) equal.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct HamiltonianCycle {
    order: Vec<NodeId>,
}

impl HamiltonianCycle {
    /// Accepts any rotation or reflection of a cycle of at least three
    /// distinct vertices.
    pub fn new(order: Vec<NodeId>) -> Result<Self, GraphError> {
        if order.len() < 3 {
            return Err(GraphError::MalformedCycle(format!(
                "{} vertices, need at least 3",
                order.len()
            )));
        }
        let distinct: BTreeSet<_> = order.iter().collect();
        if distinct.len() != order.len() {
            return Err(GraphError::MalformedCycle("repeated vertex".into()));
        }
        Ok(HamiltonianCycle {
            order: canonicalize(order),
        })
    }

    pub fn from_ids(ids: &[u32]) -> Result<Self, GraphError> {
        Self::new(ids.iter().copied().map(NodeId).collect())
    }

    pub fn as_slice(&self) -> &[NodeId] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.order.contains(&v)
    }

    fn position(&self, v: NodeId) -> Option<usize> {
        self.order.iter().position(|&x| x == v)
    }

    /// The two cycle neighbors of `v`: (predecessor, successor) in canonical
    /// traversal order.
    pub fn neighbors(&self, v: NodeId) -> Option<(NodeId, NodeId)> {
        let n = self.order.len();
        let i = self.position(v)?;
        Some((self.order[(i + n - 1) % n], self.order[(i + 1) % n]))
    }

    pub fn are_adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.neighbors(a).is_some_and(|(p, s)| p == b || s == b)
    }

    /// Consecutive pairs including the closing one, in traversal order.
    pub fn edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        let n = self.order.len();
        (0..n).map(move |i| (self.order[i], self.order[(i + 1) % n]))
    }

    /// Walks the cycle starting at `start` in the direction of its neighbor
    /// `toward`. Useful for printing a cycle the way a trace recorded it.
    pub fn walk_from(&self, start: NodeId, toward: NodeId) -> Option<Vec<NodeId>> {
        let n = self.order.len();
        let i = self.position(start)?;
        let forward = if self.order[(i + 1) % n] == toward {
            true
        } else if self.order[(i + n - 1) % n] == toward {
            false
        } else {
            return None;
        };
        Some(
            (0..n)
                .map(|k| {
                    let j = if forward { i + k } else { i + n - k };
                    self.order[j % n]
                })
                .collect(),
        )
    }

    /// Inserts `v` between the adjacent pair `(a, b)`.
    pub(crate) fn spliced_in(&self, a: NodeId, b: NodeId, v: NodeId) -> Result<Self, GraphError> {
        if self.contains(v) {
            return Err(GraphError::InvalidSplice(format!("{v} already on the cycle")));
        }
        let n = self.order.len();
        let i = self
            .position(a)
            .ok_or_else(|| GraphError::InvalidSplice(format!("{a} not on the cycle")))?;
        let mut order = self.order.clone();
        if self.order[(i + 1) % n] == b {
            order.insert(i + 1, v);
        } else if self.order[(i + n - 1) % n] == b {
            order.insert(i, v);
        } else {
            return Err(GraphError::InvalidSplice(format!("{a} and {b} are not cycle-adjacent")));
        }
        Self::new(order)
    }

    pub(crate) fn spliced_out(&self, v: NodeId) -> Result<Self, GraphError> {
        let order: Vec<_> = self.order.iter().copied().filter(|&x| x != v).collect();
        if order.len() == self.order.len() {
            return Err(GraphError::UnknownNode(v));
        }
        Self::new(order)
    }

    pub(crate) fn relabeled(&self, p: &Permutation) -> Result<Self, GraphError> {
        let order = self
            .order
            .iter()
            .map(|&v| p.apply(v).ok_or(GraphError::PermutationDomainMismatch))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(order)
    }
}

fn canonicalize(mut order: Vec<NodeId>) -> Vec<NodeId> {
    let n = order.len();
    let min_at = order
        .iter()
        .enumerate()
        .min_by_key(|&(_, v)| *v)
        .map(|(i, _)| i)
        .unwrap_or(0);
    order.rotate_left(min_at);
    if n > 2 && order[n - 1] < order[1] {
        order[1..].reverse();
    }
    order
}

/// Comma-joined canonical sequence, e.g. `0,8,3,9`.
impl fmt::Display for HamiltonianCycle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.order.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}
