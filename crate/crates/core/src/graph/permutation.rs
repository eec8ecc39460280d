use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use super::{GraphError, NodeId};

/// A bijection from a vertex set onto itself.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Permutation {
    map: BTreeMap<NodeId, NodeId>,
}

impl Permutation {
    pub fn identity(domain: impl IntoIterator<Item = NodeId>) -> Self {
        Permutation {
            map: domain.into_iter().map(|v| (v, v)).collect(),
        }
    }

    /// Uniform over all bijections of `domain`.
    pub fn random<R: Rng + ?Sized>(domain: impl IntoIterator<Item = NodeId>, rng: &mut R) -> Self {
        let keys: Vec<NodeId> = domain.into_iter().collect();
        let mut images = keys.clone();
        images.shuffle(rng);
        Permutation {
            map: keys.into_iter().zip(images).collect(),
        }
    }

    /// Validates that `map` is a bijection of its key set onto itself.
    pub fn from_map(map: BTreeMap<NodeId, NodeId>) -> Result<Self, GraphError> {
        let mut images: Vec<NodeId> = map.values().copied().collect();
        images.sort_unstable();
        if !images.iter().copied().eq(map.keys().copied()) {
            return Err(GraphError::NotAPermutation(
                "images are not a rearrangement of the domain".into(),
            ));
        }
        Ok(Permutation { map })
    }

    /// Builds the permutation whose image sequence, taken over the sorted
    /// domain, is `images`. The domain is recovered as the sorted images.
    pub fn from_images(images: Vec<NodeId>) -> Result<Self, GraphError> {
        let mut domain = images.clone();
        domain.sort_unstable();
        if domain.windows(2).any(|w| w[0] == w[1]) {
            return Err(GraphError::NotAPermutation("repeated image".into()));
        }
        Ok(Permutation {
            map: domain.into_iter().zip(images).collect(),
        })
    }

    pub fn apply(&self, v: NodeId) -> Option<NodeId> {
        self.map.get(&v).copied()
    }

    pub fn inverse(&self) -> Permutation {
        Permutation {
            map: self.map.iter().map(|(&k, &v)| (v, k)).collect(),
        }
    }

    pub fn domain(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        self.map.keys().copied()
    }

    /// Images of the domain in ascending domain order.
    pub fn images(&self) -> impl ExactSizeIterator<Item = NodeId> + '_ {
        self.map.values().copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Whether the domain is exactly the given ascending vertex sequence.
    pub fn has_domain(&self, sorted: impl ExactSizeIterator<Item = NodeId>) -> bool {
        sorted.len() == self.map.len() && sorted.eq(self.map.keys().copied())
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().all(|(k, v)| k == v)
    }
}
