use rand::Rng;
use thiserror::Error;

use crate::graph::{
    assign_new_id, neighbor_set_for_insert, neighbor_set_with_pair, Graph, GraphError, HamiltonianCycle, NodeId,
};
use crate::zkp::graph_digest;
use crate::SimTime;

use super::message::{NeighborSetBroadcast, ProtocolMessage};
use super::state::{NodeState, UpdateKind, UpdateRecord};
use super::{ProtocolConfig, ProtocolError};

/// What the authenticator knows when it decides.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsertRequest {
    /// Id broadcast in the announcement the acks answered.
    pub announced: NodeId,
    pub acks: usize,
    /// Forces the splice position; drawn at random when `None`.
    pub pair: Option<(NodeId, NodeId)>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum InsertAbort {
    #[error("authenticator is not online")]
    NotOnline,
    #[error("quorum not met: {acks} acks, {needed} needed")]
    QuorumNotMet { acks: usize, needed: usize },
    #[error("announced id {announced} is no longer the next id ({assigned})")]
    StaleAnnouncement { announced: NodeId, assigned: NodeId },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// The three outbound messages of a committed insertion.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InsertionCommit {
    pub broadcast: NeighborSetBroadcast,
    /// Sent to the new node in the open.
    pub graph: Graph,
    /// Sent to the new node over the secure channel.
    pub cycle: HamiltonianCycle,
}

impl InsertionCommit {
    pub fn new_id(&self) -> NodeId {
        self.broadcast.id
    }

    pub fn messages(&self) -> [ProtocolMessage; 3] {
        [
            ProtocolMessage::NeighborSetBroadcast(self.broadcast.clone()),
            ProtocolMessage::GraphTransfer {
                graph: self.graph.clone(),
            },
            ProtocolMessage::CycleTransfer {
                cycle: self.cycle.clone(),
            },
        ]
    }

    /// State of the newcomer once both transfers arrive.
    pub fn new_node(&self) -> NodeState {
        NodeState::joined(
            self.broadcast.id,
            self.graph.clone(),
            self.cycle.clone(),
            self.broadcast.stage,
            self.broadcast.timestamp,
        )
        .expect("authenticator produced a consistent state")
    }
}

impl NeighborSetBroadcast {
    pub fn record(&self) -> UpdateRecord {
        UpdateRecord {
            stage: self.stage,
            timestamp: self.timestamp,
            base: self.base,
            kind: UpdateKind::Insertion {
                id: self.id,
                neighbors: self.neighbors.clone(),
                authenticator: self.authenticator,
            },
        }
    }
}

/// Authenticator side of an insertion. Below quorum nothing changes.
/// Otherwise the newcomer gets the smallest free id and a neighbor set, the
/// authenticator applies the update to its own replica and returns what to
/// send. Acting as authenticator counts as the node's proof of life.
pub fn authenticator_insert<R: Rng + ?Sized>(
    a: &mut NodeState,
    req: InsertRequest,
    cfg: &ProtocolConfig,
    now: SimTime,
    rng: &mut R,
) -> Result<InsertionCommit, InsertAbort> {
    if !a.is_online() {
        return Err(InsertAbort::NotOnline);
    }
    let n = a.graph().order();
    if !cfg.quorum.met(req.acks, n) {
        return Err(InsertAbort::QuorumNotMet {
            acks: req.acks,
            needed: cfg.quorum.needed(n),
        });
    }
    let id = assign_new_id(a.graph());
    if id != req.announced {
        return Err(InsertAbort::StaleAnnouncement {
            announced: req.announced,
            assigned: id,
        });
    }
    let cycle = a.cycle().expect("online node holds the cycle");
    // Small graphs cannot always host the configured degree; fall back
    // towards the bare splice pair.
    let mut neighbors = Err(GraphError::NeighborSetUnsatisfiable);
    for degree in (2..=cfg.insert_degree).rev() {
        neighbors = match req.pair {
            Some(pair) => neighbor_set_with_pair(a.graph(), cycle, pair, degree, rng),
            None => neighbor_set_for_insert(a.graph(), cycle, degree, rng),
        };
        if !matches!(neighbors, Err(GraphError::NeighborSetUnsatisfiable)) {
            break;
        }
    }
    let broadcast = NeighborSetBroadcast {
        stage: a.stage() + 1,
        base: graph_digest(a.graph()),
        timestamp: now,
        id,
        neighbors: neighbors?,
        authenticator: a.id(),
    };
    a.apply_record(&broadcast.record(), cfg, now).map_err(|e| match e {
        ProtocolError::Graph(g) => InsertAbort::Graph(g),
        other => unreachable!("fresh update on own replica: {other}"),
    })?;
    a.reset_clock(now);
    Ok(InsertionCommit {
        broadcast,
        graph: a.graph().clone(),
        cycle: a.cycle().unwrap().clone(),
    })
}

/// Replica side: locate the pair, splice, advance the stage and queue the
/// record. `Ok(false)` means the update was already applied.
pub fn apply_insertion_update(
    s: &mut NodeState,
    b: &NeighborSetBroadcast,
    cfg: &ProtocolConfig,
    now: SimTime,
) -> Result<bool, ProtocolError> {
    if !s.is_online() {
        return Err(ProtocolError::NotOnline);
    }
    let rec = b.record();
    if s.graph().contains(b.id) && !s.fifo().contains(&rec) {
        return Err(ProtocolError::IdAlreadyAssigned(b.id));
    }
    s.apply_record(&rec, cfg, now)
}
