use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::RngCore;

use crate::graph::{
    is_hamiltonian_cycle, locate_insertion_pair, splice_delete, splice_insert, Graph, HamiltonianCycle, NodeId,
};
use crate::zkp::{graph_digest, Digest, HonestProver, ZkpError};
use crate::SimTime;

use super::message::{AccessGrant, AccessRequest, WindowId};
use super::{ProtocolConfig, ProtocolError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeStatus {
    Online,
    Offline,
    Deleted,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum UpdateKind {
    Insertion {
        id: NodeId,
        neighbors: BTreeSet<NodeId>,
        authenticator: NodeId,
    },
    Deletion {
        id: NodeId,
    },
    PolSummary {
        window: WindowId,
        alive: BTreeSet<NodeId>,
    },
}

/// One entry of the catch-up queue.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UpdateRecord {
    /// Stage reached by a graph update; the current stage for a summary.
    pub stage: u64,
    pub timestamp: SimTime,
    /// Digest of the graph the record was applied to.
    pub base: Digest,
    pub kind: UpdateKind,
}

impl UpdateRecord {
    pub fn changes_graph(&self) -> bool {
        !matches!(self.kind, UpdateKind::PolSummary { .. })
    }
}

/// One node's replica of the shared state, plus its own clocks.
#[derive(Clone, Debug)]
pub struct NodeState {
    id: NodeId,
    status: NodeStatus,
    graph: Graph,
    cycle: Option<HamiltonianCycle>,
    stage: u64,
    last_seen_stage: u64,
    fifo: VecDeque<UpdateRecord>,
    /// Own last proof of life as recorded by the network.
    last_proof: SimTime,
    /// Origin of the proof-of-life clock. Put back on an aborted window
    /// without counting as a proof.
    clock_origin: SimTime,
    online_since: SimTime,
    offline_since: Option<SimTime>,
    /// Latest proof seen per vertex.
    liveness: BTreeMap<NodeId, SimTime>,
    next_window: u32,
}

impl NodeState {
    /// A founding member, handed the initial graph and cycle.
    pub fn from_dealer(id: NodeId, graph: Graph, cycle: HamiltonianCycle, now: SimTime) -> Result<Self, ProtocolError> {
        Self::joined(id, graph, cycle, 0, now)
    }

    /// A node that just received the graph and cycle transfers at `stage`.
    pub fn joined(
        id: NodeId,
        graph: Graph,
        cycle: HamiltonianCycle,
        stage: u64,
        now: SimTime,
    ) -> Result<Self, ProtocolError> {
        if !graph.contains(id) {
            return Err(ProtocolError::NotAMember(id));
        }
        if !is_hamiltonian_cycle(&graph, &cycle) {
            return Err(ProtocolError::InvalidCycle);
        }
        Ok(NodeState {
            id,
            status: NodeStatus::Online,
            graph,
            cycle: Some(cycle),
            stage,
            last_seen_stage: stage,
            fifo: VecDeque::new(),
            last_proof: now,
            clock_origin: now,
            online_since: now,
            offline_since: None,
            liveness: BTreeMap::new(),
            next_window: 0,
        })
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn status(&self) -> NodeStatus {
        self.status
    }

    pub fn is_online(&self) -> bool {
        self.status == NodeStatus::Online
    }

    pub fn graph(&self) -> &Graph {
        &self.graph
    }

    pub fn cycle(&self) -> Option<&HamiltonianCycle> {
        self.cycle.as_ref()
    }

    pub fn stage(&self) -> u64 {
        self.stage
    }

    pub fn last_seen_stage(&self) -> u64 {
        self.last_seen_stage
    }

    pub fn fifo(&self) -> &VecDeque<UpdateRecord> {
        &self.fifo
    }

    pub fn last_proof(&self) -> SimTime {
        self.last_proof
    }

    pub fn online_since(&self) -> SimTime {
        self.online_since
    }

    pub fn offline_since(&self) -> Option<SimTime> {
        self.offline_since
    }

    /// Time on the proof-of-life clock.
    pub fn pol_clock(&self, now: SimTime) -> SimTime {
        now.saturating_sub(self.clock_origin)
    }

    /// When the clock will first exceed `T`.
    pub fn pol_due_at(&self, cfg: &ProtocolConfig) -> SimTime {
        self.clock_origin + cfg.offline_threshold + SimTime::MICROSECOND
    }

    /// Canonical bytes of the replicated part: graph then cycle.
    pub fn replica_bytes(&self) -> Vec<u8> {
        let mut out = crate::graph::encode_graph(&self.graph);
        if let Some(c) = &self.cycle {
            out.extend(crate::graph::encode_cycle(c));
        }
        out
    }

    pub fn go_offline(&mut self, now: SimTime) {
        if self.status == NodeStatus::Online {
            self.status = NodeStatus::Offline;
            self.last_seen_stage = self.stage;
            self.offline_since = Some(now);
        }
    }

    /// Opens a proof-of-life window if the clock is past `T`.
    pub fn open_window(&mut self, now: SimTime, cfg: &ProtocolConfig) -> Option<WindowId> {
        if !self.is_online() || self.pol_clock(now) <= cfg.offline_threshold {
            return None;
        }
        let w = WindowId {
            initiator: self.id,
            seq: self.next_window,
        };
        self.next_window += 1;
        Some(w)
    }

    pub(crate) fn reset_clock(&mut self, now: SimTime) {
        self.clock_origin = now;
    }

    /// Honest prover over the local graph and cycle.
    pub fn prover<R: RngCore>(&self, rng: R) -> Result<HonestProver<R>, ZkpError> {
        let cycle = self.cycle.clone().ok_or(ZkpError::InvalidWitness)?;
        HonestProver::new(self.graph.clone(), cycle, rng)
    }

    pub fn access_request(&self) -> AccessRequest {
        AccessRequest {
            claimed_id: self.id,
            stage: self.stage,
            claimed_graph: self.graph.clone(),
            last_proof: self.last_proof,
        }
    }

    /// Digest of the local graph as it was at `stage`, if still known.
    pub fn digest_at(&self, stage: u64) -> Option<Digest> {
        if stage == self.stage {
            return Some(graph_digest(&self.graph));
        }
        self.fifo
            .iter()
            .find(|r| r.changes_graph() && r.stage == stage + 1)
            .map(|r| r.base)
    }

    /// Records after `stage`, in application order.
    pub fn records_after(&self, stage: u64) -> Vec<UpdateRecord> {
        self.fifo.iter().filter(|r| r.stage > stage).cloned().collect()
    }

    pub fn latest_window(&self) -> Option<WindowId> {
        self.fifo.iter().rev().find_map(|r| match &r.kind {
            UpdateKind::PolSummary { window, .. } => Some(*window),
            _ => None,
        })
    }

    pub(crate) fn has_window(&self, w: WindowId) -> bool {
        self.fifo
            .iter()
            .any(|r| matches!(&r.kind, UpdateKind::PolSummary { window, .. } if *window == w))
    }

    /// Vertices with no proof of life within `T` before `at`. Nodes that
    /// have not been observed since this replica came online are credited
    /// with `online_since`.
    pub fn silent_vertices(&self, at: SimTime, cfg: &ProtocolConfig) -> BTreeSet<NodeId> {
        self.graph
            .vertices()
            .filter(|&v| v != self.id)
            .filter(|v| {
                let seen = self.liveness.get(v).copied().unwrap_or(SimTime::ZERO);
                at.saturating_sub(seen.max(self.online_since)) > cfg.offline_threshold
            })
            .collect()
    }

    pub fn last_seen(&self, v: NodeId) -> Option<SimTime> {
        self.liveness.get(&v).copied()
    }

    /// Applies one record received from the network or a grant. Returns
    /// `Ok(false)` for a record already applied.
    pub fn apply_record(
        &mut self,
        rec: &UpdateRecord,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Result<bool, ProtocolError> {
        if self.status == NodeStatus::Deleted {
            return Err(ProtocolError::NotOnline);
        }
        let cycle = self.cycle.as_ref().ok_or(ProtocolError::InvalidCycle)?;
        match &rec.kind {
            UpdateKind::PolSummary { window, alive } => {
                if self.has_window(*window) {
                    return Ok(false);
                }
                if rec.stage > self.stage {
                    return Err(ProtocolError::OutOfSync {
                        local: self.stage,
                        update: rec.stage,
                    });
                }
                for &v in alive {
                    if self.graph.contains(v) {
                        self.note_proof(v, rec.timestamp);
                    }
                }
            }
            UpdateKind::Insertion {
                id,
                neighbors,
                authenticator,
            } => {
                if !self.check_graph_update(rec)? {
                    return Ok(false);
                }
                if self.graph.contains(*id) {
                    return Err(ProtocolError::IdAlreadyAssigned(*id));
                }
                if let Some(v) = neighbors.iter().find(|&&v| !self.graph.contains(v)) {
                    return Err(ProtocolError::Graph(crate::graph::GraphError::UnknownNode(*v)));
                }
                locate_insertion_pair(cycle, neighbors)?;
                let (g, c) = splice_insert(&self.graph, cycle, *id, neighbors)?;
                self.graph = g;
                self.cycle = Some(c);
                self.stage = rec.stage;
                self.note_proof(*id, rec.timestamp);
                self.note_proof(*authenticator, rec.timestamp);
            }
            UpdateKind::Deletion { id } => {
                if !self.check_graph_update(rec)? {
                    return Ok(false);
                }
                let (g, c) = splice_delete(&self.graph, cycle, *id)?;
                self.graph = g;
                self.cycle = Some(c);
                self.stage = rec.stage;
                self.liveness.remove(id);
                if *id == self.id {
                    self.status = NodeStatus::Deleted;
                    self.cycle = None;
                }
            }
        }
        self.push_record(rec.clone(), cfg, now);
        Ok(true)
    }

    /// `Ok(false)` for a replay of an applied update, an error for one that
    /// does not extend the local graph.
    fn check_graph_update(&self, rec: &UpdateRecord) -> Result<bool, ProtocolError> {
        if rec.stage <= self.stage {
            return if self.fifo.contains(rec) {
                Ok(false)
            } else {
                Err(ProtocolError::Fork)
            };
        }
        if rec.stage != self.stage + 1 {
            return Err(ProtocolError::OutOfSync {
                local: self.stage,
                update: rec.stage,
            });
        }
        if rec.base != graph_digest(&self.graph) {
            return Err(ProtocolError::Fork);
        }
        Ok(true)
    }

    fn note_proof(&mut self, v: NodeId, at: SimTime) {
        let slot = self.liveness.entry(v).or_insert(at);
        *slot = (*slot).max(at);
        if v == self.id && at > self.last_proof {
            self.last_proof = at;
        }
    }

    fn push_record(&mut self, rec: UpdateRecord, cfg: &ProtocolConfig, now: SimTime) {
        self.fifo.push_back(rec);
        let horizon = now.saturating_sub(cfg.retention());
        while self.fifo.front().is_some_and(|r| r.timestamp < horizon) {
            self.fifo.pop_front();
        }
    }

    /// Replays a grant and comes back online.
    pub fn apply_grant(
        &mut self,
        grant: &AccessGrant,
        cfg: &ProtocolConfig,
        now: SimTime,
    ) -> Result<(), ProtocolError> {
        if self.status != NodeStatus::Offline {
            return Err(ProtocolError::NotOffline);
        }
        for rec in &grant.records {
            self.apply_record(rec, cfg, now)?;
        }
        if self.stage != grant.stage {
            return Err(ProtocolError::OutOfSync {
                local: self.stage,
                update: grant.stage,
            });
        }
        if self.status == NodeStatus::Deleted {
            return Err(ProtocolError::NotAMember(self.id));
        }
        self.status = NodeStatus::Online;
        self.online_since = now;
        self.offline_since = None;
        Ok(())
    }
}
