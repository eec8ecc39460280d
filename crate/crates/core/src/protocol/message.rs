use std::collections::BTreeSet;
use std::fmt;

use crate::graph::{codec_write, Graph, HamiltonianCycle, NodeId};
use crate::zkp::{Challenge, Commitment, Digest, Response};
use crate::SimTime;

use super::state::{UpdateKind, UpdateRecord};
use super::DenyReason;

/// Physical link address of a device. Unlike a [`NodeId`], a device cannot
/// choose it per message, which is what the Sybil rules key on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LinkAddr(pub u64);

impl fmt::Display for LinkAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "link{}", self.0)
    }
}

/// Proof-of-life windows are numbered per initiator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct WindowId {
    pub initiator: NodeId,
    pub seq: u32,
}

impl fmt::Display for WindowId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.initiator, self.seq)
    }
}

/// Which kind of channel a message may travel on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ChannelClass {
    /// Point-to-point over the data range.
    Open,
    /// Flooded to every reachable online node.
    Broadcast,
    /// Short-range point-to-point; the only class allowed to carry the cycle.
    Secure,
}

/// Announces where a newly admitted node goes. Replicas find the splice
/// position from `neighbors` alone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeighborSetBroadcast {
    /// Stage reached once applied.
    pub stage: u64,
    /// Digest of the graph this update applies to.
    pub base: Digest,
    pub timestamp: SimTime,
    pub id: NodeId,
    pub neighbors: BTreeSet<NodeId>,
    pub authenticator: NodeId,
}

/// Second half of a proof-of-life window: who answered and who is gone.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PolSummary {
    pub window: WindowId,
    /// Initiator's stage when the window closed.
    pub stage: u64,
    pub base: Digest,
    /// Window start; the time every alive node is credited with.
    pub timestamp: SimTime,
    pub alive: BTreeSet<NodeId>,
    pub deletions: BTreeSet<NodeId>,
}

/// What a returning node sends before the proof starts.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessRequest {
    pub claimed_id: NodeId,
    pub stage: u64,
    pub claimed_graph: Graph,
    /// The supplicant's last recorded proof of life.
    pub last_proof: SimTime,
}

/// Everything a verified supplicant needs to rejoin: the updates it missed,
/// the stage they lead to and the latest proof-of-life window.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AccessGrant {
    pub records: Vec<UpdateRecord>,
    pub stage: u64,
    pub window: Option<WindowId>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProtocolMessage {
    InsertionAnnounce { id: NodeId },
    InsertionAck { from: NodeId },
    NeighborSetBroadcast(NeighborSetBroadcast),
    GraphTransfer { graph: Graph },
    CycleTransfer { cycle: HamiltonianCycle },
    PolInitiate { window: WindowId },
    PolAnswer { window: WindowId, from: NodeId },
    PolSummary(PolSummary),
    AccessRequest(AccessRequest),
    ZkpCommit(Commitment),
    ZkpChallenge(Challenge),
    ZkpResponse(Response),
    AccessGrant(AccessGrant),
    AccessDenied(DenyReason),
}

impl ProtocolMessage {
    pub fn channel(&self) -> ChannelClass {
        use ProtocolMessage::*;
        match self {
            CycleTransfer { .. } | AccessGrant(_) => ChannelClass::Secure,
            InsertionAnnounce { .. } | NeighborSetBroadcast(_) | PolInitiate { .. } | PolSummary(_) => {
                ChannelClass::Broadcast
            }
            _ => ChannelClass::Open,
        }
    }

    /// Canonical payload bytes, one tag byte followed by the fields.
    pub fn encode(&self) -> Vec<u8> {
        use ProtocolMessage::*;
        let mut out = Vec::new();
        match self {
            InsertionAnnounce { id } => {
                out.push(0x01);
                put_node(&mut out, *id);
            }
            InsertionAck { from } => {
                out.push(0x02);
                put_node(&mut out, *from);
            }
            NeighborSetBroadcast(b) => {
                out.push(0x03);
                out.extend_from_slice(&b.stage.to_be_bytes());
                out.extend_from_slice(&b.base);
                out.extend_from_slice(&b.timestamp.as_micros().to_be_bytes());
                put_node(&mut out, b.id);
                put_set(&mut out, &b.neighbors);
                put_node(&mut out, b.authenticator);
            }
            GraphTransfer { graph } => {
                out.push(0x04);
                codec_write::graph(&mut out, graph);
            }
            CycleTransfer { cycle } => {
                out.push(0x05);
                codec_write::cycle(&mut out, cycle);
            }
            PolInitiate { window } => {
                out.push(0x06);
                put_window(&mut out, *window);
            }
            PolAnswer { window, from } => {
                out.push(0x07);
                put_window(&mut out, *window);
                put_node(&mut out, *from);
            }
            PolSummary(s) => {
                out.push(0x08);
                put_window(&mut out, s.window);
                out.extend_from_slice(&s.stage.to_be_bytes());
                out.extend_from_slice(&s.base);
                out.extend_from_slice(&s.timestamp.as_micros().to_be_bytes());
                put_set(&mut out, &s.alive);
                put_set(&mut out, &s.deletions);
            }
            AccessRequest(r) => {
                out.push(0x09);
                put_node(&mut out, r.claimed_id);
                out.extend_from_slice(&r.stage.to_be_bytes());
                out.extend_from_slice(&r.last_proof.as_micros().to_be_bytes());
                codec_write::graph(&mut out, &r.claimed_graph);
            }
            ZkpCommit(c) => {
                out.push(0x0a);
                c.encode_into(&mut out);
            }
            ZkpChallenge(c) => {
                out.push(0x0b);
                out.push(c.bit());
            }
            ZkpResponse(r) => {
                out.push(0x0c);
                r.encode_into(&mut out);
            }
            AccessGrant(g) => {
                out.push(0x0d);
                out.extend_from_slice(&g.stage.to_be_bytes());
                match g.window {
                    Some(w) => {
                        out.push(1);
                        put_window(&mut out, w);
                    }
                    None => out.push(0),
                }
                out.extend_from_slice(&(g.records.len() as u32).to_be_bytes());
                for r in &g.records {
                    r.encode_into(&mut out);
                }
            }
            AccessDenied(reason) => {
                out.push(0x0e);
                out.push(reason.code());
            }
        }
        out
    }
}

/// A message together with the routing facts every message carries.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub link: LinkAddr,
    /// `None` for a device that has not been admitted yet.
    pub sender: Option<NodeId>,
    pub stage: u64,
    pub msg: ProtocolMessage,
}

impl UpdateRecord {
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.stage.to_be_bytes());
        out.extend_from_slice(&self.timestamp.as_micros().to_be_bytes());
        out.extend_from_slice(&self.base);
        match &self.kind {
            UpdateKind::Insertion {
                id,
                neighbors,
                authenticator,
            } => {
                out.push(0x00);
                put_node(out, *id);
                put_set(out, neighbors);
                put_node(out, *authenticator);
            }
            UpdateKind::Deletion { id } => {
                out.push(0x01);
                put_node(out, *id);
            }
            UpdateKind::PolSummary { window, alive } => {
                out.push(0x02);
                put_window(out, *window);
                put_set(out, alive);
            }
        }
    }
}

fn put_node(out: &mut Vec<u8>, v: NodeId) {
    out.extend_from_slice(&v.0.to_be_bytes());
}

fn put_window(out: &mut Vec<u8>, w: WindowId) {
    put_node(out, w.initiator);
    out.extend_from_slice(&w.seq.to_be_bytes());
}

fn put_set(out: &mut Vec<u8>, set: &BTreeSet<NodeId>) {
    out.extend_from_slice(&(set.len() as u32).to_be_bytes());
    for &v in set {
        put_node(out, v);
    }
}
