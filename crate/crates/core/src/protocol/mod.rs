//! Per-node protocol: insertion, access control, proof of life, deletion,
//! duplicate-identity checks and termination.
//!
//! Every handler works on one [`NodeState`] and never touches the network
//! itself; the caller moves messages around. Graph updates carry the stage
//! they lead to and a digest of the graph they apply to, so a replica that
//! missed something notices instead of silently diverging.

mod access;
mod insertion;
mod liveness;
mod message;
mod state;
mod sybil;

use thiserror::Error;

use crate::graph::{GraphError, NodeId};
use crate::zkp::RejectReason;
use crate::SimTime;

pub use access::{access_control, AccessContext};
pub use insertion::{apply_insertion_update, authenticator_insert, InsertAbort, InsertRequest, InsertionCommit};
pub use liveness::{apply_deletion_update, proof_of_life_cycle, DeletionReport, PolOutcome};
pub use message::{
    AccessGrant, AccessRequest, ChannelClass, Envelope, LinkAddr, NeighborSetBroadcast, PolSummary, ProtocolMessage,
    WindowId,
};
pub use state::{NodeState, NodeStatus, UpdateKind, UpdateRecord};
pub use sybil::{detect_sybil, SybilDetector, SybilFlag, SybilRule};

/// `count` meets the quorum over `n` iff `count / n >= num / den`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Quorum {
    pub num: u32,
    pub den: u32,
}

impl Quorum {
    pub const HALF: Quorum = Quorum { num: 1, den: 2 };

    pub fn met(self, count: usize, n: usize) -> bool {
        count as u64 * self.den as u64 >= n as u64 * self.num as u64
    }

    /// Smallest count that meets the quorum over `n`.
    pub fn needed(self, n: usize) -> usize {
        (n as u64 * self.num as u64).div_ceil(self.den as u64) as usize
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProtocolConfig {
    /// Longest a member may go without a proof of life.
    pub offline_threshold: SimTime,
    /// Proof rounds per access control.
    pub rounds: u32,
    /// Fewest online nodes the network keeps running with.
    pub termination_threshold: usize,
    /// Quorum over the number of vertices, for both insertion acks and
    /// proof-of-life answers.
    pub quorum: Quorum,
    /// Neighbors given to an inserted node.
    pub insert_degree: usize,
}

impl ProtocolConfig {
    pub fn new(
        offline_threshold: SimTime,
        rounds: u32,
        termination_threshold: usize,
        insert_degree: usize,
    ) -> Result<Self, ProtocolError> {
        let invalid = |s: &str| Err(ProtocolError::InvalidConfig(s.into()));
        if offline_threshold == SimTime::ZERO {
            return invalid("T must be positive");
        }
        if rounds == 0 {
            return invalid("l must be at least 1");
        }
        if termination_threshold < 3 {
            return invalid("termination threshold must be at least 3");
        }
        if insert_degree < 2 {
            return invalid("insertion degree must be at least 2");
        }
        Ok(ProtocolConfig {
            offline_threshold,
            rounds,
            termination_threshold,
            quorum: Quorum::HALF,
            insert_degree,
        })
    }

    /// How long catch-up records are kept.
    pub fn retention(&self) -> SimTime {
        self.offline_threshold + self.offline_threshold
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("node is not online")]
    NotOnline,
    #[error("node is not offline")]
    NotOffline,
    #[error("{0} is not a member")]
    NotAMember(NodeId),
    #[error("cycle does not match graph")]
    InvalidCycle,
    #[error("ID already assigned: {0}")]
    IdAlreadyAssigned(NodeId),
    #[error("out of sync: local stage {local}, update for stage {update}")]
    OutOfSync { local: u64, update: u64 },
    #[error("update does not extend the local graph")]
    Fork,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Why access control turned a supplicant away.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Error)]
pub enum DenyReason {
    #[error("duplicate identity")]
    DuplicateIdentity,
    #[error("expired membership")]
    ExpiredMembership,
    #[error("stage not available at verifier")]
    StageUnavailable,
    #[error("unknown graph")]
    UnknownGraph,
    #[error("zkp failed in round {round}: {reason}")]
    ZkpFailed { round: u32, reason: RejectReason },
    #[error("protocol aborted")]
    ProtocolAborted,
}

impl DenyReason {
    pub(crate) fn code(self) -> u8 {
        match self {
            DenyReason::DuplicateIdentity => 1,
            DenyReason::ExpiredMembership => 2,
            DenyReason::StageUnavailable => 3,
            DenyReason::UnknownGraph => 4,
            DenyReason::ZkpFailed { .. } => 5,
            DenyReason::ProtocolAborted => 6,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Termination {
    Continue,
    Terminate,
}

/// The network ends its life-cycle once fewer than the threshold are online.
pub fn check_termination(online_count: usize, cfg: &ProtocolConfig) -> Termination {
    if online_count < cfg.termination_threshold {
        Termination::Terminate
    } else {
        Termination::Continue
    }
}
