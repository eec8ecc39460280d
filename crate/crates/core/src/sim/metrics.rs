use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::protocol::ProtocolMessage;

/// Bytes added to every delivered message for link framing.
pub const HEADER_BYTES: u64 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageClass {
    Zkp,
    ProofOfLife,
    Insertion,
    Deletion,
    GraphTransfer,
    CycleTransfer,
}

impl MessageClass {
    pub const ALL: [MessageClass; 6] = [
        MessageClass::Zkp,
        MessageClass::ProofOfLife,
        MessageClass::Insertion,
        MessageClass::Deletion,
        MessageClass::GraphTransfer,
        MessageClass::CycleTransfer,
    ];

    pub fn of(msg: &ProtocolMessage) -> MessageClass {
        use ProtocolMessage as M;
        match msg {
            M::AccessRequest(_)
            | M::ZkpCommit(_)
            | M::ZkpChallenge(_)
            | M::ZkpResponse(_)
            | M::AccessGrant(_)
            | M::AccessDenied(_) => MessageClass::Zkp,
            M::PolInitiate { .. } | M::PolAnswer { .. } => MessageClass::ProofOfLife,
            M::PolSummary(s) if s.deletions.is_empty() => MessageClass::ProofOfLife,
            M::PolSummary(_) => MessageClass::Deletion,
            M::InsertionAnnounce { .. } | M::InsertionAck { .. } | M::NeighborSetBroadcast(_) => {
                MessageClass::Insertion
            }
            M::GraphTransfer { .. } => MessageClass::GraphTransfer,
            M::CycleTransfer { .. } => MessageClass::CycleTransfer,
        }
    }
}

impl fmt::Display for MessageClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MessageClass::Zkp => "zkp",
            MessageClass::ProofOfLife => "proof_of_life",
            MessageClass::Insertion => "insertion",
            MessageClass::Deletion => "deletion",
            MessageClass::GraphTransfer => "graph_transfer",
            MessageClass::CycleTransfer => "cycle_transfer",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassTotals {
    pub count: u64,
    pub bytes: u64,
}

/// Delivered traffic per message class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrafficMetrics {
    totals: BTreeMap<MessageClass, ClassTotals>,
}

#[derive(Serialize, Deserialize)]
struct ClassReport {
    count: u64,
    bytes: u64,
    share: f64,
}

#[derive(Serialize, Deserialize)]
struct Report {
    total_messages: u64,
    total_bytes: u64,
    classes: BTreeMap<MessageClass, ClassReport>,
}

impl TrafficMetrics {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts `msg` delivered to `receivers` devices.
    pub fn record(&mut self, msg: &ProtocolMessage, receivers: usize) {
        if receivers == 0 {
            return;
        }
        let size = msg.encode().len() as u64 + HEADER_BYTES;
        let t = self.totals.entry(MessageClass::of(msg)).or_default();
        t.count += receivers as u64;
        t.bytes += size * receivers as u64;
    }

    pub fn class(&self, c: MessageClass) -> ClassTotals {
        self.totals.get(&c).copied().unwrap_or_default()
    }

    pub fn total_bytes(&self) -> u64 {
        self.totals.values().map(|t| t.bytes).sum()
    }

    pub fn total_messages(&self) -> u64 {
        self.totals.values().map(|t| t.count).sum()
    }

    /// Fraction of all delivered bytes that belong to `c`. Zero when
    /// nothing was sent.
    pub fn share(&self, c: MessageClass) -> f64 {
        let total = self.total_bytes();
        if total == 0 {
            return 0.0;
        }
        self.class(c).bytes as f64 / total as f64
    }

    pub fn to_json(&self) -> String {
        let report = Report {
            total_messages: self.total_messages(),
            total_bytes: self.total_bytes(),
            classes: MessageClass::ALL
                .into_iter()
                .map(|c| {
                    let t = self.class(c);
                    (
                        c,
                        ClassReport {
                            count: t.count,
                            bytes: t.bytes,
                            share: self.share(c),
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&report).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NodeId;
    use crate::protocol::{DenyReason, WindowId};

    fn answer() -> ProtocolMessage {
        ProtocolMessage::PolAnswer {
            window: WindowId {
                initiator: NodeId(0),
                seq: 0,
            },
            from: NodeId(1),
        }
    }

    #[test]
    fn bytes_include_header_per_receiver() {
        let mut m = TrafficMetrics::new();
        let msg = answer();
        m.record(&msg, 3);
        let t = m.class(MessageClass::ProofOfLife);
        assert_eq!(t.count, 3);
        assert_eq!(t.bytes, 3 * (msg.encode().len() as u64 + HEADER_BYTES));
        m.record(&msg, 0);
        assert_eq!(m.class(MessageClass::ProofOfLife), t);
    }

    #[test]
    fn shares_sum_to_one() {
        let mut m = TrafficMetrics::new();
        assert_eq!(m.share(MessageClass::Zkp), 0.0);
        m.record(&answer(), 5);
        m.record(&ProtocolMessage::AccessDenied(DenyReason::UnknownGraph), 2);
        m.record(&ProtocolMessage::InsertionAnnounce { id: NodeId(4) }, 7);
        let sum: f64 = MessageClass::ALL.iter().map(|&c| m.share(c)).sum();
        assert!((sum - 1.0).abs() < 1e-12);
        let json: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        assert_eq!(json["classes"]["insertion"]["count"], 7);
        assert_eq!(json["total_messages"], 14);
    }
}
