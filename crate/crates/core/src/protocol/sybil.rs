use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::graph::NodeId;

use super::message::{Envelope, LinkAddr, ProtocolMessage, WindowId};
use super::state::NodeState;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum SybilRule {
    /// Access requested for an id that is online.
    DuplicateAccess,
    /// Insertion announced for an id that is already a vertex.
    DuplicateInsertion,
    /// One link answered a proof-of-life window under several ids.
    MultiIdentityAnswers,
}

impl fmt::Display for SybilRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SybilRule::DuplicateAccess => "duplicate-access",
            SybilRule::DuplicateInsertion => "duplicate-insertion",
            SybilRule::MultiIdentityAnswers => "multi-identity-answers",
        })
    }
}

/// A link caught using identities it should not have.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SybilFlag {
    pub rule: SybilRule,
    pub link: LinkAddr,
    pub ids: BTreeSet<NodeId>,
}

/// Incremental form of [`detect_sybil`], for feeding messages as they are
/// delivered.
#[derive(Clone, Debug, Default)]
pub struct SybilDetector {
    answers: BTreeMap<(WindowId, LinkAddr), BTreeSet<NodeId>>,
    flags: BTreeMap<(SybilRule, LinkAddr), BTreeSet<NodeId>>,
}

impl SybilDetector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks one envelope received by `s`, with `online` the ids currently
    /// online. Returns true if the envelope breaks a rule; the caller should
    /// drop or deny it.
    pub fn observe(&mut self, s: &NodeState, online: &BTreeSet<NodeId>, env: &Envelope) -> bool {
        let hit = match &env.msg {
            ProtocolMessage::AccessRequest(r) if online.contains(&r.claimed_id) => {
                Some((SybilRule::DuplicateAccess, [r.claimed_id].into()))
            }
            ProtocolMessage::InsertionAnnounce { id } if env.stage == s.stage() && s.graph().contains(*id) => {
                Some((SybilRule::DuplicateInsertion, [*id].into()))
            }
            ProtocolMessage::NeighborSetBroadcast(b) if b.stage == s.stage() + 1 && s.graph().contains(b.id) => {
                Some((SybilRule::DuplicateInsertion, [b.id].into()))
            }
            ProtocolMessage::PolAnswer { window, from } => {
                let ids = self.answers.entry((*window, env.link)).or_default();
                ids.insert(*from);
                (ids.len() >= 2).then(|| (SybilRule::MultiIdentityAnswers, ids.clone()))
            }
            _ => None,
        };
        let Some((rule, ids)) = hit else {
            return false;
        };
        self.flags.entry((rule, env.link)).or_default().extend(ids);
        true
    }

    /// Forgets per-window bookkeeping once a window is closed.
    pub fn close_window(&mut self, w: WindowId) {
        self.answers.retain(|(win, _), _| *win != w);
    }

    pub fn flags(&self) -> BTreeSet<SybilFlag> {
        self.flags
            .iter()
            .map(|(&(rule, link), ids)| SybilFlag {
                rule,
                link,
                ids: ids.clone(),
            })
            .collect()
    }

    pub fn is_flagged(&self, link: LinkAddr) -> bool {
        self.flags.keys().any(|&(_, l)| l == link)
    }
}

/// Runs the three duplicate-identity rules over a stream of envelopes seen
/// by `s`.
pub fn detect_sybil<'a>(
    s: &NodeState,
    online: &BTreeSet<NodeId>,
    evidence: impl IntoIterator<Item = &'a Envelope>,
) -> BTreeSet<SybilFlag> {
    let mut d = SybilDetector::new();
    for env in evidence {
        d.observe(s, online, env);
    }
    d.flags()
}
