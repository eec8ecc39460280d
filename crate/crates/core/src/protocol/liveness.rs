use std::collections::BTreeSet;

use crate::graph::NodeId;
use crate::zkp::graph_digest;
use crate::SimTime;

use super::message::{PolSummary, WindowId};
use super::state::{NodeState, NodeStatus, UpdateKind, UpdateRecord};
use super::{ProtocolConfig, ProtocolError};

/// Smallest graph a deletion may leave behind.
const MIN_ORDER: usize = 3;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PolOutcome {
    Summary(PolSummary),
    /// Too few answers; the initiator's clock was put back.
    Aborted {
        answers: usize,
        needed: usize,
    },
}

/// Closes the initiator's window. Answers from non-members and from the
/// initiator itself are ignored. With a quorum, the summary lists the
/// answerers plus the initiator as alive and, as deletions, every other
/// vertex with no proof of life within `T` of the window start.
pub fn proof_of_life_cycle(
    initiator: &mut NodeState,
    window: WindowId,
    started: SimTime,
    answers: &BTreeSet<NodeId>,
    cfg: &ProtocolConfig,
) -> Result<PolOutcome, ProtocolError> {
    if !initiator.is_online() {
        return Err(ProtocolError::NotOnline);
    }
    let me = initiator.id();
    let mut alive: BTreeSet<NodeId> = answers
        .iter()
        .copied()
        .filter(|&v| v != me && initiator.graph().contains(v))
        .collect();
    let n = initiator.graph().order();
    initiator.reset_clock(started);
    if !cfg.quorum.met(alive.len(), n) {
        return Ok(PolOutcome::Aborted {
            answers: alive.len(),
            needed: cfg.quorum.needed(n),
        });
    }
    alive.insert(me);
    let room = n.saturating_sub(MIN_ORDER);
    let deletions = initiator
        .silent_vertices(started, cfg)
        .into_iter()
        .filter(|v| !alive.contains(v))
        .take(room)
        .collect();
    Ok(PolOutcome::Summary(PolSummary {
        window,
        stage: initiator.stage(),
        base: graph_digest(initiator.graph()),
        timestamp: started,
        alive,
        deletions,
    }))
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeletionReport {
    /// False when the window had already been applied.
    pub applied: bool,
    pub deleted: Vec<NodeId>,
    pub self_deleted: bool,
}

impl PolSummary {
    pub fn record(&self) -> UpdateRecord {
        UpdateRecord {
            stage: self.stage,
            timestamp: self.timestamp,
            base: self.base,
            kind: UpdateKind::PolSummary {
                window: self.window,
                alive: self.alive.clone(),
            },
        }
    }
}

/// Applies a proof-of-life summary: credits the alive set, then deletes
/// every announced vertex in ascending order, one stage per deletion. All
/// or nothing.
pub fn apply_deletion_update(
    s: &mut NodeState,
    summary: &PolSummary,
    cfg: &ProtocolConfig,
    now: SimTime,
) -> Result<DeletionReport, ProtocolError> {
    if !s.is_online() {
        return Err(ProtocolError::NotOnline);
    }
    if s.has_window(summary.window) {
        return Ok(DeletionReport::default());
    }
    if !summary.deletions.is_empty() {
        if summary.stage != s.stage() {
            return Err(ProtocolError::OutOfSync {
                local: s.stage(),
                update: summary.stage,
            });
        }
        if summary.base != graph_digest(s.graph()) {
            return Err(ProtocolError::Fork);
        }
    }
    if summary.deletions.is_empty() {
        s.apply_record(&summary.record(), cfg, now)?;
        return Ok(DeletionReport {
            applied: true,
            ..DeletionReport::default()
        });
    }
    let mut next = s.clone();
    next.apply_record(&summary.record(), cfg, now)?;
    for &id in &summary.deletions {
        let rec = UpdateRecord {
            stage: next.stage() + 1,
            timestamp: summary.timestamp,
            base: graph_digest(next.graph()),
            kind: UpdateKind::Deletion { id },
        };
        next.apply_record(&rec, cfg, now)?;
    }
    let report = DeletionReport {
        applied: true,
        deleted: summary.deletions.iter().copied().collect(),
        self_deleted: next.status() == NodeStatus::Deleted,
    };
    *s = next;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_initial_graph, is_hamiltonian_cycle, HamiltonianCycle};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ProtocolConfig {
        ProtocolConfig::new(SimTime::from_secs(10), 20, 3, 4).unwrap()
    }

    fn network(seed: u64, n: u32) -> Vec<NodeState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, c) = build_initial_graph(n as usize, 2 * n as usize, &mut rng).unwrap();
        (0..n)
            .map(|i| NodeState::from_dealer(NodeId(i), g.clone(), c.clone(), SimTime::ZERO).unwrap())
            .collect()
    }

    fn ids(v: impl IntoIterator<Item = u32>) -> BTreeSet<NodeId> {
        v.into_iter().map(NodeId).collect()
    }

    #[test]
    fn six_of_eleven_summarize_five_abort() {
        let c = cfg();
        let t = SimTime::from_secs(11);
        let mut nodes = network(1, 11);
        let w = nodes[0].open_window(t, &c).unwrap();
        let PolOutcome::Summary(s) = proof_of_life_cycle(&mut nodes[0], w, t, &ids(1..7), &c).unwrap() else {
            panic!()
        };
        assert_eq!(s.alive, ids(0..7));

        let w = nodes[1].open_window(t, &c).unwrap();
        assert_eq!(
            proof_of_life_cycle(&mut nodes[1], w, t, &ids(2..7), &c).unwrap(),
            PolOutcome::Aborted { answers: 5, needed: 6 }
        );
        assert_eq!(nodes[1].pol_clock(t), SimTime::ZERO);
        assert_eq!(nodes[1].open_window(t, &c), None);
    }

    #[test]
    fn initiator_and_strangers_do_not_count() {
        let c = cfg();
        let t = SimTime::from_secs(11);
        let mut nodes = network(2, 11);
        let w = nodes[0].open_window(t, &c).unwrap();
        let answers = ids([0, 1, 2, 3, 4, 40, 41]);
        assert!(matches!(
            proof_of_life_cycle(&mut nodes[0], w, t, &answers, &c).unwrap(),
            PolOutcome::Aborted { answers: 4, .. }
        ));
    }

    #[test]
    fn full_attendance_changes_only_the_queue() {
        let c = cfg();
        let t = SimTime::from_secs(11);
        let mut nodes = network(3, 11);
        let before = nodes[5].replica_bytes();
        let w = nodes[0].open_window(t, &c).unwrap();
        let PolOutcome::Summary(s) = proof_of_life_cycle(&mut nodes[0], w, t, &ids(1..11), &c).unwrap() else {
            panic!()
        };
        assert!(s.deletions.is_empty());
        let report = apply_deletion_update(&mut nodes[5], &s, &c, t).unwrap();
        assert!(report.applied && report.deleted.is_empty());
        assert_eq!(nodes[5].replica_bytes(), before);
        assert_eq!(nodes[5].fifo().len(), 1);
        assert!(!apply_deletion_update(&mut nodes[5], &s, &c, t).unwrap().applied);
    }

    /// The deletion from the example trace: 5 leaves, 6 and 1 are bridged.
    #[test]
    fn trace_deletion_of_node_five() {
        let c = cfg();
        let hc = HamiltonianCycle::from_ids(&[8, 3, 9, 7, 4, 14, 2, 6, 5, 1, 10, 0]).unwrap();
        let g = crate::graph::Graph::cycle_graph(hc.as_slice()).unwrap();
        let mut a = NodeState::from_dealer(NodeId(8), g.clone(), hc.clone(), SimTime::ZERO).unwrap();
        let mut b = NodeState::from_dealer(NodeId(3), g, hc, SimTime::ZERO).unwrap();
        let t = SimTime::from_secs(11);
        let w = a.open_window(t, &c).unwrap();
        let answers = ids([3, 9, 7, 4, 14, 2, 6, 1, 10, 0]);
        let PolOutcome::Summary(s) = proof_of_life_cycle(&mut a, w, t, &answers, &c).unwrap() else {
            panic!()
        };
        assert_eq!(s.deletions, ids([5]));
        for node in [&mut a, &mut b] {
            apply_deletion_update(node, &s, &c, t).unwrap();
            let want = HamiltonianCycle::from_ids(&[8, 3, 9, 7, 4, 14, 2, 6, 1, 10, 0]).unwrap();
            assert_eq!(node.cycle().unwrap(), &want);
            assert!(is_hamiltonian_cycle(node.graph(), node.cycle().unwrap()));
            assert_eq!(node.stage(), 1);
        }
        assert_eq!(a.replica_bytes(), b.replica_bytes());
    }

    #[test]
    fn stale_summary_with_deletions_is_out_of_sync() {
        let c = cfg();
        let mut nodes = network(4, 11);
        let t = SimTime::from_secs(11);
        let w = nodes[0].open_window(t, &c).unwrap();
        let PolOutcome::Summary(mut s) = proof_of_life_cycle(&mut nodes[0], w, t, &ids(1..11), &c).unwrap() else {
            panic!()
        };
        s.deletions.insert(NodeId(3));
        s.stage = 4;
        let before = nodes[2].replica_bytes();
        assert!(matches!(
            apply_deletion_update(&mut nodes[2], &s, &c, t),
            Err(ProtocolError::OutOfSync { local: 0, update: 4 })
        ));
        assert_eq!(nodes[2].replica_bytes(), before);
    }

    #[test]
    fn every_silent_vertex_goes_in_one_summary() {
        let c = cfg();
        let mut nodes = network(5, 8);
        let t = SimTime::from_secs(11);
        let w = nodes[0].open_window(t, &c).unwrap();
        let PolOutcome::Summary(s) = proof_of_life_cycle(&mut nodes[0], w, t, &ids(1..5), &c).unwrap() else {
            panic!()
        };
        assert_eq!(s.deletions, ids(5..8));
        apply_deletion_update(&mut nodes[0], &s, &c, t).unwrap();
        assert_eq!(nodes[0].graph().order(), 5);
        assert_eq!(nodes[0].stage(), 3);
    }
}
