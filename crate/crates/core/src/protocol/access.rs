use std::collections::BTreeSet;

use rand::RngCore;

use crate::graph::NodeId;
use crate::zkp::{graph_digest, run_proof, ProofOutcome, Prover};
use crate::SimTime;

use super::message::{AccessGrant, AccessRequest};
use super::state::NodeState;
use super::{DenyReason, ProtocolConfig};

/// What the verifier knows about the network when the request arrives.
#[derive(Clone, Copy, Debug)]
pub struct AccessContext<'a> {
    pub now: SimTime,
    /// Ids currently online.
    pub online: &'a BTreeSet<NodeId>,
}

/// Verifier side of a returning node's access control.
///
/// Checks, in order: staleness (`now - last_proof <= T`, inclusive), that
/// the id is not already online, that it is still a vertex, and that the
/// claimed graph is the verifier's graph at the claimed stage. Then runs
/// `cfg.rounds` proof rounds against `transport`. On success the grant
/// holds every queued record past the supplicant's stage.
pub fn access_control(
    verifier: &NodeState,
    req: &AccessRequest,
    ctx: AccessContext<'_>,
    transport: &mut dyn Prover,
    cfg: &ProtocolConfig,
    challenger: &mut dyn RngCore,
) -> Result<AccessGrant, DenyReason> {
    if !verifier.is_online() {
        return Err(DenyReason::ProtocolAborted);
    }
    if ctx.now.saturating_sub(req.last_proof) > cfg.offline_threshold {
        return Err(DenyReason::ExpiredMembership);
    }
    if ctx.online.contains(&req.claimed_id) {
        return Err(DenyReason::DuplicateIdentity);
    }
    if !verifier.graph().contains(req.claimed_id) {
        return Err(DenyReason::ExpiredMembership);
    }
    if req.stage > verifier.stage() {
        return Err(DenyReason::UnknownGraph);
    }
    let known = verifier.digest_at(req.stage).ok_or(DenyReason::StageUnavailable)?;
    if graph_digest(&req.claimed_graph) != known {
        return Err(DenyReason::UnknownGraph);
    }
    match run_proof(&req.claimed_graph, transport, cfg.rounds, challenger) {
        Ok(ProofOutcome::Accepted { .. }) => Ok(AccessGrant {
            records: verifier.records_after(req.stage),
            stage: verifier.stage(),
            window: verifier.latest_window(),
        }),
        Ok(ProofOutcome::Rejected { round, reason }) => Err(DenyReason::ZkpFailed { round, reason }),
        Ok(ProofOutcome::Aborted { .. }) | Err(_) => Err(DenyReason::ProtocolAborted),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_initial_graph;
    use crate::protocol::{
        apply_deletion_update, apply_insertion_update, authenticator_insert, proof_of_life_cycle, InsertRequest,
        NodeStatus, PolOutcome,
    };
    use crate::zkp::{Challenge, ChannelClosed, Commitment, OneBranchCheater, Response};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cfg() -> ProtocolConfig {
        ProtocolConfig::new(SimTime::from_secs(10), 20, 3, 4).unwrap()
    }

    fn secs(s: u64) -> SimTime {
        SimTime::from_secs(s)
    }

    fn network(seed: u64) -> Vec<NodeState> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (g, c) = build_initial_graph(11, 22, &mut rng).unwrap();
        (0..11)
            .map(|i| NodeState::from_dealer(NodeId(i), g.clone(), c.clone(), SimTime::ZERO).unwrap())
            .collect()
    }

    fn online_except(nodes: &[NodeState]) -> BTreeSet<NodeId> {
        nodes.iter().filter(|s| s.is_online()).map(|s| s.id()).collect()
    }

    fn request(
        verifier: &NodeState,
        supplicant: &NodeState,
        online: &BTreeSet<NodeId>,
        now: SimTime,
        seed: u64,
    ) -> Result<AccessGrant, DenyReason> {
        let mut prover = supplicant.prover(ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut challenger = ChaCha8Rng::seed_from_u64(seed + 1);
        let ctx = AccessContext { now, online };
        access_control(
            verifier,
            &supplicant.access_request(),
            ctx,
            &mut prover,
            &cfg(),
            &mut challenger,
        )
    }

    #[test]
    fn staleness_boundary_is_inclusive() {
        let mut nodes = network(1);
        nodes[4].go_offline(secs(1));
        let online = online_except(&nodes);
        let edge = secs(10);
        assert!(request(&nodes[0], &nodes[4], &online, edge, 3).is_ok());
        assert_eq!(
            request(&nodes[0], &nodes[4], &online, edge + SimTime::MICROSECOND, 3),
            Err(DenyReason::ExpiredMembership)
        );
    }

    #[test]
    fn online_id_is_a_duplicate() {
        let nodes = network(2);
        let online = online_except(&nodes);
        assert_eq!(
            request(&nodes[0], &nodes[4], &online, secs(1), 3),
            Err(DenyReason::DuplicateIdentity)
        );
    }

    #[test]
    fn wrong_graph_is_unknown() {
        let mut nodes = network(3);
        nodes[4].go_offline(secs(1));
        let online = online_except(&nodes);
        let mut req = nodes[4].access_request();
        req.claimed_graph.remove_vertex(NodeId(9));
        let mut prover = nodes[4].prover(ChaCha8Rng::seed_from_u64(0)).unwrap();
        let ctx = AccessContext {
            now: secs(2),
            online: &online,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            access_control(&nodes[0], &req, ctx, &mut prover, &cfg(), &mut rng),
            Err(DenyReason::UnknownGraph)
        );
    }

    #[test]
    fn cheater_is_isolated() {
        let mut nodes = network(4);
        nodes[4].go_offline(secs(1));
        let online = online_except(&nodes);
        let mut cheater = OneBranchCheater::new(nodes[4].graph().clone(), ChaCha8Rng::seed_from_u64(5));
        let ctx = AccessContext {
            now: secs(2),
            online: &online,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let denied = access_control(
            &nodes[0],
            &nodes[4].access_request(),
            ctx,
            &mut cheater,
            &cfg(),
            &mut rng,
        );
        assert!(matches!(denied, Err(DenyReason::ZkpFailed { .. })));
    }

    struct Hangup;

    impl Prover for Hangup {
        fn commit(&mut self) -> Result<Commitment, ChannelClosed> {
            Err(ChannelClosed)
        }

        fn respond(&mut self, _: Challenge) -> Result<Response, ChannelClosed> {
            Err(ChannelClosed)
        }
    }

    #[test]
    fn transport_failure_aborts() {
        let mut nodes = network(5);
        nodes[4].go_offline(secs(1));
        let online = online_except(&nodes);
        let ctx = AccessContext {
            now: secs(2),
            online: &online,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        assert_eq!(
            access_control(
                &nodes[0],
                &nodes[4].access_request(),
                ctx,
                &mut Hangup,
                &cfg(),
                &mut rng
            ),
            Err(DenyReason::ProtocolAborted)
        );
    }

    fn window(nodes: &mut [NodeState], initiator: usize, t: SimTime) -> crate::protocol::PolSummary {
        let c = cfg();
        let w = nodes[initiator].open_window(t, &c).unwrap();
        let me = nodes[initiator].id();
        let answers: BTreeSet<NodeId> = online_except(nodes).into_iter().filter(|&v| v != me).collect();
        let PolOutcome::Summary(summary) = proof_of_life_cycle(&mut nodes[initiator], w, t, &answers, &c).unwrap()
        else {
            panic!("quorum met")
        };
        for s in nodes.iter_mut().filter(|s| s.is_online()) {
            apply_deletion_update(s, &summary, &c, t).unwrap();
        }
        summary
    }

    /// A node that missed three insertions and a deletion catches up to the
    /// verifier byte for byte.
    #[test]
    fn catch_up_converges() {
        let c = cfg();
        let ms = SimTime::from_millis;
        let mut nodes = network(6);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        assert!(window(&mut nodes, 1, ms(10_500)).deletions.is_empty());
        nodes[7].go_offline(ms(10_600));
        assert!(window(&mut nodes, 2, secs(12)).deletions.is_empty());
        nodes[4].go_offline(ms(12_500));
        for k in 0..3u64 {
            let t = secs(13 + k);
            let announced = crate::graph::assign_new_id(nodes[0].graph());
            let r = InsertRequest {
                announced,
                acks: 10,
                pair: None,
            };
            let commit = authenticator_insert(&mut nodes[0], r, &c, t, &mut rng).unwrap();
            for s in nodes.iter_mut().skip(1).filter(|s| s.is_online()) {
                apply_insertion_update(s, &commit.broadcast, &c, t).unwrap();
            }
        }
        let summary = window(&mut nodes, 3, secs(21));
        assert_eq!(summary.deletions, BTreeSet::from([NodeId(7)]));

        let online = online_except(&nodes);
        let now = secs(22);
        let grant = request(&nodes[2], &nodes[4], &online, now, 8).unwrap();
        assert_eq!(grant.records.iter().filter(|r| r.changes_graph()).count(), 4);
        nodes[4].apply_grant(&grant, &c, now).unwrap();
        assert_eq!(nodes[4].status(), NodeStatus::Online);
        assert_eq!(nodes[4].stage(), nodes[2].stage());
        assert_eq!(nodes[4].replica_bytes(), nodes[2].replica_bytes());
    }
}
