//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use gasman::graph::{
    assign_new_id, build_initial_graph, splice_delete, splice_insert, Graph, HamiltonianCycle, NodeId,
};
use gasman::protocol::{
    access_control, apply_deletion_update, apply_insertion_update, authenticator_insert, proof_of_life_cycle,
    AccessContext, DenyReason, InsertAbort, InsertRequest, NodeState, PolOutcome, PolSummary, ProtocolConfig,
    SybilRule, WindowId,
};
use gasman::sim::{
    format_trace, run_scenario, Action, Churn, Connectivity, Geometric, MessageClass, ScenarioConfig, ScriptedAction,
};
use gasman::zkp::{graph_digest, run_proof, OneBranchCheater};
use gasman::SimTime;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ids(v: &[u32]) -> BTreeSet<NodeId> {
    v.iter().copied().map(NodeId).collect()
}

fn walk(hc: &HamiltonianCycle) -> String {
    let order = hc.walk_from(NodeId(8), NodeId(3)).expect("8 and 3 are cycle neighbors");
    order.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn table_splices() -> Verdict {
    let hc = HamiltonianCycle::from_ids(&[8, 3, 9, 7, 4, 2, 6, 5, 1, 10, 0]).unwrap();
    let g = Graph::cycle_graph(hc.as_slice()).unwrap();
    let (g, hc) = splice_insert(&g, &hc, NodeId(14), &ids(&[4, 2])).map_err(|e| e.to_string())?;
    let first = walk(&hc);
    let (g, hc) = splice_delete(&g, &hc, NodeId(5)).map_err(|e| e.to_string())?;
    let second = walk(&hc);
    let (_, hc) = splice_insert(&g, &hc, NodeId(13), &ids(&[2, 6])).map_err(|e| e.to_string())?;
    let third = walk(&hc);
    let want = [
        "8,3,9,7,4,14,2,6,5,1,10,0",
        "8,3,9,7,4,14,2,6,1,10,0",
        "8,3,9,7,4,14,2,13,6,1,10,0",
    ];
    let got = [first, second, third];
    ensure(got == want, || format!("got {got:?}"))?;
    Ok("three snapshots match".into())
}

fn zkp_completeness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0);
    for trial in 0..1000 {
        let n = rng.gen_range(8..=64usize);
        let degree = loop {
            let d = rng.gen_range(3..=6usize);
            if (n * d) % 2 == 0 {
                break d;
            }
        };
        let (g, c) = build_initial_graph(n, n * degree / 2, &mut rng).map_err(|e| e.to_string())?;
        let node = NodeState::from_dealer(NodeId(0), g.clone(), c, SimTime::ZERO).map_err(|e| e.to_string())?;
        let mut prover = node
            .prover(ChaCha8Rng::seed_from_u64(rng.gen()))
            .map_err(|e| e.to_string())?;
        let outcome = run_proof(&g, &mut prover, 20, &mut rng).map_err(|e| e.to_string())?;
        ensure(outcome.is_accepted(), || {
            format!("trial {trial} (n = {n}): {outcome:?}")
        })?;
    }
    Ok("1000 of 1000 accepted".into())
}

fn cheater_accepts(g: &Graph, rounds: u32, trials: u32, seed: u64) -> u32 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cheater = OneBranchCheater::new(g.clone(), ChaCha8Rng::seed_from_u64(seed ^ 0x5EED));
    (0..trials)
        .filter(|_| run_proof(g, &mut cheater, rounds, &mut rng).unwrap().is_accepted())
        .count() as u32
}

fn zkp_soundness() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(0x50);
    let (g, _) = build_initial_graph(8, 16, &mut rng).unwrap();
    let single = cheater_accepts(&g, 1, 10_000, 1) as f64 / 10_000.0;
    ensure((single - 0.5).abs() <= 0.02, || format!("single-round rate {single}"))?;
    let n = 1_000_000f64;
    let p = 2f64.powi(-10);
    let accepted = cheater_accepts(&g, 10, 1_000_000, 2) as f64;
    let sigma = (n * p * (1.0 - p)).sqrt();
    let z = (accepted - n * p) / sigma;
    ensure(z.abs() <= 3.0, || format!("ten-round accepts {accepted}, z = {z:.2}"))?;
    Ok(format!(
        "single-round {single:.4}; ten-round {accepted} of 1e6 (expected {:.1}, z = {z:.2})",
        n * p
    ))
}

fn proto_cfg() -> ProtocolConfig {
    ProtocolConfig::new(SimTime::from_secs(10), 20, 3, 4).unwrap()
}

fn dealer(seed: u64, n: usize, members: u32) -> Vec<NodeState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, c) = build_initial_graph(n, 2 * n, &mut rng).unwrap();
    (0..members)
        .map(|i| NodeState::from_dealer(NodeId(i), g.clone(), c.clone(), SimTime::ZERO).unwrap())
        .collect()
}

fn replica_convergence() -> Verdict {
    let cfg = proto_cfg();
    let mut rng = ChaCha8Rng::seed_from_u64(0x4E);
    let mut total_ops = 0usize;
    for seq in 0..500u64 {
        let mut reps = dealer(seq, 10, 5);
        let len = rng.gen_range(1..=200usize);
        for op in 0..len {
            let now = SimTime::from_secs(op as u64 + 1);
            let k = op % 5;
            let order = reps[k].graph().order();
            let deletable: Vec<NodeId> = reps[k].graph().vertices().filter(|v| v.0 >= 5).collect();
            let delete = order > 6 && !deletable.is_empty() && (order >= 40 || rng.gen_bool(0.5));
            if delete {
                let victim = deletable[rng.gen_range(0..deletable.len())];
                let s = &reps[k];
                let summary = PolSummary {
                    window: WindowId {
                        initiator: s.id(),
                        seq: op as u32,
                    },
                    stage: s.stage(),
                    base: graph_digest(s.graph()),
                    timestamp: now,
                    alive: ids(&[0, 1, 2, 3, 4]),
                    deletions: [victim].into(),
                };
                for r in reps.iter_mut() {
                    apply_deletion_update(r, &summary, &cfg, now).map_err(|e| format!("seq {seq} op {op}: {e}"))?;
                }
            } else {
                let req = InsertRequest {
                    announced: assign_new_id(reps[k].graph()),
                    acks: order,
                    pair: None,
                };
                let commit = authenticator_insert(&mut reps[k], req, &cfg, now, &mut rng)
                    .map_err(|e| format!("seq {seq} op {op}: {e}"))?;
                for (j, r) in reps.iter_mut().enumerate() {
                    if j != k {
                        apply_insertion_update(r, &commit.broadcast, &cfg, now)
                            .map_err(|e| format!("seq {seq} op {op}: {e}"))?;
                    }
                }
            }
            let bytes = reps[0].replica_bytes();
            ensure(reps.iter().all(|r| r.replica_bytes() == bytes), || {
                format!("replicas diverge at seq {seq} op {op}")
            })?;
            total_ops += 1;
        }
    }
    Ok(format!("{total_ops} ops over 500 sequences, identical after each"))
}

fn expiry_boundary() -> Verdict {
    let cfg = proto_cfg();
    let t = cfg.offline_threshold;
    let attempt = |now: SimTime| -> Result<(NodeState, NodeState), DenyReason> {
        let mut nodes = dealer(7, 11, 11);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        nodes[4].go_offline(SimTime::from_secs(1));
        // One insertion to catch up on.
        let req = InsertRequest {
            announced: assign_new_id(nodes[0].graph()),
            acks: 10,
            pair: None,
        };
        let commit = authenticator_insert(&mut nodes[0], req, &cfg, SimTime::from_secs(2), &mut rng).unwrap();
        let online: BTreeSet<NodeId> = nodes.iter().filter(|s| s.is_online()).map(|s| s.id()).collect();
        let mut prover = nodes[4].prover(ChaCha8Rng::seed_from_u64(9)).unwrap();
        let ctx = AccessContext { now, online: &online };
        let grant = access_control(&nodes[0], &nodes[4].access_request(), ctx, &mut prover, &cfg, &mut rng)?;
        let mut back = nodes[4].clone();
        back.apply_grant(&grant, &cfg, now).unwrap();
        assert_eq!(grant.records.len(), 1, "{:?}", commit.broadcast);
        Ok((back, nodes[0].clone()))
    };
    let (back, verifier) = attempt(t).map_err(|e| format!("staleness = T denied: {e}"))?;
    ensure(back.replica_bytes() == verifier.replica_bytes(), || {
        "catch-up diverged".into()
    })?;
    match attempt(t + SimTime::MICROSECOND) {
        Err(e @ DenyReason::ExpiredMembership) => {
            ensure(e.to_string() == "expired membership", || format!("message {e}"))?;
        }
        other => return Err(format!("staleness = T + 1us: {:?}", other.map(|_| "granted"))),
    }
    Ok("T grants and catches up; T + 1us is expired membership".into())
}

fn quorum_boundaries() -> Verdict {
    let cfg = proto_cfg();
    for n in [10usize, 11] {
        let needed = n.div_ceil(2);
        let mut nodes = dealer(n as u64, n, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let now = SimTime::from_secs(1);
        let req = |acks| InsertRequest {
            announced: NodeId(n as u32),
            acks,
            pair: None,
        };
        let low = authenticator_insert(&mut nodes[0], req(needed - 1), &cfg, now, &mut rng);
        ensure(matches!(low, Err(InsertAbort::QuorumNotMet { .. })), || {
            format!("n = {n}: {low:?}")
        })?;
        let at = authenticator_insert(&mut nodes[0], req(needed), &cfg, now, &mut rng);
        ensure(at.is_ok(), || format!("n = {n}, {needed} acks: {at:?}"))?;
    }
    let t = SimTime::from_secs(11);
    let mut nodes = dealer(3, 11, 11);
    let w = nodes[0].open_window(t, &cfg).unwrap();
    let five = proof_of_life_cycle(&mut nodes[0], w, t, &ids(&[1, 2, 3, 4, 5]), &cfg).unwrap();
    ensure(matches!(five, PolOutcome::Aborted { answers: 5, needed: 6 }), || {
        format!("5 answers: {five:?}")
    })?;
    let w = nodes[1].open_window(t, &cfg).unwrap();
    let six = proof_of_life_cycle(&mut nodes[1], w, t, &ids(&[0, 2, 3, 4, 5, 6]), &cfg).unwrap();
    ensure(matches!(six, PolOutcome::Summary(_)), || format!("6 answers: {six:?}"))?;
    Ok("insertion aborts at ceil(n/2)-1 and commits at ceil(n/2); 5 of 11 answers abort, 6 summarize".into())
}

fn traffic_shares() -> Verdict {
    let cfg = ScenarioConfig::full_mesh(30, 10.0, 0.1, 200.0, 1);
    let r = run_scenario(&cfg).map_err(|e| e.to_string())?;
    let zkp = r.metrics.share(MessageClass::Zkp);
    let pol = r.metrics.share(MessageClass::ProofOfLife);
    let detail = format!("zkp {zkp:.4}, proof_of_life {pol:.4}, outcome {:?}", r.outcome);
    ensure(zkp < 0.15 && pol > 0.60, || detail.clone())?;
    Ok(detail)
}

fn geometric(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        connectivity: Connectivity::Geometric(Geometric {
            area_side: 250.0,
            speed_max: 20.0,
            pause: 0.5,
            data_range: 250.0,
            secure_range: 5.0,
        }),
        ..ScenarioConfig::full_mesh(15, 10.0, 0.1, 100.0, seed)
    }
}

fn determinism() -> Verdict {
    for cfg in [ScenarioConfig::full_mesh(30, 10.0, 0.25, 200.0, 42), geometric(42)] {
        let a = run_scenario(&cfg).map_err(|e| e.to_string())?;
        let b = run_scenario(&cfg).map_err(|e| e.to_string())?;
        ensure(format_trace(&a.trace) == format_trace(&b.trace), || {
            "traces differ".into()
        })?;
        ensure(a.metrics.to_json() == b.metrics.to_json(), || "metrics differ".into())?;
    }
    Ok("full mesh and geometric runs repeat byte for byte".into())
}

fn scripted(seed: u64, action: Action) -> ScenarioConfig {
    ScenarioConfig {
        churn: Churn::NONE,
        t: 5.0,
        script: vec![ScriptedAction { at: 1.0, action }],
        ..ScenarioConfig::full_mesh(11, 5.0, 0.0, 20.0, seed)
    }
}

fn sybil_detection() -> Verdict {
    let cases = [
        (
            Action::SybilAccess { claimed_id: 3 },
            SybilRule::DuplicateAccess,
            "duplicate identity",
        ),
        (
            Action::SybilInsert { claimed_id: 3 },
            SybilRule::DuplicateInsertion,
            "flagged",
        ),
        (
            Action::SybilAnswers { ids: vec![3, 7] },
            SybilRule::MultiIdentityAnswers,
            "flagged",
        ),
    ];
    for (action, rule, text) in cases {
        let r = run_scenario(&scripted(5, action.clone())).map_err(|e| e.to_string())?;
        ensure(
            r.flags.iter().any(|f| f.rule == rule && f.ids.contains(&NodeId(3))),
            || format!("{action:?}: flags {:?}", r.flags),
        )?;
        ensure(r.trace.iter().any(|e| e.event.contains(text)), || {
            format!("{action:?}: no {text:?} line")
        })?;
    }
    let benign = run_scenario(&ScenarioConfig::full_mesh(20, 10.0, 0.2, 200.0, 9)).map_err(|e| e.to_string())?;
    ensure(benign.trace.len() >= 200, || {
        format!("benign run has {} events", benign.trace.len())
    })?;
    ensure(benign.flags.is_empty(), || format!("benign flags {:?}", benign.flags))?;
    Ok(format!(
        "three attacks flagged; benign run of {} events has no flags",
        benign.trace.len()
    ))
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("splice reproduction", table_splices, Duration::from_secs(1)),
        ("zkp completeness", zkp_completeness, Duration::from_secs(30)),
        ("zkp soundness", zkp_soundness, Duration::from_secs(300)),
        ("replica convergence", replica_convergence, Duration::from_secs(120)),
        ("expiry boundary", expiry_boundary, Duration::from_secs(1)),
        ("quorum boundaries", quorum_boundaries, Duration::from_secs(1)),
        ("traffic shares", traffic_shares, Duration::from_secs(60)),
        ("determinism", determinism, Duration::from_secs(60)),
        ("sybil detection", sybil_detection, Duration::from_secs(30)),
    ];
    let mut failed = 0;
    for (i, (name, check, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = check();
        let took = start.elapsed();
        let verdict = match verdict {
            Ok(_) if took > budget => Err(format!("took {took:.2?}, budget {budget:?}")),
            v => v,
        };
        match verdict {
            Ok(detail) => println!("criterion {} {name}: PASS ({detail}; {took:.2?})", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {} {name}: FAIL ({why})", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
