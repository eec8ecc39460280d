use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{assign_new_id, build_initial_graph, build_initial_graph_with_cycle, HamiltonianCycle, NodeId};
use crate::protocol::{
    access_control, apply_deletion_update, apply_insertion_update, authenticator_insert, check_termination,
    proof_of_life_cycle, AccessContext, AccessRequest, DenyReason, Envelope, InsertRequest, LinkAddr,
    NeighborSetBroadcast, NodeState, NodeStatus, PolOutcome, PolSummary, ProtocolConfig, ProtocolMessage,
    SybilDetector, SybilFlag, SybilRule, Termination, WindowId,
};
use crate::zkp::{Challenge, ChannelClosed, Commitment, OneBranchCheater, Prover, Response};
use crate::SimTime;

use super::config::{Action, ConfigError, Connectivity, ScenarioConfig};
use super::metrics::TrafficMetrics;
use super::mobility::{step_mobility, Point, Walker};
use super::radio::{broadcast_deliver, link, Reach};
use super::trace::TraceEvent;

/// One radio hop.
pub const HOP: SimTime = SimTime::from_millis(10);
/// Answers to a proof-of-life window leave within this long.
pub const ANSWER_SPREAD: SimTime = SimTime::from_millis(300);
const RETRY: SimTime = SimTime::from_secs(1);
const TICK: SimTime = SimTime::from_millis(100);
const CHURN_PERIOD: SimTime = SimTime::from_secs(1);
const MAX_INSERT_ATTEMPTS: u32 = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Completed,
    Terminated { at: SimTime },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunStats {
    pub insertions: u64,
    pub aborted_insertions: u64,
    pub refused_admissions: u64,
    pub deletions: u64,
    pub windows: u64,
    pub aborted_windows: u64,
    pub grants: u64,
    pub denials: u64,
    pub resyncs: u64,
    pub forwards: u64,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub trace: Vec<TraceEvent>,
    pub metrics: TrafficMetrics,
    pub outcome: Outcome,
    pub flags: BTreeSet<SybilFlag>,
    pub stats: RunStats,
    pub online_at_end: usize,
}

/// Runs a scenario to its end or to network termination.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport, ConfigError> {
    let mut sim = Simulation::new(cfg)?;
    sim.run_until(SimTime::from_secs_f64(cfg.duration));
    Ok(sim.finish())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Mode {
    Member,
    /// Powered off while holding a replica.
    Off,
    SeekAccess,
    SeekInsertion,
    /// Insertion in flight.
    Joining,
    Gone,
}

#[derive(Clone, Debug)]
struct Device {
    link: LinkAddr,
    node: Option<NodeState>,
    mode: Mode,
    walker: Option<Walker>,
    timer_gen: u64,
    /// A retry is already queued.
    pending: bool,
    attempts: u32,
    /// Scripted authenticator, splice pair and preferred verifier.
    via: Option<NodeId>,
    pair: Option<(NodeId, NodeId)>,
    /// Scripted insertions skip the admission draw.
    scripted: bool,
}

impl Device {
    fn new(link: LinkAddr, node: Option<NodeState>, mode: Mode, walker: Option<Walker>) -> Self {
        Device {
            link,
            node,
            mode,
            walker,
            timer_gen: 0,
            pending: false,
            attempts: 0,
            via: None,
            pair: None,
            scripted: false,
        }
    }

    fn id(&self) -> Option<NodeId> {
        self.node.as_ref().map(|n| n.id())
    }

    fn state(&self) -> &NodeState {
        self.node.as_ref().expect("device holds a replica")
    }

    fn state_mut(&mut self) -> &mut NodeState {
        self.node.as_mut().expect("device holds a replica")
    }
}

#[derive(Clone, Debug)]
enum Ev {
    Churn,
    Mobility,
    Script(usize),
    Retry {
        dev: usize,
    },
    PolTimer {
        dev: usize,
        gen: u64,
    },
    PolAnswer {
        w: WindowId,
        from: Option<usize>,
        as_id: NodeId,
        link: LinkAddr,
    },
    PolClose {
        w: WindowId,
    },
    SummaryArrive {
        from: usize,
        summary: PolSummary,
    },
    InsertCommit {
        dev: usize,
        auth: usize,
        announced: NodeId,
        acks: usize,
    },
    NeighborSetArrive {
        from: usize,
        joined: usize,
        b: NeighborSetBroadcast,
    },
}

#[derive(Clone, Debug)]
struct Window {
    initiator: usize,
    started: SimTime,
    answers: BTreeMap<NodeId, BTreeSet<LinkAddr>>,
}

/// Zkp transport that bills every message it carries.
struct Metered<'a> {
    inner: &'a mut dyn Prover,
    metrics: &'a mut TrafficMetrics,
}

impl Prover for Metered<'_> {
    fn commit(&mut self) -> Result<Commitment, ChannelClosed> {
        let c = self.inner.commit()?;
        self.metrics.record(&ProtocolMessage::ZkpCommit(c), 1);
        Ok(c)
    }

    fn respond(&mut self, challenge: Challenge) -> Result<Response, ChannelClosed> {
        self.metrics.record(&ProtocolMessage::ZkpChallenge(challenge), 1);
        let r = self.inner.respond(challenge)?;
        self.metrics.record(&ProtocolMessage::ZkpResponse(r.clone()), 1);
        Ok(r)
    }
}

fn list(ids: &[NodeId]) -> String {
    ids.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(", ")
}

/// A discrete-event run of one scenario.
pub struct Simulation {
    cfg: ScenarioConfig,
    pcfg: ProtocolConfig,
    now: SimTime,
    seq: u64,
    queue: BTreeMap<(SimTime, u64), Ev>,
    devices: Vec<Device>,
    windows: BTreeMap<WindowId, Window>,
    /// A graph update is between announcement and delivery.
    update_lock: bool,
    detector: SybilDetector,
    reported: BTreeSet<(SybilRule, LinkAddr)>,
    sybil_answers: Option<(LinkAddr, Vec<NodeId>)>,
    next_link: u64,
    trace: Vec<TraceEvent>,
    metrics: TrafficMetrics,
    stats: RunStats,
    outcome: Outcome,
    rng_churn: ChaCha8Rng,
    rng_move: ChaCha8Rng,
    rng_proto: ChaCha8Rng,
    rng_delay: ChaCha8Rng,
}

fn stream(seed: u64, k: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(k);
    r
}

impl Simulation {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let pcfg = cfg.protocol()?;
        let mut rng_init = stream(cfg.seed, 0);
        let graph_err = |e: crate::graph::GraphError| ConfigError::Invalid(e.to_string());
        let (graph, cycle) = match &cfg.initial_cycle {
            Some(ids) => {
                let c = HamiltonianCycle::from_ids(ids).map_err(graph_err)?;
                (
                    build_initial_graph_with_cycle(&c, cfg.m, &mut rng_init).map_err(graph_err)?,
                    c,
                )
            }
            None => build_initial_graph(cfg.n_initial, cfg.m, &mut rng_init).map_err(graph_err)?,
        };
        let mut sim = Simulation {
            cfg: cfg.clone(),
            pcfg,
            now: SimTime::ZERO,
            seq: 0,
            queue: BTreeMap::new(),
            devices: Vec::new(),
            windows: BTreeMap::new(),
            update_lock: false,
            detector: SybilDetector::new(),
            reported: BTreeSet::new(),
            sybil_answers: None,
            next_link: 0,
            trace: Vec::new(),
            metrics: TrafficMetrics::new(),
            stats: RunStats::default(),
            outcome: Outcome::Completed,
            rng_churn: stream(cfg.seed, 1),
            rng_move: stream(cfg.seed, 2),
            rng_proto: stream(cfg.seed, 3),
            rng_delay: stream(cfg.seed, 4),
        };
        let ids: Vec<NodeId> = graph.vertices().collect();
        for &id in &ids {
            let node = NodeState::from_dealer(id, graph.clone(), cycle.clone(), SimTime::ZERO)
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            sim.add_device(Some(node), Mode::Member);
        }
        sim.log(format!("{} are legitimate", list(&ids)), Some(cycle));
        for d in 0..sim.devices.len() {
            sim.arm_timer(d);
        }
        let c = cfg.churn;
        if c.insertion_request > 0.0 || c.node_turn_off > 0.0 || c.node_turn_on > 0.0 {
            sim.schedule(CHURN_PERIOD, Ev::Churn);
        }
        if matches!(cfg.connectivity, Connectivity::Geometric(_)) {
            sim.schedule(TICK, Ev::Mobility);
        }
        for (i, a) in cfg.script.iter().enumerate() {
            sim.schedule(SimTime::from_secs_f64(a.at), Ev::Script(i));
        }
        sim.check_termination();
        Ok(sim)
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn outcome(&self) -> Outcome {
        self.outcome
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    /// Replicas of the nodes currently online.
    pub fn members(&self) -> impl Iterator<Item = &NodeState> + '_ {
        self.devices
            .iter()
            .filter(|d| d.mode == Mode::Member)
            .map(|d| d.state())
    }

    /// No graph update is in flight.
    pub fn is_quiescent(&self) -> bool {
        !self.update_lock
    }

    /// Processes every event up to and including `end`.
    pub fn run_until(&mut self, end: SimTime) {
        while matches!(self.outcome, Outcome::Completed) {
            let Some(entry) = self.queue.first_entry() else { break };
            let (t, _) = *entry.key();
            if t > end {
                break;
            }
            let ev = entry.remove();
            self.now = t;
            self.handle(ev);
        }
        if matches!(self.outcome, Outcome::Completed) {
            self.now = self.now.max(end);
        }
    }

    pub fn finish(self) -> RunReport {
        let online_at_end = self.members().count();
        RunReport {
            trace: self.trace,
            metrics: self.metrics,
            outcome: self.outcome,
            flags: self.detector.flags(),
            stats: self.stats,
            online_at_end,
        }
    }

    fn schedule(&mut self, at: SimTime, ev: Ev) {
        self.queue.insert((at, self.seq), ev);
        self.seq += 1;
    }

    fn log(&mut self, event: String, hc: Option<HamiltonianCycle>) {
        self.trace.push(TraceEvent {
            time: self.now,
            event,
            hc,
        });
    }

    fn add_device(&mut self, node: Option<NodeState>, mode: Mode) -> usize {
        let walker = match &self.cfg.connectivity {
            Connectivity::Geometric(g) => Some(Walker::new(g, &mut self.rng_move)),
            Connectivity::FullMesh => None,
        };
        let link = self.fresh_link();
        self.devices.push(Device::new(link, node, mode, walker));
        self.devices.len() - 1
    }

    fn fresh_link(&mut self) -> LinkAddr {
        self.next_link += 1;
        LinkAddr(self.next_link)
    }

    fn is_geometric(&self) -> bool {
        matches!(self.cfg.connectivity, Connectivity::Geometric(_))
    }

    fn pos(&self, d: usize) -> Point {
        self.devices[d]
            .walker
            .as_ref()
            .map_or(Point { x: 0.0, y: 0.0 }, |w| w.pos)
    }

    fn member_positions(&self) -> Vec<Option<Point>> {
        (0..self.devices.len())
            .map(|d| (self.devices[d].mode == Mode::Member).then(|| self.pos(d)))
            .collect()
    }

    /// Members a broadcast from `src` reaches, `src` excluded.
    fn flood(&mut self, src: usize) -> Vec<usize> {
        let mut positions = self.member_positions();
        positions[src] = Some(self.pos(src));
        let f = broadcast_deliver(&self.cfg.connectivity, src, &positions);
        self.stats.forwards += f.forwards.iter().map(|&k| k as u64).sum::<u64>();
        f.reached
    }

    /// Multi-hop data path between two devices over online relays.
    fn routable(&self, a: usize, b: usize) -> bool {
        if !self.is_geometric() || a == b {
            return true;
        }
        let mut positions = self.member_positions();
        positions[a] = Some(self.pos(a));
        positions[b] = Some(self.pos(b));
        broadcast_deliver(&self.cfg.connectivity, a, &positions)
            .reached
            .contains(&b)
    }

    fn secure(&self, a: usize, b: usize) -> bool {
        link(&self.cfg.connectivity, self.pos(a), self.pos(b)) == Reach::DataAndSecure
    }

    fn online_ids(&self) -> BTreeSet<NodeId> {
        self.members().map(|s| s.id()).collect()
    }

    fn member_with_id(&self, id: NodeId) -> Option<usize> {
        (0..self.devices.len()).find(|&d| self.devices[d].mode == Mode::Member && self.devices[d].id() == Some(id))
    }

    fn arm_timer(&mut self, d: usize) {
        let dev = &mut self.devices[d];
        dev.timer_gen += 1;
        let gen = dev.timer_gen;
        let due = dev.state().pol_due_at(&self.pcfg).max(self.now);
        self.schedule(due, Ev::PolTimer { dev: d, gen });
    }

    fn retry_later(&mut self, d: usize) {
        // On a geometric field the mobility tick retries.
        if !self.is_geometric() && !self.devices[d].pending {
            self.devices[d].pending = true;
            self.schedule(self.now + RETRY, Ev::Retry { dev: d });
        }
    }

    fn check_termination(&mut self) {
        if !matches!(self.outcome, Outcome::Completed) {
            return;
        }
        let online = self.members().count();
        if check_termination(online, &self.pcfg) == Termination::Terminate {
            self.outcome = Outcome::Terminated { at: self.now };
            self.log(format!("Network terminated: {online} nodes online"), None);
        }
    }

    fn report_flags(&mut self) {
        for f in self.detector.flags() {
            if self.reported.insert((f.rule, f.link)) {
                let ids: Vec<NodeId> = f.ids.iter().copied().collect();
                self.log(
                    format!("Link {} flagged for {} (ids {})", f.link.0, f.rule, list(&ids)),
                    None,
                );
            }
        }
    }

    fn handle(&mut self, ev: Ev) {
        match ev {
            Ev::Churn => self.on_churn(),
            Ev::Mobility => self.on_mobility(),
            Ev::Script(i) => self.on_script(i),
            Ev::Retry { dev } => {
                self.devices[dev].pending = false;
                match self.devices[dev].mode {
                    Mode::SeekAccess => self.try_access(dev, false),
                    Mode::SeekInsertion => self.try_insert(dev),
                    _ => {}
                }
            }
            Ev::PolTimer { dev, gen } => self.on_pol_timer(dev, gen),
            Ev::PolAnswer { w, from, as_id, link } => self.on_pol_answer(w, from, as_id, link),
            Ev::PolClose { w } => self.on_pol_close(w),
            Ev::SummaryArrive { from, summary } => self.on_summary(from, summary),
            Ev::InsertCommit {
                dev,
                auth,
                announced,
                acks,
            } => self.on_insert_commit(dev, auth, announced, acks),
            Ev::NeighborSetArrive { from, joined, b } => self.on_neighbor_set(from, joined, b),
        }
    }

    fn on_churn(&mut self) {
        let c = self.cfg.churn;
        if self.rng_churn.gen_bool(c.insertion_request) {
            let d = self.add_device(None, Mode::SeekInsertion);
            self.try_insert(d);
        }
        if self.rng_churn.gen_bool(c.node_turn_off) {
            let members: Vec<usize> = (0..self.devices.len())
                .filter(|&d| self.devices[d].mode == Mode::Member)
                .collect();
            if let Some(&d) = members.choose(&mut self.rng_churn) {
                self.turn_off(d);
            }
        }
        if self.rng_churn.gen_bool(c.node_turn_on) {
            let off: Vec<usize> = (0..self.devices.len())
                .filter(|&d| self.devices[d].mode == Mode::Off)
                .collect();
            if let Some(&d) = off.choose(&mut self.rng_churn) {
                self.turn_on(d);
            }
        }
        self.schedule(self.now + CHURN_PERIOD, Ev::Churn);
    }

    fn on_mobility(&mut self) {
        let Connectivity::Geometric(g) = self.cfg.connectivity else {
            return;
        };
        let mut walkers: Vec<Walker> = self.devices.iter_mut().filter_map(|d| d.walker.take()).collect();
        step_mobility(&mut walkers, &g, TICK.as_secs_f64(), &mut self.rng_move);
        for (d, w) in self.devices.iter_mut().zip(walkers) {
            d.walker = Some(w);
        }
        for d in 0..self.devices.len() {
            match self.devices[d].mode {
                Mode::SeekAccess => self.try_access(d, false),
                Mode::SeekInsertion => self.try_insert(d),
                _ => {}
            }
        }
        self.schedule(self.now + TICK, Ev::Mobility);
    }

    fn turn_off(&mut self, d: usize) {
        let now = self.now;
        let dev = &mut self.devices[d];
        dev.state_mut().go_offline(now);
        dev.mode = Mode::Off;
        let id = dev.state().id();
        self.log(format!("Node {id} turns off"), None);
        self.check_termination();
    }

    fn turn_on(&mut self, d: usize) {
        self.devices[d].mode = Mode::SeekAccess;
        if self.is_geometric() {
            let id = self.devices[d].state().id();
            self.log(format!("Node {id} turns on"), None);
            self.try_access(d, false);
        } else {
            self.try_access(d, true);
        }
    }

    fn resync(&mut self, d: usize) {
        let now = self.now;
        let dev = &mut self.devices[d];
        dev.state_mut().go_offline(now);
        dev.mode = Mode::SeekAccess;
        let id = dev.state().id();
        self.stats.resyncs += 1;
        self.log(format!("Node {id} is out of sync and seeks access control"), None);
        self.check_termination();
        self.retry_later(d);
    }

    /// Forget the old identity and queue up as a new device.
    fn become_newcomer(&mut self, d: usize) {
        let dev = &mut self.devices[d];
        dev.node = None;
        dev.mode = Mode::SeekInsertion;
        dev.attempts = 0;
        dev.via = None;
        dev.pair = None;
        self.retry_later(d);
    }

    fn on_script(&mut self, i: usize) {
        let action = self.cfg.script[i].action.clone();
        match action {
            Action::Insert { authenticator, between } => {
                let d = self.add_device(None, Mode::SeekInsertion);
                let dev = &mut self.devices[d];
                dev.via = Some(NodeId(authenticator));
                dev.pair = between.map(|[a, b]| (NodeId(a), NodeId(b)));
                dev.scripted = true;
                self.try_insert(d);
            }
            Action::TurnOff { node } => match self.member_with_id(NodeId(node)) {
                Some(d) => self.turn_off(d),
                None => self.log(format!("Node {node} is not online; turn-off skipped"), None),
            },
            Action::TurnOn { node, verifier } => {
                let found = (0..self.devices.len())
                    .find(|&d| self.devices[d].mode == Mode::Off && self.devices[d].id() == Some(NodeId(node)));
                match found {
                    Some(d) => {
                        self.devices[d].via = verifier.map(NodeId);
                        self.turn_on(d);
                    }
                    None => self.log(format!("Node {node} is not off; turn-on skipped"), None),
                }
            }
            Action::SybilAccess { claimed_id } => self.sybil_access(NodeId(claimed_id)),
            Action::SybilInsert { claimed_id } => self.sybil_insert(NodeId(claimed_id)),
            Action::SybilAnswers { ids } => {
                let link = self.fresh_link();
                self.sybil_answers = Some((link, ids.into_iter().map(NodeId).collect()));
            }
        }
    }

    // Proof of life.

    fn on_pol_timer(&mut self, d: usize, gen: u64) {
        let dev = &self.devices[d];
        if dev.timer_gen != gen || dev.mode != Mode::Member {
            return;
        }
        if self.windows.values().any(|w| w.initiator == d) {
            return;
        }
        let now = self.now;
        let Some(w) = self.devices[d].state_mut().open_window(now, &self.pcfg) else {
            self.arm_timer(d);
            return;
        };
        self.stats.windows += 1;
        self.log(format!("Proof of life started by Node {}", w.initiator), None);
        self.windows.insert(
            w,
            Window {
                initiator: d,
                started: now,
                answers: BTreeMap::new(),
            },
        );
        let recipients = self.flood(d);
        self.metrics
            .record(&ProtocolMessage::PolInitiate { window: w }, recipients.len());
        for r in recipients {
            let delay = self.answer_delay();
            let dev = &self.devices[r];
            let ev = Ev::PolAnswer {
                w,
                from: Some(r),
                as_id: dev.state().id(),
                link: dev.link,
            };
            self.schedule(now + delay, ev);
        }
        if let Some((link, ids)) = self.sybil_answers.take() {
            for as_id in ids {
                let delay = self.answer_delay();
                self.schedule(
                    now + delay,
                    Ev::PolAnswer {
                        w,
                        from: None,
                        as_id,
                        link,
                    },
                );
            }
        }
        self.schedule(now + HOP + ANSWER_SPREAD + HOP, Ev::PolClose { w });
    }

    /// Initiate hop, a uniform reply delay, reply hop.
    fn answer_delay(&mut self) -> SimTime {
        let spread = self.rng_delay.gen_range(0..=ANSWER_SPREAD.as_micros());
        HOP + SimTime::from_micros(spread) + HOP
    }

    fn on_pol_answer(&mut self, w: WindowId, from: Option<usize>, as_id: NodeId, link: LinkAddr) {
        let Some(initiator) = self.windows.get(&w).map(|x| x.initiator) else {
            return;
        };
        if let Some(r) = from {
            if self.devices[r].mode != Mode::Member || !self.routable(r, initiator) {
                return;
            }
        }
        let msg = ProtocolMessage::PolAnswer { window: w, from: as_id };
        self.metrics.record(&msg, 1);
        let online = self.online_ids();
        let init_state = self.devices[initiator].state();
        let env = Envelope {
            link,
            sender: Some(as_id),
            stage: init_state.stage(),
            msg,
        };
        self.detector.observe(init_state, &online, &env);
        self.windows
            .get_mut(&w)
            .expect("window is open")
            .answers
            .entry(as_id)
            .or_default()
            .insert(link);
        self.report_flags();
    }

    fn on_pol_close(&mut self, w: WindowId) {
        let Some(win) = self.windows.remove(&w) else { return };
        self.detector.close_window(w);
        let d = win.initiator;
        if self.devices[d].mode != Mode::Member {
            return;
        }
        let answers: BTreeSet<NodeId> = win
            .answers
            .iter()
            .filter(|(_, links)| links.iter().any(|&l| !self.detector.is_flagged(l)))
            .map(|(&id, _)| id)
            .collect();
        let outcome = proof_of_life_cycle(self.devices[d].state_mut(), w, win.started, &answers, &self.pcfg)
            .expect("initiator is online");
        let me = w.initiator;
        match outcome {
            PolOutcome::Aborted { answers, needed } => {
                self.stats.aborted_windows += 1;
                self.log(
                    format!("Proof of life by Node {me} aborted: {answers} answers, {needed} needed"),
                    None,
                );
            }
            PolOutcome::Summary(mut summary) => {
                if self.update_lock {
                    // Another graph update is in flight; deletions wait for
                    // a later window.
                    summary.deletions.clear();
                }
                let state = self.devices[d].state();
                let silent: Vec<NodeId> = state
                    .graph()
                    .vertices()
                    .filter(|v| !summary.alive.contains(v))
                    .collect();
                let mut hc = state.cycle().expect("online").clone();
                match silent.as_slice() {
                    [] => {}
                    [v] => self.log(format!("Node {v} does not answer to the proof of life"), None),
                    vs => self.log(format!("Nodes {} do not answer to the proof of life", list(vs)), None),
                }
                let now = self.now;
                apply_deletion_update(self.devices[d].state_mut(), &summary, &self.pcfg, now)
                    .expect("initiator applies its own summary");
                for &v in &summary.deletions {
                    hc = hc.spliced_out(v).expect("deleted vertex was on the cycle");
                    self.stats.deletions += 1;
                    self.log(format!("Node {v} is deleted"), Some(hc.clone()));
                }
                if !summary.deletions.is_empty() {
                    self.update_lock = true;
                }
                self.schedule(now + HOP, Ev::SummaryArrive { from: d, summary });
            }
        }
        self.arm_timer(d);
    }

    fn on_summary(&mut self, from: usize, summary: PolSummary) {
        if !summary.deletions.is_empty() {
            self.update_lock = false;
        }
        let recipients = self.flood(from);
        self.metrics
            .record(&ProtocolMessage::PolSummary(summary.clone()), recipients.len());
        let now = self.now;
        for r in recipients {
            if self.devices[r].mode != Mode::Member {
                continue;
            }
            match apply_deletion_update(self.devices[r].state_mut(), &summary, &self.pcfg, now) {
                Ok(report) if report.self_deleted => {
                    let id = self.devices[r].state().id();
                    self.log(format!("Node {id} learns it was deleted"), None);
                    self.become_newcomer(r);
                }
                Ok(_) => {}
                Err(_) => self.resync(r),
            }
        }
        self.check_termination();
    }

    // Insertion.

    fn try_insert(&mut self, d: usize) {
        if self.devices[d].mode != Mode::SeekInsertion {
            return;
        }
        if self.update_lock {
            self.retry_later(d);
            return;
        }
        let auth = match self.devices[d].via {
            Some(id) => self.member_with_id(id).filter(|&a| self.secure(d, a)),
            None => {
                let near: Vec<usize> = (0..self.devices.len())
                    .filter(|&a| self.devices[a].mode == Mode::Member && self.secure(d, a))
                    .collect();
                near.choose(&mut self.rng_proto).copied()
            }
        };
        let Some(auth) = auth else {
            self.retry_later(d);
            return;
        };
        let auth_id = self.devices[auth].state().id();
        if !self.devices[d].scripted && self.rng_proto.gen_bool(self.cfg.admission_deny_prob) {
            self.stats.refused_admissions += 1;
            self.devices[d].mode = Mode::Gone;
            self.log(format!("Node {auth_id} refuses admission of a new device"), None);
            return;
        }
        self.update_lock = true;
        self.devices[d].mode = Mode::Joining;
        let state = self.devices[auth].state();
        let announced = assign_new_id(state.graph());
        let stage = state.stage();
        let msg = ProtocolMessage::InsertionAnnounce { id: announced };
        let env = Envelope {
            link: self.devices[auth].link,
            sender: Some(auth_id),
            stage,
            msg: msg.clone(),
        };
        self.log(
            format!("Node {auth_id} announces the insertion of Node {announced}"),
            None,
        );
        let recipients = self.flood(auth);
        self.metrics.record(&msg, recipients.len());
        let online = self.online_ids();
        let mut acks = 0;
        for &r in &recipients {
            if !self.detector.observe(self.devices[r].state(), &online, &env) {
                acks += 1;
            }
        }
        self.report_flags();
        self.metrics
            .record(&ProtocolMessage::InsertionAck { from: auth_id }, acks);
        self.schedule(
            self.now + HOP + HOP,
            Ev::InsertCommit {
                dev: d,
                auth,
                announced,
                acks,
            },
        );
    }

    fn abort_insert(&mut self, d: usize, why: String) {
        self.update_lock = false;
        self.stats.aborted_insertions += 1;
        self.log(why, None);
        let dev = &mut self.devices[d];
        dev.attempts += 1;
        if dev.attempts >= MAX_INSERT_ATTEMPTS {
            dev.mode = Mode::Gone;
        } else {
            dev.mode = Mode::SeekInsertion;
            self.retry_later(d);
        }
    }

    fn on_insert_commit(&mut self, d: usize, auth: usize, announced: NodeId, acks: usize) {
        let auth_ok = self.devices[auth].mode == Mode::Member;
        if !auth_ok || !self.secure(d, auth) {
            let why = format!("Insertion of Node {announced} aborted: authenticator out of reach");
            self.abort_insert(d, why);
            return;
        }
        let auth_id = self.devices[auth].state().id();
        let req = InsertRequest {
            announced,
            acks,
            pair: self.devices[d].pair,
        };
        let now = self.now;
        let commit = match authenticator_insert(
            self.devices[auth].node.as_mut().expect("member"),
            req,
            &self.pcfg,
            now,
            &mut self.rng_proto,
        ) {
            Ok(c) => c,
            Err(e) => {
                self.abort_insert(d, format!("Insertion by Node {auth_id} aborted: {e}"));
                return;
            }
        };
        let [_, graph_msg, cycle_msg] = commit.messages();
        self.metrics.record(&graph_msg, 1);
        self.metrics.record(&cycle_msg, 1);
        let dev = &mut self.devices[d];
        dev.node = Some(commit.new_node());
        dev.mode = Mode::Member;
        dev.attempts = 0;
        self.stats.insertions += 1;
        self.log(
            format!("Insertion of Node {} is broadcast by Node {auth_id}", commit.new_id()),
            Some(commit.cycle.clone()),
        );
        self.arm_timer(d);
        self.schedule(
            now + HOP,
            Ev::NeighborSetArrive {
                from: auth,
                joined: d,
                b: commit.broadcast,
            },
        );
    }

    fn on_neighbor_set(&mut self, from: usize, joined: usize, b: NeighborSetBroadcast) {
        self.update_lock = false;
        let recipients = self.flood(from);
        let msg = ProtocolMessage::NeighborSetBroadcast(b.clone());
        self.metrics.record(&msg, recipients.len());
        let online = self.online_ids();
        let env = Envelope {
            link: self.devices[from].link,
            sender: Some(b.authenticator),
            stage: b.stage,
            msg,
        };
        let now = self.now;
        for r in recipients {
            if r == joined || self.devices[r].mode != Mode::Member {
                continue;
            }
            if self.detector.observe(self.devices[r].state(), &online, &env) {
                continue;
            }
            if apply_insertion_update(self.devices[r].state_mut(), &b, &self.pcfg, now).is_err() {
                self.resync(r);
            }
        }
        self.report_flags();
    }

    // Access control.

    fn try_access(&mut self, d: usize, announce_turn_on: bool) {
        if self.devices[d].mode != Mode::SeekAccess {
            return;
        }
        let stage = self.devices[d].state().stage();
        let near: Vec<usize> = match self.devices[d].via.and_then(|id| self.member_with_id(id)) {
            Some(v) if self.secure(d, v) => vec![v],
            _ => (0..self.devices.len())
                .filter(|&v| self.devices[v].mode == Mode::Member && self.secure(d, v))
                .collect(),
        };
        let able: Vec<usize> = near
            .iter()
            .copied()
            .filter(|&v| self.devices[v].state().digest_at(stage).is_some())
            .collect();
        let pool = if able.is_empty() { near } else { able };
        let Some(&v) = pool.choose(&mut self.rng_proto) else {
            self.retry_later(d);
            return;
        };
        let id = self.devices[d].state().id();
        let vid = self.devices[v].state().id();
        if announce_turn_on {
            self.log(format!("Node {id} turns on and Node {vid} is chosen for the ZKP"), None);
        } else {
            self.log(
                format!("Node {id} reaches Node {vid} and starts a ZKP for re-insertion"),
                None,
            );
        }
        self.devices[d].via = None;
        self.access(d, v);
    }

    fn access(&mut self, d: usize, v: usize) {
        let now = self.now;
        let online = self.online_ids();
        let req = self.devices[d].state().access_request();
        let id = req.claimed_id;
        let vid = self.devices[v].state().id();
        let msg = ProtocolMessage::AccessRequest(req.clone());
        self.metrics.record(&msg, 1);
        let env = Envelope {
            link: self.devices[d].link,
            sender: Some(id),
            stage: req.stage,
            msg,
        };
        let seed = self.rng_proto.gen();
        let mut prover = self.devices[d]
            .state()
            .prover(ChaCha8Rng::seed_from_u64(seed))
            .expect("offline replica keeps its cycle");
        let mut transport = Metered {
            inner: &mut prover,
            metrics: &mut self.metrics,
        };
        let ctx = AccessContext { now, online: &online };
        let result = access_control(
            self.devices[v].state(),
            &req,
            ctx,
            &mut transport,
            &self.pcfg,
            &mut self.rng_proto,
        );
        // Only a fresh request for an online id counts as evidence; a stale
        // one is plain expiry.
        if result == Err(DenyReason::DuplicateIdentity) {
            self.detector.observe(self.devices[v].state(), &online, &env);
        }
        self.report_flags();
        match result {
            Ok(grant) => {
                self.metrics.record(&ProtocolMessage::AccessGrant(grant.clone()), 1);
                let mut next = self.devices[d].state().clone();
                match next.apply_grant(&grant, &self.pcfg, now) {
                    Ok(()) => {
                        self.stats.grants += 1;
                        self.devices[d].node = Some(next);
                        self.devices[d].mode = Mode::Member;
                        self.log(format!("Node {vid} grants access to Node {id}"), None);
                        self.arm_timer(d);
                    }
                    Err(_) if next.status() == NodeStatus::Deleted => {
                        self.log(format!("Node {id} learns from Node {vid} that it was deleted"), None);
                        self.become_newcomer(d);
                    }
                    Err(e) => {
                        self.log(format!("Node {id} cannot apply the grant from Node {vid}: {e}"), None);
                        self.retry_later(d);
                    }
                }
            }
            Err(reason) => {
                self.stats.denials += 1;
                self.metrics.record(&ProtocolMessage::AccessDenied(reason), 1);
                self.log(format!("Node {vid} denies access to Node {id}: {reason}"), None);
                match reason {
                    DenyReason::ExpiredMembership | DenyReason::StageUnavailable | DenyReason::UnknownGraph => {
                        self.become_newcomer(d)
                    }
                    DenyReason::ZkpFailed { .. } => self.devices[d].mode = Mode::Gone,
                    DenyReason::DuplicateIdentity | DenyReason::ProtocolAborted => self.retry_later(d),
                }
            }
        }
    }

    // Scripted misbehavior.

    fn sybil_access(&mut self, claimed: NodeId) {
        let members: Vec<usize> = (0..self.devices.len())
            .filter(|&d| self.devices[d].mode == Mode::Member)
            .collect();
        let Some(&v) = members.choose(&mut self.rng_proto) else {
            return;
        };
        let link = self.fresh_link();
        let now = self.now;
        let online = self.online_ids();
        let vid = self.devices[v].state().id();
        self.log(
            format!("Link {} asks Node {vid} for access as Node {claimed}", link.0),
            None,
        );
        let verifier = self.devices[v].state();
        let req = AccessRequest {
            claimed_id: claimed,
            stage: verifier.stage(),
            claimed_graph: verifier.graph().clone(),
            last_proof: now,
        };
        let msg = ProtocolMessage::AccessRequest(req.clone());
        self.metrics.record(&msg, 1);
        let env = Envelope {
            link,
            sender: Some(claimed),
            stage: req.stage,
            msg,
        };
        let seed = self.rng_proto.gen();
        let mut cheater = OneBranchCheater::new(req.claimed_graph.clone(), ChaCha8Rng::seed_from_u64(seed));
        let mut transport = Metered {
            inner: &mut cheater,
            metrics: &mut self.metrics,
        };
        let ctx = AccessContext { now, online: &online };
        let reason = match access_control(verifier, &req, ctx, &mut transport, &self.pcfg, &mut self.rng_proto) {
            Ok(_) => unreachable!("a cheater cannot pass {} rounds", self.pcfg.rounds),
            Err(r) => r,
        };
        if reason == DenyReason::DuplicateIdentity {
            self.detector.observe(verifier, &online, &env);
        }
        self.report_flags();
        self.metrics.record(&ProtocolMessage::AccessDenied(reason), 1);
        self.log(format!("Node {vid} denies access to link {}: {reason}", link.0), None);
    }

    fn sybil_insert(&mut self, claimed: NodeId) {
        let members: Vec<usize> = (0..self.devices.len())
            .filter(|&d| self.devices[d].mode == Mode::Member)
            .collect();
        let Some(&near) = members.choose(&mut self.rng_proto) else {
            return;
        };
        let link = self.fresh_link();
        let msg = ProtocolMessage::InsertionAnnounce { id: claimed };
        let env = Envelope {
            link,
            sender: None,
            stage: self.devices[near].state().stage(),
            msg: msg.clone(),
        };
        self.log(
            format!("Link {} announces the insertion of Node {claimed}", link.0),
            None,
        );
        let mut recipients = self.flood(near);
        recipients.push(near);
        self.metrics.record(&msg, recipients.len());
        let online = self.online_ids();
        for r in recipients {
            self.detector.observe(self.devices[r].state(), &online, &env);
        }
        self.report_flags();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::config::{Churn, Geometric, ScriptedAction};
    use crate::sim::metrics::MessageClass;
    use crate::sim::trace::{check_trace, format_trace};

    #[test]
    fn no_churn_is_all_proof_of_life() {
        let mut cfg = ScenarioConfig::full_mesh(12, 5.0, 0.0, 60.0, 3);
        cfg.churn = Churn::NONE;
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(r.outcome, Outcome::Completed);
        assert!(r.stats.windows > 0);
        assert_eq!(r.stats.deletions, 0);
        assert_eq!(r.metrics.share(MessageClass::ProofOfLife), 1.0);
        assert_eq!(r.online_at_end, 12);
    }

    #[test]
    fn same_seed_same_run() {
        let cfg = ScenarioConfig::full_mesh(15, 10.0, 0.2, 80.0, 11);
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(format_trace(&a.trace), format_trace(&b.trace));
        assert_eq!(a.metrics.to_json(), b.metrics.to_json());
        let c = run_scenario(&ScenarioConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(format_trace(&a.trace), format_trace(&c.trace));
    }

    #[test]
    fn churned_run_keeps_replicas_and_trace_consistent() {
        let cfg = ScenarioConfig::full_mesh(20, 10.0, 0.2, 150.0, 5);
        let mut sim = Simulation::new(&cfg).unwrap();
        sim.run_until(SimTime::from_secs(150));
        if sim.is_quiescent() {
            let mut by_stage: BTreeMap<u64, Vec<u8>> = BTreeMap::new();
            for s in sim.members() {
                let bytes = by_stage.entry(s.stage()).or_insert_with(|| s.replica_bytes());
                assert_eq!(*bytes, s.replica_bytes());
            }
            assert_eq!(by_stage.len(), 1, "every online replica is at the same stage");
        }
        let report = sim.finish();
        assert!(report.stats.insertions > 0 && report.stats.grants > 0);
        assert!(
            report.flags.is_empty(),
            "{:?}\n{}",
            report.flags,
            format_trace(&report.trace)
        );
        check_trace(&format_trace(&report.trace)).unwrap();
    }

    #[test]
    fn losing_members_terminates() {
        let mut cfg = ScenarioConfig::full_mesh(6, 10.0, 0.0, 100.0, 1);
        cfg.termination_threshold = 5;
        cfg.churn = Churn::NONE;
        cfg.script = vec![
            ScriptedAction {
                at: 1.0,
                action: Action::TurnOff { node: 0 },
            },
            ScriptedAction {
                at: 2.0,
                action: Action::TurnOff { node: 1 },
            },
        ];
        let r = run_scenario(&cfg).unwrap();
        assert_eq!(
            r.outcome,
            Outcome::Terminated {
                at: SimTime::from_secs(2)
            }
        );
        assert!(r.trace.last().unwrap().event.starts_with("Network terminated"));
    }

    #[test]
    fn geometric_run_is_deterministic_and_consistent() {
        let cfg = ScenarioConfig {
            connectivity: Connectivity::Geometric(Geometric {
                area_side: 250.0,
                speed_max: 20.0,
                pause: 0.5,
                data_range: 250.0,
                secure_range: 5.0,
            }),
            ..ScenarioConfig::full_mesh(15, 10.0, 0.1, 60.0, 8)
        };
        let a = run_scenario(&cfg).unwrap();
        let b = run_scenario(&cfg).unwrap();
        assert_eq!(format_trace(&a.trace), format_trace(&b.trace));
        check_trace(&format_trace(&a.trace)).unwrap();
    }
}
