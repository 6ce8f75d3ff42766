//! Deterministic tick-driven simulation: links with latency, capacity and
//! loss; per-node forwarding; consumer demand loops; fault injection; and
//! end-of-run settlement.
//!
//! All randomness (loss draws, bandit exploration) flows from one seeded
//! generator, so a (scenario, seed) pair always produces byte-identical
//! outputs.

use std::collections::{BTreeMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use pptp::consumer::{
    self, BanditState, PathId, PathStats, PricedPath, UtilityModel, WindowObservation,
};
use pptp::crypto::Keypair;
use pptp::forwarding::{Action, Node, NodeRole, PayCtx};
use pptp::ledger::Ledger;
use pptp::name::Name;
use pptp::packet::Packet;
use pptp::payments::{open_channel, ChannelBook, ChannelStatus, CommitmentTx};
use pptp::types::{FaceId, NodeId, NonceSeq, PerfMetric, Tick, Tokens};

use crate::metrics::{
    emit_csv, emit_summary, ChannelSummary, Conservation, DisputeSummary, MetricsRow, NodeSummary,
    Summary,
};
use crate::scenario::{ModelChoice, Role, RunDecl, Scenario};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub seed: u64,
    pub ticks: u64,
    pub report_window: u64,
    pub pit_ttl: u64,
    pub gamma: f64,
    pub eps0: f64,
    pub tau: f64,
    pub threshold_ticks: u64,
    /// Relaunch probes after this many ticks while a demand has no paths.
    pub probe_retry: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            ticks: 1000,
            report_window: 100,
            pit_ttl: 100,
            gamma: 0.3,
            eps0: 0.2,
            tau: 200.0,
            threshold_ticks: 100,
            probe_retry: 200,
        }
    }
}

impl SimConfig {
    /// Scenario `run` directive first, then explicit overrides.
    pub fn resolve(run: &RunDecl, seed: Option<u64>, ticks: Option<u64>) -> Self {
        let mut cfg = SimConfig::default();
        if let Some(t) = run.ticks {
            cfg.ticks = t;
        }
        if let Some(s) = run.seed {
            cfg.seed = s;
        }
        if let Some(w) = run.report_window {
            cfg.report_window = w.max(1);
        }
        if let Some(p) = run.pit_ttl {
            cfg.pit_ttl = p.max(1);
        }
        if let Some(g) = run.gamma {
            cfg.gamma = g;
        }
        if let Some(e) = run.eps0 {
            cfg.eps0 = e;
        }
        if let Some(t) = run.tau {
            cfg.tau = t;
        }
        if let Some(t) = run.threshold {
            cfg.threshold_ticks = t;
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(t) = ticks {
            cfg.ticks = t;
        }
        cfg
    }
}

struct LinkState {
    ends: [(NodeId, FaceId); 2],
    latency: u64,
    capacity: u32,
    loss: f64,
    /// Pending sends per direction; index is the sending end.
    pending: [VecDeque<Packet>; 2],
}

struct Arrival {
    to: NodeId,
    face: FaceId,
    pkt: Packet,
}

struct DemandState {
    prefix: Name,
    rate: f64,
    model: UtilityModel,
    probe_count: u32,
    paths: BTreeMap<PathId, PricedPath>,
    bandit: BanditState,
    accum: f64,
    seq: u64,
    last_probe: Option<Tick>,
    until: Option<Tick>,
}

struct Outstanding {
    demand: usize,
    path: Option<PathId>,
    sent: Tick,
    expiry: Tick,
    cost: Tokens,
    probe: bool,
}

struct ConsumerState {
    id: NodeId,
    demands: Vec<DemandState>,
    outstanding: BTreeMap<(Name, u64), Outstanding>,
    spent: Tokens,
    paid_undelivered: Tokens,
}

struct ResolvedFault {
    at: Tick,
    node: NodeId,
    face: FaceId,
    price: Tokens,
    window: pptp::types::Window,
}

struct NodeMeta {
    role: Role,
    initial_balance: Tokens,
    initial_deposit: Tokens,
}

pub struct Sim {
    cfg: SimConfig,
    now: Tick,
    rng: ChaCha20Rng,
    nodes: BTreeMap<NodeId, Node>,
    consumers: BTreeMap<NodeId, ConsumerState>,
    links: Vec<LinkState>,
    /// (node, face) -> (link index, sending-end index)
    ports: BTreeMap<(NodeId, FaceId), (usize, usize)>,
    arrivals: BTreeMap<Tick, Vec<Arrival>>,
    ledger: Ledger,
    channels: ChannelBook,
    nonces: NonceSeq,
    counters: BTreeMap<String, u64>,
    rows: Vec<MetricsRow>,
    faults: Vec<ResolvedFault>,
    meta: BTreeMap<NodeId, NodeMeta>,
    watcher: NodeId,
    window_start: Tick,
}

pub struct RunOutput {
    pub csv: String,
    pub summary_text: String,
    pub summary: Summary,
}

impl RunOutput {
    pub fn invariants_ok(&self) -> bool {
        self.summary.conservation.ok
    }
}

impl Sim {
    pub fn build(scenario: &Scenario, cfg: SimConfig) -> Result<Sim, SimError> {
        let mut ledger = Ledger::new();
        let mut nodes: BTreeMap<NodeId, Node> = BTreeMap::new();
        let mut meta = BTreeMap::new();

        for decl in &scenario.nodes {
            let id = NodeId::new(&decl.id);
            let keys = Keypair::for_node(cfg.seed, &id);
            ledger
                .register(&id, keys.public(), decl.balance, decl.deposit)
                .map_err(|e| SimError::Config(format!("register {}: {e}", decl.id)))?;
            let role = match decl.role {
                Role::Consumer => NodeRole::Consumer,
                Role::Router => NodeRole::Router,
                Role::Producer => NodeRole::Producer,
            };
            let mut node = Node::new(id.clone(), role, keys);
            node.state.pit_ttl = cfg.pit_ttl;
            nodes.insert(id.clone(), node);
            meta.insert(
                id,
                NodeMeta {
                    role: decl.role,
                    initial_balance: decl.balance,
                    initial_deposit: decl.deposit,
                },
            );
        }

        // Wire links; faces are dealt in declaration order per node.
        let mut links = Vec::new();
        let mut ports = BTreeMap::new();
        let mut face_of: BTreeMap<(NodeId, NodeId), FaceId> = BTreeMap::new();
        let mut face_count: BTreeMap<NodeId, u32> = BTreeMap::new();
        for decl in &scenario.links {
            let a = NodeId::new(&decl.a);
            let b = NodeId::new(&decl.b);
            let fa = FaceId(*face_count.entry(a.clone()).or_insert(0));
            *face_count.get_mut(&a).unwrap() += 1;
            let fb = FaceId(*face_count.entry(b.clone()).or_insert(0));
            *face_count.get_mut(&b).unwrap() += 1;
            nodes.get_mut(&a).unwrap().state.add_face(fa, b.clone());
            nodes.get_mut(&b).unwrap().state.add_face(fb, a.clone());
            let idx = links.len();
            ports.insert((a.clone(), fa), (idx, 0));
            ports.insert((b.clone(), fb), (idx, 1));
            face_of.insert((a.clone(), b.clone()), fa);
            face_of.insert((b.clone(), a.clone()), fb);
            links.push(LinkState {
                ends: [(a, fa), (b, fb)],
                latency: decl.latency,
                capacity: decl.bandwidth,
                loss: decl.loss,
                pending: [VecDeque::new(), VecDeque::new()],
            });
        }

        // Content offers, then FIBs from multi-source BFS per prefix.
        for decl in &scenario.contents {
            let producer = NodeId::new(&decl.producer);
            nodes
                .get_mut(&producer)
                .unwrap()
                .offer_content(decl.prefix.clone(), decl.price);
        }
        let mut prefixes: Vec<Name> = Vec::new();
        for decl in &scenario.contents {
            if !prefixes.contains(&decl.prefix) {
                prefixes.push(decl.prefix.clone());
            }
        }
        for prefix in &prefixes {
            let owners: Vec<NodeId> = scenario
                .contents
                .iter()
                .filter(|c| c.prefix == *prefix)
                .map(|c| NodeId::new(&c.producer))
                .collect();
            let mut dist: BTreeMap<NodeId, u32> = BTreeMap::new();
            let mut frontier: VecDeque<NodeId> = VecDeque::new();
            for owner in &owners {
                dist.insert(owner.clone(), 0);
                frontier.push_back(owner.clone());
            }
            while let Some(current) = frontier.pop_front() {
                // Consumers receive a distance but never transit.
                if nodes[&current].state.role == NodeRole::Consumer && dist[&current] > 0 {
                    continue;
                }
                if nodes[&current].state.role == NodeRole::Producer && dist[&current] > 0 {
                    continue;
                }
                let d = dist[&current];
                let peers: Vec<NodeId> =
                    nodes[&current].state.neighbors.values().cloned().collect();
                for peer in peers {
                    dist.entry(peer.clone()).or_insert_with(|| {
                        frontier.push_back(peer.clone());
                        d + 1
                    });
                }
            }
            let ids: Vec<NodeId> = nodes.keys().cloned().collect();
            for id in ids {
                let role = nodes[&id].state.role;
                if role == NodeRole::Producer {
                    continue;
                }
                let mut candidates: Vec<(u32, FaceId)> = nodes[&id]
                    .state
                    .neighbors
                    .iter()
                    .filter(|(_, peer)| {
                        nodes[*peer].state.role != NodeRole::Consumer && dist.contains_key(*peer)
                    })
                    .map(|(face, peer)| (dist[peer], *face))
                    .collect();
                candidates.sort();
                if !candidates.is_empty() {
                    let faces = candidates.into_iter().map(|(_, f)| f).collect();
                    nodes
                        .get_mut(&id)
                        .unwrap()
                        .state
                        .add_route(prefix.clone(), faces);
                }
            }
        }

        // Price schedules; the advertised metric is the link's own figure.
        for decl in &scenario.prices {
            let node = NodeId::new(&decl.node);
            let peer = if decl.link.0 == decl.node {
                NodeId::new(&decl.link.1)
            } else {
                NodeId::new(&decl.link.0)
            };
            let face = *face_of.get(&(node.clone(), peer.clone())).ok_or_else(|| {
                SimError::Config(format!("price {}: no face toward {peer}", decl.node))
            })?;
            let link = &scenario
                .links
                .iter()
                .find(|l| {
                    (l.a == decl.link.0 && l.b == decl.link.1)
                        || (l.a == decl.link.1 && l.b == decl.link.0)
                })
                .expect("validated by parser");
            let metric = PerfMetric::new(link.bandwidth, link.latency);
            nodes
                .get_mut(&node)
                .unwrap()
                .pricing
                .set_price(face, decl.price, decl.window, metric)
                .map_err(|e| SimError::Config(format!("price {}: {e}", decl.node)))?;
        }

        // Faults: resolve faces and arm the routers.
        let mut faults = Vec::new();
        for decl in &scenario.faults {
            let node = NodeId::new(&decl.node);
            let peer = if decl.link.0 == decl.node {
                NodeId::new(&decl.link.1)
            } else {
                NodeId::new(&decl.link.0)
            };
            let face = *face_of
                .get(&(node.clone(), peer))
                .ok_or_else(|| SimError::Config(format!("fault {}: unresolved face", decl.node)))?;
            nodes
                .get_mut(&node)
                .unwrap()
                .pricing
                .enable_fault_injection();
            faults.push(ResolvedFault {
                at: decl.at,
                node,
                face,
                price: decl.price,
                window: decl.window,
            });
        }
        faults.sort_by_key(|f| f.at);

        // Channels.
        let mut channels = ChannelBook::new();
        for decl in &scenario.channels {
            open_channel(
                &mut ledger,
                &mut channels,
                &NodeId::new(&decl.a),
                &NodeId::new(&decl.b),
                decl.dep_a,
                decl.dep_b,
            )
            .map_err(|e| SimError::Config(format!("channel {} {}: {e}", decl.a, decl.b)))?;
        }

        // Consumer engines.
        let mut consumers: BTreeMap<NodeId, ConsumerState> = BTreeMap::new();
        for decl in &scenario.demands {
            let id = NodeId::new(&decl.consumer);
            let entry = consumers
                .entry(id.clone())
                .or_insert_with(|| ConsumerState {
                    id: id.clone(),
                    demands: Vec::new(),
                    outstanding: BTreeMap::new(),
                    spent: Tokens::ZERO,
                    paid_undelivered: Tokens::ZERO,
                });
            let mut model = match decl.model {
                ModelChoice::Delay => UtilityModel::delay(decl.alpha, decl.beta),
                ModelChoice::Throughput => UtilityModel::throughput(),
            };
            model.threshold_ticks = cfg.threshold_ticks;
            entry.demands.push(DemandState {
                prefix: decl.prefix.clone(),
                rate: decl.rate,
                model,
                probe_count: decl.probes,
                paths: BTreeMap::new(),
                bandit: BanditState::new(cfg.eps0, cfg.tau),
                accum: 0.0,
                seq: 0,
                last_probe: None,
                until: decl.until,
            });
        }

        let watcher = consumers
            .keys()
            .next()
            .cloned()
            .unwrap_or_else(|| nodes.keys().next().expect("nodes nonempty").clone());

        Ok(Sim {
            rng: ChaCha20Rng::seed_from_u64(cfg.seed),
            cfg,
            now: 0,
            nodes,
            consumers,
            links,
            ports,
            arrivals: BTreeMap::new(),
            ledger,
            channels,
            nonces: NonceSeq::new(),
            counters: BTreeMap::new(),
            rows: Vec::new(),
            faults,
            meta,
            watcher,
            window_start: 0,
        })
    }

    fn bump(&mut self, key: &str) {
        *self.counters.entry(key.to_string()).or_insert(0) += 1;
    }

    fn bump_by(&mut self, key: &str, amount: u64) {
        *self.counters.entry(key.to_string()).or_insert(0) += amount;
    }

    fn send(&mut self, from: &NodeId, face: FaceId, pkt: Packet) {
        match self.ports.get(&(from.clone(), face)) {
            Some(&(idx, dir)) => self.links[idx].pending[dir].push_back(pkt),
            None => self.bump("drop.unwired-face"),
        }
    }

    fn apply_faults(&mut self) {
        let due: Vec<usize> = self
            .faults
            .iter()
            .enumerate()
            .filter(|(_, f)| f.at == self.now)
            .map(|(i, _)| i)
            .collect();
        for idx in due {
            let (node_id, face, price, window) = {
                let f = &self.faults[idx];
                (f.node.clone(), f.face, f.price, f.window)
            };
            let node = self.nodes.get_mut(&node_id).expect("fault node exists");
            // The honest commitment this router is bound to at the trigger
            // tick, from its own schedule.
            let honest_entry = node
                .pricing
                .entries()
                .iter()
                .find(|e| {
                    e.face == face
                        && e.window.contains(self.now)
                        && e.window.overlaps(&window)
                        && e.price != price
                })
                .cloned()
                .expect("validated by parser");
            let keys = node.keys.clone();
            let honest = node
                .pricing
                .equivocate_for_test(
                    face,
                    honest_entry.price,
                    honest_entry.window,
                    honest_entry.metric,
                    &keys,
                )
                .expect("fault mode armed");
            let injected = node
                .pricing
                .equivocate_for_test(face, price, window, honest_entry.metric, &keys)
                .expect("fault mode armed");
            let watcher = self.watcher.clone();
            let verdict = self.ledger.submit_conflict((&honest, &injected), &watcher);
            self.bump("faults_injected");
            match verdict {
                pptp::ledger::Verdict::Punished { .. } => self.bump("verdict.punished"),
                pptp::ledger::Verdict::Rejected(_) => self.bump("verdict.rejected"),
            }
        }
    }

    fn consumers_act(&mut self) {
        let ids: Vec<NodeId> = self.consumers.keys().cloned().collect();
        for cid in ids {
            let mut consumer = self.consumers.remove(&cid).expect("present");
            let mut node = self.nodes.remove(&cid).expect("consumer node");
            for demand_idx in 0..consumer.demands.len() {
                self.drive_demand(&mut consumer, &mut node, demand_idx);
            }
            self.nodes.insert(cid.clone(), node);
            self.consumers.insert(cid, consumer);
        }
    }

    fn drive_demand(&mut self, consumer: &mut ConsumerState, node: &mut Node, idx: usize) {
        let now = self.now;
        // Probe while no paths are known, with periodic retry.
        let (need_probe, prefix, probe_count) = {
            let d = &consumer.demands[idx];
            let due = match d.last_probe {
                None => true,
                Some(last) => d.paths.is_empty() && now >= last + self.cfg.probe_retry,
            };
            (due, d.prefix.clone(), d.probe_count)
        };
        if need_probe {
            consumer.demands[idx].last_probe = Some(now);
            for pkt in consumer::launch_probes(&prefix, probe_count, &mut self.nonces) {
                match node.state.probe_next_face(&prefix, None) {
                    Ok(face) => {
                        consumer.outstanding.insert(
                            (pkt.name.clone(), pkt.nonce),
                            Outstanding {
                                demand: idx,
                                path: None,
                                sent: now,
                                expiry: now + self.cfg.pit_ttl,
                                cost: Tokens::ZERO,
                                probe: true,
                            },
                        );
                        self.bump("probes_sent");
                        self.send(&consumer.id, face, pkt);
                    }
                    Err(_) => self.bump("drop.consumer-no-route"),
                }
            }
        }

        // Content at the configured rate, one bandit draw per Interest.
        if consumer.demands[idx].paths.is_empty() {
            return;
        }
        if matches!(consumer.demands[idx].until, Some(until) if now > until) {
            return;
        }
        consumer.demands[idx].accum += consumer.demands[idx].rate;
        while consumer.demands[idx].accum >= 1.0 {
            consumer.demands[idx].accum -= 1.0;
            let Some(path_id) =
                consumer::select_path(&mut consumer.demands[idx].bandit, &mut self.rng)
            else {
                break;
            };
            let path = consumer.demands[idx].paths[&path_id].clone();
            let seq = consumer.demands[idx].seq;
            consumer.demands[idx].seq += 1;
            let name = consumer.demands[idx]
                .prefix
                .child(seq.to_string().into_bytes());
            let nonce = self.nonces.next();
            match consumer::build_content_interest(
                &path,
                name.clone(),
                nonce,
                &consumer.id,
                &node.keys,
                &mut self.channels,
            ) {
                Ok(pkt) => {
                    consumer.outstanding.insert(
                        (name, nonce),
                        Outstanding {
                            demand: idx,
                            path: Some(path_id),
                            sent: now,
                            expiry: now + self.cfg.pit_ttl,
                            cost: path.total_cost,
                            probe: false,
                        },
                    );
                    consumer.spent = consumer
                        .spent
                        .checked_add(path.total_cost)
                        .expect("bounded by deposits");
                    let stats = consumer.demands[idx]
                        .bandit
                        .arms
                        .get_mut(&path_id)
                        .expect("arm exists");
                    stats.sent += 1;
                    stats.window.sent += 1;
                    stats.window.cost_spent += path.total_cost.amount();
                    self.bump("interests_sent");
                    self.send(&consumer.id, path.local_face, pkt);
                }
                Err(consumer::BuildError::NoChannel) => self.bump("drop.send-no-channel"),
                Err(consumer::BuildError::InsufficientChannelBalance) => {
                    self.bump("drop.send-underfunded")
                }
                Err(_) => self.bump("drop.send-failed"),
            }
        }
    }

    fn deliver_arrivals(&mut self) {
        let Some(batch) = self.arrivals.remove(&self.now) else {
            return;
        };
        for arrival in batch {
            let role = match self.nodes.get(&arrival.to) {
                Some(node) => node.state.role,
                None => {
                    self.bump("drop.unknown-node");
                    continue;
                }
            };
            if role == NodeRole::Consumer {
                self.consumer_receive(arrival);
            } else {
                let mut node = self.nodes.remove(&arrival.to).expect("present");
                let action = if arrival.pkt.is_interest() {
                    node.handle_interest(
                        arrival.face,
                        arrival.pkt,
                        self.now,
                        &mut PayCtx {
                            channels: &mut self.channels,
                            resolver: &self.ledger,
                        },
                    )
                } else {
                    node.handle_data(arrival.face, arrival.pkt, self.now)
                };
                let id = arrival.to.clone();
                self.nodes.insert(arrival.to, node);
                match action {
                    Action::Forward { face, pkt } => self.send(&id, face, pkt),
                    Action::Drop(reason) => self.bump(&format!("drop.{reason}")),
                }
            }
        }
    }

    fn consumer_receive(&mut self, arrival: Arrival) {
        let Some(mut consumer) = self.consumers.remove(&arrival.to) else {
            // A consumer node with no demands; nothing to do.
            self.bump("drop.consumer-idle");
            return;
        };
        let pkt = arrival.pkt;
        if !pkt.is_data() {
            self.bump("drop.not-forwarder");
            self.consumers.insert(arrival.to, consumer);
            return;
        }
        let key = (pkt.name.clone(), pkt.nonce);
        let Some(out) = consumer.outstanding.remove(&key) else {
            self.bump("drop.unsolicited-at-consumer");
            self.consumers.insert(arrival.to, consumer);
            return;
        };
        if out.probe && pkt.probe_flag {
            let demand = &mut consumer.demands[out.demand];
            let Some(tag) = pkt.tag.as_ref() else {
                self.bump("path.rejected-malformed");
                self.consumers.insert(arrival.to, consumer);
                return;
            };
            match consumer::register_path(tag, arrival.face, self.now, &demand.model, &self.ledger)
            {
                Ok(path) => {
                    let replaced = demand.paths.contains_key(&path.path_id);
                    if replaced {
                        // Same route probed again: refresh prices and
                        // freshness, keep the learned statistics.
                        let arm = demand.bandit.arms.get_mut(&path.path_id).expect("arm");
                        arm.predicted_u = consumer::utility(
                            path.predicted_v,
                            path.total_cost,
                            demand.model.eps_floor,
                        );
                        demand.paths.insert(path.path_id, path);
                        self.bump("paths_refreshed");
                    } else {
                        let mut stats = PathStats::default();
                        stats.predicted_u = consumer::utility(
                            path.predicted_v,
                            path.total_cost,
                            demand.model.eps_floor,
                        );
                        demand.bandit.arms.insert(path.path_id, stats);
                        demand.paths.insert(path.path_id, path);
                        self.bump("paths_registered");
                    }
                }
                Err(consumer::RegisterError::BadSignature(_)) => {
                    self.bump("path.rejected-signature")
                }
                Err(consumer::RegisterError::StalePrice(_)) => self.bump("path.rejected-stale"),
                Err(consumer::RegisterError::Unregistered(_)) => {
                    self.bump("path.rejected-unregistered")
                }
                Err(_) => self.bump("path.rejected-malformed"),
            }
        } else if !out.probe && !pkt.probe_flag {
            let demand = &mut consumer.demands[out.demand];
            let latency = self.now - out.sent;
            if let Some(path_id) = out.path {
                if let Some(stats) = demand.bandit.arms.get_mut(&path_id) {
                    stats.delivered += 1;
                    stats.latency_sum += latency;
                    stats.window.delivered += 1;
                    stats.window.latency_sum += latency;
                    if latency <= demand.model.threshold_ticks {
                        stats.within_threshold += 1;
                        stats.window.within_threshold += 1;
                    }
                }
            }
            self.bump("data_delivered");
        } else {
            self.bump("drop.kind-mismatch");
        }
        self.consumers.insert(arrival.to, consumer);
    }

    fn transmit(&mut self) {
        for idx in 0..self.links.len() {
            for dir in 0..2 {
                let capacity = self.links[idx].capacity;
                for _ in 0..capacity {
                    let Some(pkt) = self.links[idx].pending[dir].pop_front() else {
                        break;
                    };
                    let loss = self.links[idx].loss;
                    if loss > 0.0 && self.rng.gen::<f64>() < loss {
                        self.bump("link_loss");
                        continue;
                    }
                    let (to, face) = self.links[idx].ends[1 - dir].clone();
                    let deliver_at = self.now + self.links[idx].latency;
                    self.arrivals
                        .entry(deliver_at)
                        .or_default()
                        .push(Arrival { to, face, pkt });
                }
            }
        }
    }

    fn sweep(&mut self) {
        let now = self.now;
        let mut expired_pits = 0;
        for node in self.nodes.values_mut() {
            expired_pits += node.state.sweep_pit(now);
        }
        if expired_pits > 0 {
            self.bump_by("pit_expired", expired_pits as u64);
        }
        let ids: Vec<NodeId> = self.consumers.keys().cloned().collect();
        for cid in ids {
            let consumer = self.consumers.get_mut(&cid).expect("present");
            let mut lost_probes = 0;
            let mut lost_content = 0;
            let mut lost_tokens = 0u64;
            consumer.outstanding.retain(|_, out| {
                if out.expiry > now {
                    return true;
                }
                if out.probe {
                    lost_probes += 1;
                } else {
                    lost_content += 1;
                    lost_tokens += out.cost.amount();
                }
                false
            });
            consumer.paid_undelivered = consumer
                .paid_undelivered
                .checked_add(Tokens::new(lost_tokens))
                .expect("bounded");
            if lost_probes > 0 {
                self.bump_by("probe_lost", lost_probes);
            }
            if lost_content > 0 {
                self.bump_by("content_lost", lost_content);
                self.bump_by("paid_undelivered_tokens", lost_tokens);
            }
        }
    }

    fn flush_window(&mut self) {
        let window_end = self.now;
        let window_ticks = window_end - self.window_start + 1;
        let gamma = self.cfg.gamma;
        // Aggregate per (consumer, path) so a shared path yields one row.
        let mut accum: BTreeMap<(String, PathId), MetricsRow> = BTreeMap::new();
        for (cid, consumer) in self.consumers.iter_mut() {
            for demand in consumer.demands.iter_mut() {
                let cost_of: BTreeMap<PathId, Tokens> = demand
                    .paths
                    .iter()
                    .map(|(id, p)| (*id, p.total_cost))
                    .collect();
                let mut observations: Vec<(PathId, f64)> = Vec::new();
                for (path_id, stats) in demand.bandit.arms.iter_mut() {
                    let obs = WindowObservation::from_counters(&stats.window, window_ticks);
                    let v = consumer::measured_v(&obs, &demand.model).ok();
                    let cost = cost_of.get(path_id).copied().unwrap_or(Tokens::ZERO);
                    let u = v.map(|v| consumer::utility(v, cost, demand.model.eps_floor));
                    let row =
                        accum
                            .entry((cid.to_string(), *path_id))
                            .or_insert_with(|| MetricsRow {
                                tick: window_end,
                                consumer: cid.to_string(),
                                path_id: *path_id,
                                interests_sent: 0,
                                data_received: 0,
                                mean_latency: None,
                                frac_within_threshold: None,
                                cost_spent: 0,
                                v_measured: None,
                                u_measured: None,
                            });
                    row.interests_sent += stats.window.sent;
                    row.data_received += stats.window.delivered;
                    row.cost_spent += stats.window.cost_spent;
                    if stats.window.delivered > 0 {
                        row.mean_latency =
                            Some(stats.window.latency_sum as f64 / stats.window.delivered as f64);
                        row.frac_within_threshold = Some(
                            stats.window.within_threshold as f64 / stats.window.delivered as f64,
                        );
                        row.v_measured = v;
                        row.u_measured = u;
                    }
                    stats.window = Default::default();
                    if let Some(u) = u {
                        observations.push((*path_id, u));
                    }
                }
                // One utility observation per window per path with data.
                for (path_id, u) in observations {
                    consumer::update_estimate(&mut demand.bandit, path_id, u, gamma)
                        .expect("arm exists");
                }
            }
        }
        self.rows.extend(accum.into_values());
        self.window_start = window_end + 1;
    }

    fn settle_all(&mut self) {
        for id in self.channels.ids() {
            let channel = self.channels.get_mut(id).expect("present");
            if channel.status == ChannelStatus::Settled {
                continue;
            }
            let final_tx = match channel.latest.clone() {
                Some(tx) => tx,
                None => {
                    // Unused channel: cooperative close at the opening
                    // balances, co-signed by both parties.
                    let mut tx = CommitmentTx {
                        channel_id: id,
                        seq: 0,
                        balance_a: channel.balance_a,
                        balance_b: channel.balance_b,
                        sig_a: None,
                        sig_b: None,
                    };
                    let ka = &self.nodes[&channel.party_a].keys;
                    let kb = &self.nodes[&channel.party_b].keys;
                    tx.sig_a = Some(ka.sign(&tx.signing_bytes()));
                    tx.sig_b = Some(kb.sign(&tx.signing_bytes()));
                    tx
                }
            };
            self.ledger
                .settle(channel, &final_tx)
                .expect("cooperative settlement of a co-signed commitment");
            self.bump("channels_settled");
        }
    }

    fn build_summary(&self) -> Summary {
        let mut nodes = Vec::new();
        for (id, meta) in &self.meta {
            let acct = self.ledger.account(id).expect("registered");
            let node = &self.nodes[id];
            let (spent, paid_undelivered) = match self.consumers.get(id) {
                Some(c) => (c.spent, c.paid_undelivered),
                None => (Tokens::ZERO, Tokens::ZERO),
            };
            let _ = paid_undelivered;
            nodes.push(NodeSummary {
                id: id.to_string(),
                role: meta.role.to_string(),
                initial_balance: meta.initial_balance,
                initial_deposit: meta.initial_deposit,
                final_balance: acct.balance,
                deposit_remaining: acct.security_deposit,
                revenue_kept: node.revenue,
                windfall: node.windfall,
                spent,
                flagged: acct.flagged,
            });
        }
        let channels = self
            .channels
            .iter()
            .map(|ch| ChannelSummary {
                id: ch.id.0,
                party_a: ch.party_a.to_string(),
                party_b: ch.party_b.to_string(),
                deposit_a: ch.deposit_a,
                deposit_b: ch.deposit_b,
                final_a: ch.balance_a,
                final_b: ch.balance_b,
                seq: ch.seq,
            })
            .collect();
        let disputes = self
            .ledger
            .dispute_log()
            .iter()
            .map(|d| DisputeSummary {
                advertiser: d.advertiser.to_string(),
                submitter: d.submitter.to_string(),
                verdict: d.verdict.to_string(),
            })
            .collect();
        let final_balances = Tokens::sum(
            self.ledger
                .accounts()
                .map(|a| &a.balance)
                .collect::<Vec<_>>(),
        )
        .expect("bounded");
        let deposits = Tokens::sum(
            self.ledger
                .accounts()
                .map(|a| &a.security_deposit)
                .collect::<Vec<_>>(),
        )
        .expect("bounded");
        let conservation = Conservation {
            minted: self.ledger.minted(),
            final_balances,
            deposits_unburned: deposits,
            escrow_remaining: self.ledger.total_escrow(),
            burned: self.ledger.burned(),
            ok: self.ledger.conservation_holds() && self.ledger.total_escrow().is_zero(),
        };
        Summary {
            seed: self.cfg.seed,
            ticks: self.cfg.ticks,
            nodes,
            channels,
            disputes,
            conservation,
            counters: self.counters.clone(),
        }
    }

    /// Executes the whole run: tick loop, settlement, summary. One call per
    /// built sim.
    pub fn run(&mut self) -> RunOutput {
        for t in 0..self.cfg.ticks {
            self.now = t;
            self.apply_faults();
            // Arrivals first: a commitment accepted this tick is visible to
            // the consumer issuing the next one.
            self.deliver_arrivals();
            self.consumers_act();
            self.transmit();
            self.sweep();
            if (t + 1) % self.cfg.report_window == 0 || t + 1 == self.cfg.ticks {
                self.flush_window();
            }
        }
        self.settle_all();
        let summary = self.build_summary();
        RunOutput {
            csv: emit_csv(&self.rows),
            summary_text: emit_summary(&summary),
            summary,
        }
    }

    /// Read access for tests and the report command.
    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn counter(&self, key: &str) -> u64 {
        self.counters.get(key).copied().unwrap_or(0)
    }

    pub fn node_revenue(&self, id: &str) -> Tokens {
        self.nodes
            .get(&NodeId::new(id))
            .map(|n| n.revenue)
            .unwrap_or(Tokens::ZERO)
    }

    pub fn consumer_spent(&self, id: &str) -> Tokens {
        self.consumers
            .get(&NodeId::new(id))
            .map(|c| c.spent)
            .unwrap_or(Tokens::ZERO)
    }

    /// Paths a consumer has registered, across all of its demands.
    pub fn discovered_paths(&self, id: &str) -> Vec<&PricedPath> {
        match self.consumers.get(&NodeId::new(id)) {
            Some(c) => c.demands.iter().flat_map(|d| d.paths.values()).collect(),
            None => Vec::new(),
        }
    }
}

/// Parses, builds and runs a scenario in one call.
pub fn run_scenario(
    text: &str,
    seed: Option<u64>,
    ticks: Option<u64>,
) -> Result<RunOutput, crate::Error> {
    let scenario = crate::scenario::parse_scenario(text)?;
    let cfg = SimConfig::resolve(&scenario.run, seed, ticks);
    let mut sim = Sim::build(&scenario, cfg)?;
    Ok(sim.run())
}
