//! Consumer-side engine: probe campaigns, tag parsing into priced paths,
//! QoE models, the log cost-performance utility, explore-and-exploit path
//! selection, and construction of paying content Interests.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{self, KeyResolver, Keypair};
use crate::name::Name;
use crate::packet::Packet;
use crate::payments::{self, ChannelBook, ChannelError, PaymentEnvelope};
use crate::tag::{PathTag, TagItem};
use crate::types::{FaceId, NodeId, NonceSeq, Tick, TokenOverflow, Tokens};

/// Stable identity of a discovered path: a hash of its ordered
/// (advertiser, face) sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PathId(pub u64);

impl PathId {
    pub fn of_route(items: &[TagItem]) -> PathId {
        let mut h = Sha256::new();
        for item in items {
            let id = item.core.advertiser.as_str().as_bytes();
            h.update((id.len() as u16).to_be_bytes());
            h.update(id);
            h.update(item.core.face.0.to_be_bytes());
        }
        let digest = h.finalize();
        PathId(u64::from_be_bytes(digest[..8].try_into().unwrap()))
    }
}

impl fmt::Display for PathId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Delay,
    Throughput,
}

/// QoE model parameters. The delay model scores the fraction of packets
/// within the latency threshold plus the inverse mean latency; the
/// throughput model scores delivered packets per tick.
#[derive(Debug, Clone, PartialEq)]
pub struct UtilityModel {
    pub kind: ModelKind,
    pub alpha: f64,
    pub beta: f64,
    /// Cost floor so the utility stays defined for free paths.
    pub eps_floor: f64,
    /// Tick equivalent of the 100 ms QoE threshold.
    pub threshold_ticks: u64,
}

impl UtilityModel {
    pub fn delay(alpha: f64, beta: f64) -> Self {
        assert!(
            alpha > 0.0 || beta > 0.0,
            "delay model needs a positive alpha or beta"
        );
        UtilityModel {
            kind: ModelKind::Delay,
            alpha,
            beta,
            eps_floor: 1.0,
            threshold_ticks: 100,
        }
    }

    pub fn throughput() -> Self {
        UtilityModel {
            kind: ModelKind::Throughput,
            alpha: 0.0,
            beta: 0.0,
            eps_floor: 1.0,
            threshold_ticks: 100,
        }
    }
}

/// Consumer-side view of one discovered path.
#[derive(Debug, Clone, PartialEq)]
pub struct PricedPath {
    pub path_id: PathId,
    /// Consumer-to-producer order: `items[0]` is the first hop.
    pub items: Vec<TagItem>,
    /// Total price of one Data packet over this path.
    pub total_cost: Tokens,
    pub predicted_v: f64,
    pub discovered_at: Tick,
    /// The consumer's own face the probe Data arrived on; content Interests
    /// for this path leave through it.
    pub local_face: FaceId,
}

impl PricedPath {
    pub fn first_hop(&self) -> &NodeId {
        &self.items[0].core.advertiser
    }

    /// Advertiser sequence, consumer to producer.
    pub fn route(&self) -> Vec<NodeId> {
        self.items
            .iter()
            .map(|i| i.core.advertiser.clone())
            .collect()
    }
}

/// Per-window counters, reset at each reporting boundary.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct WindowCounters {
    pub sent: u64,
    pub delivered: u64,
    pub within_threshold: u64,
    pub latency_sum: u64,
    pub cost_spent: u64,
}

/// Measured performance of one path, cumulative and for the current window.
#[derive(Debug, Clone, Default)]
pub struct PathStats {
    pub sent: u64,
    pub delivered: u64,
    pub within_threshold: u64,
    pub latency_sum: u64,
    /// EWMA of observed utility; `None` until the first observation.
    pub ewma_u: Option<f64>,
    /// Utility predicted from the advertised metrics, used to rank an arm
    /// before it has been observed.
    pub predicted_u: f64,
    /// Number of utility observations folded in so far.
    pub pulls: u64,
    pub window: WindowCounters,
}

/// Multi-armed bandit over discovered paths with hyperbolically decaying
/// epsilon: eps_t = eps0 / (1 + t / tau).
#[derive(Debug, Clone)]
pub struct BanditState {
    pub arms: BTreeMap<PathId, PathStats>,
    pub eps0: f64,
    pub tau: f64,
    pub t: u64,
}

impl BanditState {
    pub fn new(eps0: f64, tau: f64) -> Self {
        assert!(eps0 > 0.0 && eps0 <= 1.0, "eps0 must be in (0, 1]");
        assert!(tau > 0.0, "tau must be positive");
        BanditState {
            arms: BTreeMap::new(),
            eps0,
            tau,
            t: 0,
        }
    }

    pub fn epsilon(&self) -> f64 {
        self.eps0 / (1.0 + self.t as f64 / self.tau)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegisterError {
    #[error("probe Data carried an empty tag")]
    EmptyTag,
    #[error("signature of tag item {0} is invalid")]
    BadSignature(usize),
    #[error("advertiser of tag item {0} is not registered")]
    Unregistered(usize),
    #[error("price window of tag item {0} does not contain the current tick")]
    StalePrice(usize),
    #[error("path cost overflows")]
    CostOverflow,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("no channel to the first-hop node")]
    NoChannel,
    #[error("channel balance does not cover the path cost")]
    InsufficientChannelBalance,
    #[error("channel error: {0}")]
    Channel(ChannelError),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no delivered packets in the window")]
pub struct NoSamples;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown arm")]
pub struct UnknownArm;

/// Emits `count` probe Interests with distinct nonces, no tags, no
/// envelopes.
pub fn launch_probes(name: &Name, count: u32, nonces: &mut NonceSeq) -> Vec<Packet> {
    (0..count)
        .map(|_| Packet::probe_interest(name.clone(), nonces.next()))
        .collect()
}

/// Exact integer sum of the per-hop prices.
pub fn path_cost(items: &[TagItem]) -> Result<Tokens, TokenOverflow> {
    Tokens::sum(items.iter().map(|i| &i.core.price))
}

/// Predicted satisfaction from advertised metrics: bottleneck bandwidth for
/// the throughput model; for the delay model, alpha when the advertised
/// latency sum is within the threshold plus beta over that sum (floored at
/// one tick).
pub fn predict_v(items: &[TagItem], model: &UtilityModel) -> f64 {
    match model.kind {
        ModelKind::Throughput => items
            .iter()
            .map(|i| i.core.metric.adv_bandwidth as f64)
            .fold(f64::INFINITY, f64::min),
        ModelKind::Delay => {
            let total: u64 = items
                .iter()
                .fold(0u64, |acc, i| acc.saturating_add(i.core.metric.adv_latency));
            let bonus = if total <= model.threshold_ticks {
                model.alpha
            } else {
                0.0
            };
            bonus + model.beta / total.max(1) as f64
        }
    }
}

/// One reporting window's worth of per-path observations.
#[derive(Debug, Clone, Copy)]
pub struct WindowObservation {
    pub delivered: u64,
    pub within_threshold: u64,
    pub latency_sum: u64,
    pub window_ticks: u64,
}

impl WindowObservation {
    pub fn from_counters(w: &WindowCounters, window_ticks: u64) -> Self {
        WindowObservation {
            delivered: w.delivered,
            within_threshold: w.within_threshold,
            latency_sum: w.latency_sum,
            window_ticks,
        }
    }
}

/// Measured satisfaction over a window. Zero deliveries are `NoSamples`, not
/// zero utility: the caller treats the arm as unexplored instead.
pub fn measured_v(obs: &WindowObservation, model: &UtilityModel) -> Result<f64, NoSamples> {
    if obs.delivered == 0 {
        return Err(NoSamples);
    }
    Ok(match model.kind {
        ModelKind::Delay => {
            let frac = obs.within_threshold as f64 / obs.delivered as f64;
            model.alpha * frac + model.beta * obs.delivered as f64 / obs.latency_sum.max(1) as f64
        }
        ModelKind::Throughput => obs.delivered as f64 / obs.window_ticks.max(1) as f64,
    })
}

/// U = ln(v / max(cost, eps_floor)). Zero satisfaction maps to the negative
/// infinity sentinel, ordered below every finite utility.
pub fn utility(v: f64, cost: Tokens, eps_floor: f64) -> f64 {
    if v <= 0.0 {
        return f64::NEG_INFINITY;
    }
    (v / (cost.amount() as f64).max(eps_floor)).ln()
}

/// Parses a returned probe tag into a priced path: every item must verify
/// and be inside its validity window at `now`.
pub fn register_path(
    tag: &PathTag,
    local_face: FaceId,
    now: Tick,
    model: &UtilityModel,
    resolver: &dyn KeyResolver,
) -> Result<PricedPath, RegisterError> {
    if tag.is_empty() {
        return Err(RegisterError::EmptyTag);
    }
    let items = tag.clone().into_route();
    for (idx, item) in items.iter().enumerate() {
        match crypto::verify_item(item, resolver) {
            Err(_) => return Err(RegisterError::Unregistered(idx)),
            Ok(false) => return Err(RegisterError::BadSignature(idx)),
            Ok(true) => {}
        }
        if !item.core.window.contains(now) {
            return Err(RegisterError::StalePrice(idx));
        }
    }
    let total_cost = path_cost(&items).map_err(|_| RegisterError::CostOverflow)?;
    let predicted_v = predict_v(&items, model);
    Ok(PricedPath {
        path_id: PathId::of_route(&items),
        items,
        total_cost,
        predicted_v,
        discovered_at: now,
        local_face,
    })
}

/// Epsilon-greedy draw. With probability eps_t a uniformly random arm;
/// otherwise the best-scoring arm, where unexplored arms are ranked by the
/// utility predicted from advertised metrics. Ties break toward the lowest
/// path id. Increments the round counter.
pub fn select_path<R: Rng + ?Sized>(bandit: &mut BanditState, rng: &mut R) -> Option<PathId> {
    if bandit.arms.is_empty() {
        return None;
    }
    let eps = bandit.epsilon();
    bandit.t += 1;
    let ids: Vec<PathId> = bandit.arms.keys().copied().collect();
    if rng.gen::<f64>() < eps {
        return Some(ids[rng.gen_range(0..ids.len())]);
    }
    let mut best: Option<(PathId, f64)> = None;
    for (id, stats) in &bandit.arms {
        let score = if stats.pulls == 0 {
            stats.predicted_u
        } else {
            stats.ewma_u.unwrap_or(stats.predicted_u)
        };
        match best {
            Some((_, best_score)) if score <= best_score => {}
            _ => best = Some((*id, score)),
        }
    }
    best.map(|(id, _)| id)
}

/// Folds an observed utility into the arm's EWMA estimate. The first
/// observation initializes the estimate directly.
pub fn update_estimate(
    bandit: &mut BanditState,
    path_id: PathId,
    u_observed: f64,
    gamma: f64,
) -> Result<(), UnknownArm> {
    assert!(gamma > 0.0 && gamma <= 1.0, "gamma must be in (0, 1]");
    let stats = bandit.arms.get_mut(&path_id).ok_or(UnknownArm)?;
    stats.ewma_u = Some(match stats.ewma_u {
        None => u_observed,
        Some(prev) => gamma * u_observed + (1.0 - gamma) * prev,
    });
    stats.pulls += 1;
    Ok(())
}

/// Builds a paying content Interest for `path`: a directing tag with the
/// first hop on top, and an envelope for the full path cost backed by a new
/// commitment on the first-hop channel.
pub fn build_content_interest(
    path: &PricedPath,
    name: Name,
    nonce: u64,
    consumer: &NodeId,
    keys: &Keypair,
    book: &mut ChannelBook,
) -> Result<Packet, BuildError> {
    let first_hop = path.first_hop();
    let channel = book
        .between_mut(consumer, first_hop)
        .ok_or(BuildError::NoChannel)?;
    let tx =
        payments::make_payment(channel, keys, consumer, path.total_cost).map_err(|e| match e {
            ChannelError::InsufficientChannelBalance => BuildError::InsufficientChannelBalance,
            other => BuildError::Channel(other),
        })?;
    let tag = PathTag::from_route(&path.items);
    let envelope = PaymentEnvelope {
        remaining: path.total_cost,
        commitment: tx,
    };
    Ok(Packet::content_interest(name, nonce, tag, envelope))
}
