//! Per-node NDN-style forwarding: FIB longest-prefix match, PIT reverse-path
//! state, round-robin probe dispersal, tag building on the Data return trip,
//! and tag-directed Interest forwarding with hop-by-hop payment splitting.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::crypto::Keypair;
use crate::name::Name;
use crate::packet::{Packet, PacketKind};
use crate::payments::{self, ChannelBook, ChannelError};
use crate::pricing::PriceBook;
use crate::tag::{PathTag, TagItemCore};
use crate::types::{FaceId, NodeId, PerfMetric, Tick, Tokens, Window};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeRole {
    Consumer,
    Router,
    Producer,
}

impl fmt::Display for NodeRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeRole::Consumer => "consumer",
            NodeRole::Router => "router",
            NodeRole::Producer => "producer",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no FIB entry matches the name")]
pub struct NoRoute;

/// Name prefix plus the ordered candidate faces. `rr_counter` realizes the
/// round-robin probe strategy.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FibEntry {
    pub prefix: Name,
    pub faces: Vec<FaceId>,
    pub rr_counter: u64,
}

/// Reverse-path breadcrumb for one pending Interest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PitEntry {
    pub name: Name,
    pub nonce: u64,
    pub in_face: FaceId,
    pub created: Tick,
    pub expiry: Tick,
}

/// Forwarding state of one node.
#[derive(Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub role: NodeRole,
    pub fib: Vec<FibEntry>,
    pub pit: BTreeMap<(Name, u64), PitEntry>,
    pub faces: Vec<FaceId>,
    /// Link-local adjacency: which node sits on the other end of each face.
    pub neighbors: BTreeMap<FaceId, NodeId>,
    pub pit_ttl: u64,
}

pub const DEFAULT_PIT_TTL: u64 = 100;

impl NodeState {
    pub fn new(id: NodeId, role: NodeRole) -> Self {
        NodeState {
            id,
            role,
            fib: Vec::new(),
            pit: BTreeMap::new(),
            faces: Vec::new(),
            neighbors: BTreeMap::new(),
            pit_ttl: DEFAULT_PIT_TTL,
        }
    }

    pub fn add_face(&mut self, face: FaceId, neighbor: NodeId) {
        self.faces.push(face);
        self.neighbors.insert(face, neighbor);
    }

    pub fn add_route(&mut self, prefix: Name, faces: Vec<FaceId>) {
        assert!(!faces.is_empty(), "FIB entry needs at least one face");
        self.fib.push(FibEntry {
            prefix,
            faces,
            rr_counter: 0,
        });
    }

    /// Round-robin face selection over the longest matching FIB entry,
    /// excluding the face the probe arrived on so probes never bounce
    /// straight back.
    pub fn probe_next_face(
        &mut self,
        name: &Name,
        exclude: Option<FaceId>,
    ) -> Result<FaceId, NoRoute> {
        let entry = self
            .fib
            .iter_mut()
            .filter(|e| e.prefix.is_prefix_of(name))
            .max_by_key(|e| e.prefix.len())
            .ok_or(NoRoute)?;
        let candidates: Vec<FaceId> = entry
            .faces
            .iter()
            .copied()
            .filter(|f| Some(*f) != exclude)
            .collect();
        if candidates.is_empty() {
            return Err(NoRoute);
        }
        let face = candidates[(entry.rr_counter % candidates.len() as u64) as usize];
        entry.rr_counter += 1;
        Ok(face)
    }

    pub fn insert_pit(&mut self, name: Name, nonce: u64, in_face: FaceId, now: Tick) {
        let entry = PitEntry {
            name: name.clone(),
            nonce,
            in_face,
            created: now,
            expiry: now + self.pit_ttl,
        };
        self.pit.insert((name, nonce), entry);
    }

    /// Removes expired entries; returns how many were dropped.
    pub fn sweep_pit(&mut self, now: Tick) -> usize {
        let before = self.pit.len();
        self.pit.retain(|_, e| e.expiry > now);
        before - self.pit.len()
    }
}

/// Why a packet was not forwarded. Protocol-level failures become counters
/// in the harness, never aborts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum DropReason {
    NoRoute,
    PitDuplicate,
    TagMismatch,
    Malformed,
    NoPitEntry,
    NoActivePrice,
    PaymentRejected,
    UnderfundedEnvelope,
    DownstreamPayment,
    NotForwarder,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            DropReason::NoRoute => "no-route",
            DropReason::PitDuplicate => "pit-duplicate",
            DropReason::TagMismatch => "tag-mismatch",
            DropReason::Malformed => "malformed",
            DropReason::NoPitEntry => "no-pit-entry",
            DropReason::NoActivePrice => "no-active-price",
            DropReason::PaymentRejected => "payment-rejected",
            DropReason::UnderfundedEnvelope => "underfunded-envelope",
            DropReason::DownstreamPayment => "downstream-payment",
            DropReason::NotForwarder => "not-forwarder",
        };
        f.write_str(s)
    }
}

/// Outcome of handling one packet at one node.
#[derive(Debug)]
pub enum Action {
    Forward { face: FaceId, pkt: Packet },
    Drop(DropReason),
}

/// Payment context threaded through content-Interest handling.
pub struct PayCtx<'a> {
    pub channels: &'a mut ChannelBook,
    pub resolver: &'a dyn crate::crypto::KeyResolver,
}

/// A content prefix a producer serves, with its price per Data packet.
#[derive(Debug, Clone)]
pub struct ContentOffer {
    pub prefix: Name,
    pub price: Tokens,
}

/// One router or producer: forwarding state plus signing identity, price
/// schedule and revenue accounting. Consumers keep a `NodeState` for their
/// FIB and faces but are driven by the consumer engine instead.
pub struct Node {
    pub state: NodeState,
    pub keys: Keypair,
    pub pricing: PriceBook,
    pub contents: Vec<ContentOffer>,
    /// Tokens intentionally kept from envelopes (own price, or the residual
    /// at the producer).
    pub revenue: Tokens,
    /// Tokens that landed in this node's channels on packets that were then
    /// dropped (accepted inbound payment, failed forward).
    pub windfall: Tokens,
    pub content_payload_size: u32,
}

impl Node {
    pub fn new(id: NodeId, role: NodeRole, keys: Keypair) -> Self {
        let pricing = PriceBook::new(id.clone());
        Node {
            state: NodeState::new(id, role),
            keys,
            pricing,
            contents: Vec::new(),
            revenue: Tokens::ZERO,
            windfall: Tokens::ZERO,
            content_payload_size: 1024,
        }
    }

    pub fn id(&self) -> &NodeId {
        &self.state.id
    }

    pub fn offer_content(&mut self, prefix: Name, price: Tokens) {
        self.contents.push(ContentOffer { prefix, price });
    }

    fn owned_offer(&self, name: &Name) -> Option<&ContentOffer> {
        self.contents
            .iter()
            .filter(|c| c.prefix.is_prefix_of(name))
            .max_by_key(|c| c.prefix.len())
    }

    /// Interest arrival. Probes disperse round-robin and leave a PIT
    /// breadcrumb; tag-directed content Interests pop their own item, settle
    /// the hop payment and follow the recorded face; producers answer.
    pub fn handle_interest(
        &mut self,
        in_face: FaceId,
        pkt: Packet,
        now: Tick,
        pay: &mut PayCtx<'_>,
    ) -> Action {
        debug_assert_eq!(pkt.kind, PacketKind::Interest);
        match self.state.role {
            NodeRole::Consumer => Action::Drop(DropReason::NotForwarder),
            NodeRole::Producer => self.producer_interest(in_face, pkt, now, pay),
            NodeRole::Router => {
                if self.state.pit.contains_key(&(pkt.name.clone(), pkt.nonce)) {
                    return Action::Drop(DropReason::PitDuplicate);
                }
                if pkt.probe_flag {
                    let out = match self.state.probe_next_face(&pkt.name, Some(in_face)) {
                        Ok(f) => f,
                        Err(NoRoute) => return Action::Drop(DropReason::NoRoute),
                    };
                    self.state
                        .insert_pit(pkt.name.clone(), pkt.nonce, in_face, now);
                    Action::Forward { face: out, pkt }
                } else {
                    self.router_content_interest(in_face, pkt, now, pay)
                }
            }
        }
    }

    fn router_content_interest(
        &mut self,
        in_face: FaceId,
        mut pkt: Packet,
        now: Tick,
        pay: &mut PayCtx<'_>,
    ) -> Action {
        let (Some(tag), Some(envelope)) = (pkt.tag.as_mut(), pkt.envelope.take()) else {
            return Action::Drop(DropReason::Malformed);
        };
        let Some(item) = tag.pop() else {
            return Action::Drop(DropReason::Malformed);
        };
        if item.core.advertiser != self.state.id {
            return Action::Drop(DropReason::TagMismatch);
        }
        let out_face = item.core.face;
        let Some(next_hop) = self.state.neighbors.get(&out_face).cloned() else {
            return Action::Drop(DropReason::TagMismatch);
        };
        let Some(upstream) = self.state.neighbors.get(&in_face).cloned() else {
            return Action::Drop(DropReason::Malformed);
        };
        match payments::split_and_forward(
            pay.channels,
            &self.state.id,
            &self.keys,
            &upstream,
            &envelope,
            item.core.price,
            Some(&next_hop),
            pay.resolver,
        ) {
            Ok(outcome) => {
                self.revenue = self.revenue.checked_add(outcome.kept).expect("bounded");
                pkt.envelope = outcome.forwarded;
                self.state
                    .insert_pit(pkt.name.clone(), pkt.nonce, in_face, now);
                Action::Forward {
                    face: out_face,
                    pkt,
                }
            }
            Err(payments::SplitError::Inbound(_)) => Action::Drop(DropReason::PaymentRejected),
            Err(payments::SplitError::AfterAccept { kept, cause }) => {
                self.windfall = self.windfall.checked_add(kept).expect("bounded");
                Action::Drop(match cause {
                    ChannelError::UnderfundedEnvelope => DropReason::UnderfundedEnvelope,
                    _ => DropReason::DownstreamPayment,
                })
            }
        }
    }

    fn producer_interest(
        &mut self,
        in_face: FaceId,
        mut pkt: Packet,
        now: Tick,
        pay: &mut PayCtx<'_>,
    ) -> Action {
        if pkt.probe_flag {
            return match self.produce_data(&pkt, in_face, now) {
                Ok(data) => Action::Forward {
                    face: in_face,
                    pkt: data,
                },
                Err(reason) => Action::Drop(reason),
            };
        }
        if self.owned_offer(&pkt.name).is_none() {
            return Action::Drop(DropReason::NoRoute);
        }
        let (Some(tag), Some(envelope)) = (pkt.tag.as_mut(), pkt.envelope.take()) else {
            return Action::Drop(DropReason::Malformed);
        };
        let Some(item) = tag.pop() else {
            return Action::Drop(DropReason::Malformed);
        };
        if item.core.advertiser != self.state.id || !tag.is_empty() {
            return Action::Drop(DropReason::TagMismatch);
        }
        let Some(upstream) = self.state.neighbors.get(&in_face).cloned() else {
            return Action::Drop(DropReason::Malformed);
        };
        match payments::split_and_forward(
            pay.channels,
            &self.state.id,
            &self.keys,
            &upstream,
            &envelope,
            item.core.price,
            None,
            pay.resolver,
        ) {
            Ok(outcome) => {
                // The residual is credited to the producer.
                self.revenue = self.revenue.checked_add(outcome.kept).expect("bounded");
                match self.produce_data(&pkt, in_face, now) {
                    Ok(data) => Action::Forward {
                        face: in_face,
                        pkt: data,
                    },
                    Err(reason) => Action::Drop(reason),
                }
            }
            Err(payments::SplitError::Inbound(_)) => Action::Drop(DropReason::PaymentRejected),
            Err(payments::SplitError::AfterAccept { kept, .. }) => {
                self.windfall = self.windfall.checked_add(kept).expect("bounded");
                Action::Drop(DropReason::PaymentRejected)
            }
        }
    }

    /// Builds the Data packet a producer answers with. A probe gets a tag
    /// holding exactly the producer's own priced, signed item; a content
    /// Interest gets plain Data.
    pub fn produce_data(
        &mut self,
        interest: &Packet,
        in_face: FaceId,
        _now: Tick,
    ) -> Result<Packet, DropReason> {
        debug_assert_eq!(self.state.role, NodeRole::Producer);
        let offer = self
            .owned_offer(&interest.name)
            .ok_or(DropReason::NoRoute)?;
        if interest.probe_flag {
            let item = TagItemCore {
                advertiser: self.state.id.clone(),
                face: in_face,
                price: offer.price,
                window: Window::new(0, Tick::MAX),
                metric: PerfMetric::unconstrained(),
            }
            .sign(&self.keys);
            let mut tag = PathTag::new();
            tag.push(item);
            Ok(Packet::probe_data(
                interest.name.clone(),
                interest.nonce,
                tag,
            ))
        } else {
            Ok(Packet::content_data(
                interest.name.clone(),
                interest.nonce,
                self.content_payload_size,
            ))
        }
    }

    /// Data arrival at a router: consume the PIT breadcrumb and forward back
    /// toward the consumer; probe Data additionally grows the tag by this
    /// node's priced item for the receiving face.
    pub fn handle_data(&mut self, in_face: FaceId, mut pkt: Packet, now: Tick) -> Action {
        debug_assert_eq!(pkt.kind, PacketKind::Data);
        let key = (pkt.name.clone(), pkt.nonce);
        let Some(entry) = self.state.pit.remove(&key) else {
            return Action::Drop(DropReason::NoPitEntry);
        };
        if pkt.probe_flag && self.state.role == NodeRole::Router {
            let item = match self.pricing.advertise(in_face, now, &self.keys) {
                Ok(item) => item,
                Err(_) => return Action::Drop(DropReason::NoActivePrice),
            };
            let Some(tag) = pkt.tag.as_mut() else {
                return Action::Drop(DropReason::Malformed);
            };
            tag.push(item);
        }
        Action::Forward {
            face: entry.in_face,
            pkt,
        }
    }
}
