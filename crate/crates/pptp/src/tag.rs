//! Path tags: the per-hop priced, signed records accumulated on a probe
//! Data packet's return trip, and later copied into content Interests to pin
//! the path.

use crate::crypto::{Keypair, Signature};
use crate::types::{FaceId, NodeId, PerfMetric, Tokens, Window};

/// Everything in a tag item except the signature; this is exactly what gets
/// signed.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TagItemCore {
    pub advertiser: NodeId,
    /// Receiving interface recorded when the probe Data arrived at the
    /// advertiser; the face a directed Interest is later forwarded out of.
    pub face: FaceId,
    /// The advertiser's fee for this hop, per Data packet delivered.
    pub price: Tokens,
    /// Validity window; the price may not change before `not_after`.
    pub window: Window,
    pub metric: PerfMetric,
}

impl TagItemCore {
    pub fn sign(self, keys: &Keypair) -> TagItem {
        let signature = crate::crypto::sign_item(keys, &self);
        TagItem {
            core: self,
            signature,
        }
    }
}

/// A signed per-hop advertisement.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagItem {
    pub core: TagItemCore,
    pub signature: Signature,
}

/// Stack of tag items. Items are pushed in producer-to-consumer traversal
/// order, so the top is the node adjacent to the consumer and popping yields
/// consumer-to-producer order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PathTag {
    items: Vec<TagItem>,
}

impl PathTag {
    pub fn new() -> Self {
        PathTag { items: Vec::new() }
    }

    pub fn push(&mut self, item: TagItem) {
        self.items.push(item);
    }

    pub fn pop(&mut self) -> Option<TagItem> {
        self.items.pop()
    }

    pub fn top(&self) -> Option<&TagItem> {
        self.items.last()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Bottom-to-top iteration (producer first).
    pub fn iter(&self) -> impl Iterator<Item = &TagItem> {
        self.items.iter()
    }

    /// Drains the stack into consumer-to-producer order.
    pub fn into_route(mut self) -> Vec<TagItem> {
        let mut route = Vec::with_capacity(self.items.len());
        while let Some(item) = self.pop() {
            route.push(item);
        }
        route
    }

    /// Builds a directing tag from a consumer-to-producer route: the first
    /// hop ends up on top.
    pub fn from_route(route: &[TagItem]) -> Self {
        let mut tag = PathTag::new();
        for item in route.iter().rev() {
            tag.push(item.clone());
        }
        tag
    }
}
