//! Router-side price management: per-face price schedules with validity
//! windows, no-equivocation enforcement for honest routers, a fault-injection
//! hook for tests, and the conflict predicate shared with the ledger.

use thiserror::Error;

use crate::crypto::{self, KeyResolver, Keypair};
use crate::tag::{TagItem, TagItemCore};
use crate::types::{FaceId, NodeId, PerfMetric, Tick, Tokens, Window};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PricingError {
    #[error("schedule conflicts with a previously committed price")]
    EquivocationRefused,
    #[error("no price window covers the current tick for this face")]
    NoActivePrice,
    #[error("equivocation is only available in fault-injection mode")]
    FaultInjectionDisabled,
}

/// One scheduled price for one face.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PriceEntry {
    pub face: FaceId,
    pub price: Tokens,
    pub window: Window,
    pub metric: PerfMetric,
}

/// A router's price schedule plus the append-only log of every signed item
/// it has emitted (the evidence base for disputes).
#[derive(Debug)]
pub struct PriceBook {
    owner: NodeId,
    entries: Vec<PriceEntry>,
    issued: Vec<TagItem>,
    fault_injection: bool,
}

impl PriceBook {
    pub fn new(owner: NodeId) -> Self {
        PriceBook {
            owner,
            entries: Vec::new(),
            issued: Vec::new(),
            fault_injection: false,
        }
    }

    pub fn owner(&self) -> &NodeId {
        &self.owner
    }

    pub fn enable_fault_injection(&mut self) {
        self.fault_injection = true;
    }

    pub fn entries(&self) -> &[PriceEntry] {
        &self.entries
    }

    /// Every signed item this router has ever emitted.
    pub fn issued(&self) -> &[TagItem] {
        &self.issued
    }

    /// Records a price for a face. Refused if it would commit the router to
    /// two different prices for the same face in overlapping windows;
    /// same-price overlaps are allowed.
    pub fn set_price(
        &mut self,
        face: FaceId,
        price: Tokens,
        window: Window,
        metric: PerfMetric,
    ) -> Result<(), PricingError> {
        let conflicts = self
            .entries
            .iter()
            .any(|e| e.face == face && e.window.overlaps(&window) && e.price != price);
        if conflicts {
            return Err(PricingError::EquivocationRefused);
        }
        self.entries.push(PriceEntry {
            face,
            price,
            window,
            metric,
        });
        Ok(())
    }

    /// Builds and logs a signed tag item from the active price entry for
    /// `face`. Two calls within one window yield byte-identical item cores.
    pub fn advertise(
        &mut self,
        face: FaceId,
        now: Tick,
        keys: &Keypair,
    ) -> Result<TagItem, PricingError> {
        let entry = self
            .entries
            .iter()
            .find(|e| e.face == face && e.window.contains(now))
            .ok_or(PricingError::NoActivePrice)?;
        let item = TagItemCore {
            advertiser: self.owner.clone(),
            face,
            price: entry.price,
            window: entry.window,
            metric: entry.metric,
        }
        .sign(keys);
        self.issued.push(item.clone());
        Ok(item)
    }

    /// Fault injection: emits a signed item bypassing the conflict check.
    /// Refused outside fault-injection mode.
    pub fn equivocate_for_test(
        &mut self,
        face: FaceId,
        price: Tokens,
        window: Window,
        metric: PerfMetric,
        keys: &Keypair,
    ) -> Result<TagItem, PricingError> {
        if !self.fault_injection {
            return Err(PricingError::FaultInjectionDisabled);
        }
        let item = TagItemCore {
            advertiser: self.owner.clone(),
            face,
            price,
            window,
            metric,
        }
        .sign(keys);
        self.issued.push(item.clone());
        Ok(item)
    }
}

/// Field-level conflict: same advertiser and face, overlapping windows,
/// different prices. The metric is deliberately not inspected; only price
/// equivocation is punishable.
pub fn conflicting_cores(a: &TagItemCore, b: &TagItemCore) -> bool {
    a.advertiser == b.advertiser
        && a.face == b.face
        && a.window.overlaps(&b.window)
        && a.price != b.price
}

/// The dispute predicate: both signatures valid and the cores conflict.
/// Invalid or unresolvable signatures yield `false` here; the ledger reports
/// them distinctly.
pub fn detect_conflict(a: &TagItem, b: &TagItem, resolver: &dyn KeyResolver) -> bool {
    crypto::verify_item(a, resolver).unwrap_or(false)
        && crypto::verify_item(b, resolver).unwrap_or(false)
        && conflicting_cores(&a.core, &b.core)
}
