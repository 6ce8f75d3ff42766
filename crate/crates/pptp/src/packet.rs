//! The two packet kinds and their construction rules.
//!
//! Probe Interests carry no tag and no envelope; content Interests carry a
//! directing tag plus a payment envelope; probe Data carries the accumulating
//! tag.

use crate::name::Name;
use crate::payments::PaymentEnvelope;
use crate::tag::PathTag;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PacketKind {
    Interest,
    Data,
}

#[derive(Debug, Clone)]
pub struct Packet {
    pub kind: PacketKind,
    pub name: Name,
    pub nonce: u64,
    pub probe_flag: bool,
    /// Data: accumulating tag; Interest: directing tag.
    pub tag: Option<PathTag>,
    /// Content Interests only.
    pub envelope: Option<PaymentEnvelope>,
    /// Data only, in bytes.
    pub payload_size: u32,
}

impl Packet {
    pub fn probe_interest(name: Name, nonce: u64) -> Self {
        Packet {
            kind: PacketKind::Interest,
            name,
            nonce,
            probe_flag: true,
            tag: None,
            envelope: None,
            payload_size: 0,
        }
    }

    pub fn content_interest(
        name: Name,
        nonce: u64,
        tag: PathTag,
        envelope: PaymentEnvelope,
    ) -> Self {
        Packet {
            kind: PacketKind::Interest,
            name,
            nonce,
            probe_flag: false,
            tag: Some(tag),
            envelope: Some(envelope),
            payload_size: 0,
        }
    }

    pub fn probe_data(name: Name, nonce: u64, tag: PathTag) -> Self {
        Packet {
            kind: PacketKind::Data,
            name,
            nonce,
            probe_flag: true,
            tag: Some(tag),
            envelope: None,
            payload_size: 0,
        }
    }

    pub fn content_data(name: Name, nonce: u64, payload_size: u32) -> Self {
        Packet {
            kind: PacketKind::Data,
            name,
            nonce,
            probe_flag: false,
            tag: None,
            envelope: None,
            payload_size,
        }
    }

    pub fn is_interest(&self) -> bool {
        self.kind == PacketKind::Interest
    }

    pub fn is_data(&self) -> bool {
        self.kind == PacketKind::Data
    }
}
