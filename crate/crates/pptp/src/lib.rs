//! Price-advertising path probing over an NDN-style forwarding plane.
//!
//! Consumers discover content delivery paths with probe Interests; each
//! router on the return trip appends a signed, priced, due-dated record to
//! the probe Data's path tag. Consumers score the discovered paths with a
//! log cost-performance utility, pick paths with an explore-and-exploit
//! policy, and pay hop by hop through pairwise micropayment channels whose
//! final balances settle on a mock ledger. Price equivocation is provable
//! from any two conflicting signed advertisements and punished by burning
//! the advertiser's security deposit.

pub mod codec;
pub mod consumer;
pub mod crypto;
pub mod forwarding;
pub mod ledger;
pub mod name;
pub mod packet;
pub mod payments;
pub mod pricing;
pub mod tag;
pub mod types;

pub use crate::name::Name;
pub use crate::packet::{Packet, PacketKind};
pub use crate::tag::{PathTag, TagItem, TagItemCore};
pub use crate::types::{FaceId, NodeId, PerfMetric, Tick, Tokens, Window};
