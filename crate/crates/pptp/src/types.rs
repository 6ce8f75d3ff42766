//! Domain primitives shared by every other module.

use std::fmt;

use thiserror::Error;

/// Simulation time, in ticks. One tick is treated as one millisecond when
/// mapping latency thresholds.
pub type Tick = u64;

/// Opaque node identifier. Verification keys are resolved through the
/// ledger registry, never carried inline.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub String);

impl NodeId {
    pub fn new(id: impl Into<String>) -> Self {
        NodeId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One end of one link, scoped to a single node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FaceId(pub u32);

impl fmt::Display for FaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("token arithmetic overflow")]
pub struct TokenOverflow;

/// Token amount in the smallest indivisible unit "u". Arithmetic is checked;
/// overflow is an error, never a silent wrap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Tokens(u64);

impl Tokens {
    pub const ZERO: Tokens = Tokens(0);

    pub const fn new(amount: u64) -> Self {
        Tokens(amount)
    }

    pub const fn amount(self) -> u64 {
        self.0
    }

    pub fn checked_add(self, other: Tokens) -> Result<Tokens, TokenOverflow> {
        self.0.checked_add(other.0).map(Tokens).ok_or(TokenOverflow)
    }

    /// Subtraction below zero is an overflow: amounts are never negative.
    pub fn checked_sub(self, other: Tokens) -> Result<Tokens, TokenOverflow> {
        self.0.checked_sub(other.0).map(Tokens).ok_or(TokenOverflow)
    }

    pub fn sum<'a>(amounts: impl IntoIterator<Item = &'a Tokens>) -> Result<Tokens, TokenOverflow> {
        amounts
            .into_iter()
            .try_fold(Tokens::ZERO, |acc, t| acc.checked_add(*t))
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }
}

impl fmt::Display for Tokens {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}u", self.0)
    }
}

/// Validity interval for an advertised price. `not_after` is the "due" bound:
/// the advertiser may not change the price before it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Window {
    pub not_before: Tick,
    pub not_after: Tick,
}

impl Window {
    /// Panics if `not_before > not_after`; use [`Window::try_new`] for
    /// untrusted input.
    pub fn new(not_before: Tick, not_after: Tick) -> Self {
        assert!(not_before <= not_after, "window bounds out of order");
        Window {
            not_before,
            not_after,
        }
    }

    pub fn try_new(not_before: Tick, not_after: Tick) -> Option<Self> {
        (not_before <= not_after).then_some(Window {
            not_before,
            not_after,
        })
    }

    pub fn contains(&self, t: Tick) -> bool {
        self.not_before <= t && t <= self.not_after
    }

    pub fn overlaps(&self, other: &Window) -> bool {
        self.not_before.max(other.not_before) <= self.not_after.min(other.not_after)
    }
}

impl fmt::Display for Window {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{},{}]", self.not_before, self.not_after)
    }
}

/// Advertised hop performance: deliverable rate in packets per tick and
/// one-hop delay in ticks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PerfMetric {
    pub adv_bandwidth: u32,
    pub adv_latency: u64,
}

impl PerfMetric {
    pub fn new(adv_bandwidth: u32, adv_latency: u64) -> Self {
        PerfMetric {
            adv_bandwidth,
            adv_latency,
        }
    }

    /// Neutral metric for tag items that should not constrain a path
    /// prediction (used by producers, which price content, not a link).
    pub fn unconstrained() -> Self {
        PerfMetric {
            adv_bandwidth: u32::MAX,
            adv_latency: 0,
        }
    }
}

/// Monotonic nonce source. Nonces only need to be distinct, not
/// unpredictable, so a counter keeps runs reproducible.
#[derive(Debug, Clone, Default)]
pub struct NonceSeq(u64);

impl NonceSeq {
    pub fn new() -> Self {
        NonceSeq(0)
    }

    pub fn next(&mut self) -> u64 {
        self.0 += 1;
        self.0
    }
}
