//! Pairwise micropayment channels, multi-signed commitment transactions, and
//! the hop-by-hop cheque-splitting rule.
//!
//! A commitment is issued by the payer against the channel's last accepted
//! state and only takes effect when the payee countersigns it. Payment
//! commits at Interest-forwarding time: a node that accepts a payment but
//! never receives the Data keeps the tokens.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::codec;
use crate::crypto::{KeyResolver, Keypair, Signature};
use crate::ledger::Ledger;
use crate::types::{NodeId, Tokens};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChannelId(pub u64);

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ch{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelStatus {
    Open,
    Settled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    A,
    B,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error("party is not registered on the ledger")]
    Unregistered,
    #[error("on-chain balance does not cover the deposit")]
    InsufficientOnChainFunds,
    #[error("a channel for this ordered pair already exists")]
    DuplicateChannel,
    #[error("no channel between the two parties")]
    NoChannel,
    #[error("node is not a party to this channel")]
    NotAParty,
    #[error("channel balance does not cover the amount")]
    InsufficientChannelBalance,
    #[error("channel is settled")]
    ChannelSettled,
    #[error("commitment is not at the next sequence number")]
    StaleSeq,
    #[error("payer signature missing or invalid")]
    BadSignature,
    #[error("commitment balances do not conserve the deposit total")]
    NonConserving,
    #[error("transfer does not pay the acceptor")]
    WrongDirection,
    #[error("commitment names a different channel")]
    WrongChannel,
    #[error("envelope amount does not match the commitment transfer")]
    AmountMismatch,
    #[error("envelope remainder is below the hop price")]
    UnderfundedEnvelope,
}

/// A multi-signed off-chain balance snapshot at a sequence number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitmentTx {
    pub channel_id: ChannelId,
    pub seq: u64,
    pub balance_a: Tokens,
    pub balance_b: Tokens,
    pub sig_a: Option<Signature>,
    pub sig_b: Option<Signature>,
}

impl CommitmentTx {
    pub fn signing_bytes(&self) -> Vec<u8> {
        codec::encode_commitment_core(self.channel_id, self.seq, self.balance_a, self.balance_b)
    }

    pub fn signature_of(&self, party: Party) -> Option<&Signature> {
        match party {
            Party::A => self.sig_a.as_ref(),
            Party::B => self.sig_b.as_ref(),
        }
    }

    pub fn set_signature(&mut self, party: Party, sig: Signature) {
        match party {
            Party::A => self.sig_a = Some(sig),
            Party::B => self.sig_b = Some(sig),
        }
    }
}

/// The cheque attached to a content Interest. `remaining` shrinks by each
/// hop's price as the packet travels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PaymentEnvelope {
    pub remaining: Tokens,
    /// Payer-signed, awaiting countersignature by the receiving hop.
    pub commitment: CommitmentTx,
}

/// A pairwise channel. Balances always sum to the deposit total; `seq`
/// advances by exactly one per accepted commitment.
#[derive(Debug, Clone)]
pub struct Channel {
    pub id: ChannelId,
    pub party_a: NodeId,
    pub party_b: NodeId,
    pub deposit_a: Tokens,
    pub deposit_b: Tokens,
    pub balance_a: Tokens,
    pub balance_b: Tokens,
    pub seq: u64,
    pub status: ChannelStatus,
    /// Latest fully-signed commitment, kept for settlement.
    pub latest: Option<CommitmentTx>,
}

impl Channel {
    pub fn party_of(&self, node: &NodeId) -> Option<Party> {
        if *node == self.party_a {
            Some(Party::A)
        } else if *node == self.party_b {
            Some(Party::B)
        } else {
            None
        }
    }

    pub fn peer_of(&self, node: &NodeId) -> Option<&NodeId> {
        match self.party_of(node)? {
            Party::A => Some(&self.party_b),
            Party::B => Some(&self.party_a),
        }
    }

    pub fn balance_of(&self, party: Party) -> Tokens {
        match party {
            Party::A => self.balance_a,
            Party::B => self.balance_b,
        }
    }

    pub fn deposit_total(&self) -> Tokens {
        // Deposits were escrowed through checked arithmetic at open time.
        self.deposit_a
            .checked_add(self.deposit_b)
            .expect("escrowed")
    }

    /// Spendable balance of `node`, or zero for a non-party.
    pub fn spendable(&self, node: &NodeId) -> Tokens {
        self.party_of(node)
            .map(|p| self.balance_of(p))
            .unwrap_or(Tokens::ZERO)
    }
}

/// All channels of a run, indexed by id and by ordered party pair.
#[derive(Debug, Default)]
pub struct ChannelBook {
    channels: BTreeMap<ChannelId, Channel>,
    by_pair: BTreeMap<(NodeId, NodeId), ChannelId>,
}

impl ChannelBook {
    pub fn new() -> Self {
        ChannelBook::default()
    }

    pub fn get(&self, id: ChannelId) -> Option<&Channel> {
        self.channels.get(&id)
    }

    pub fn get_mut(&mut self, id: ChannelId) -> Option<&mut Channel> {
        self.channels.get_mut(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Channel> {
        self.channels.values()
    }

    pub fn ids(&self) -> Vec<ChannelId> {
        self.channels.keys().copied().collect()
    }

    /// Looks up a channel between two nodes, preferring the (x, y) ordered
    /// pair over (y, x).
    pub fn find_between(&self, x: &NodeId, y: &NodeId) -> Option<ChannelId> {
        self.by_pair
            .get(&(x.clone(), y.clone()))
            .or_else(|| self.by_pair.get(&(y.clone(), x.clone())))
            .copied()
    }

    pub fn between_mut(&mut self, x: &NodeId, y: &NodeId) -> Option<&mut Channel> {
        let id = self.find_between(x, y)?;
        self.channels.get_mut(&id)
    }

    fn insert(&mut self, channel: Channel) {
        self.by_pair.insert(
            (channel.party_a.clone(), channel.party_b.clone()),
            channel.id,
        );
        self.channels.insert(channel.id, channel);
    }
}

/// Escrows both deposits on the ledger and opens the channel at seq 0.
pub fn open_channel(
    ledger: &mut Ledger,
    book: &mut ChannelBook,
    a: &NodeId,
    b: &NodeId,
    deposit_a: Tokens,
    deposit_b: Tokens,
) -> Result<ChannelId, ChannelError> {
    if a == b {
        return Err(ChannelError::NotAParty);
    }
    if book.by_pair.contains_key(&(a.clone(), b.clone())) {
        return Err(ChannelError::DuplicateChannel);
    }
    let id = ledger.escrow_channel(a, b, deposit_a, deposit_b)?;
    book.insert(Channel {
        id,
        party_a: a.clone(),
        party_b: b.clone(),
        deposit_a,
        deposit_b,
        balance_a: deposit_a,
        balance_b: deposit_b,
        seq: 0,
        status: ChannelStatus::Open,
        latest: None,
    });
    Ok(id)
}

/// Issues a payer-signed commitment at `seq + 1` shifting `amount` from the
/// payer to its peer. The channel state itself only advances when the peer
/// accepts.
pub fn make_payment(
    channel: &Channel,
    payer_keys: &Keypair,
    payer: &NodeId,
    amount: Tokens,
) -> Result<CommitmentTx, ChannelError> {
    if channel.status == ChannelStatus::Settled {
        return Err(ChannelError::ChannelSettled);
    }
    let payer_party = channel.party_of(payer).ok_or(ChannelError::NotAParty)?;
    let (new_a, new_b) = match payer_party {
        Party::A => (
            channel
                .balance_a
                .checked_sub(amount)
                .map_err(|_| ChannelError::InsufficientChannelBalance)?,
            channel.balance_b.checked_add(amount).expect("conserving"),
        ),
        Party::B => (
            channel.balance_a.checked_add(amount).expect("conserving"),
            channel
                .balance_b
                .checked_sub(amount)
                .map_err(|_| ChannelError::InsufficientChannelBalance)?,
        ),
    };
    let mut tx = CommitmentTx {
        channel_id: channel.id,
        seq: channel.seq + 1,
        balance_a: new_a,
        balance_b: new_b,
        sig_a: None,
        sig_b: None,
    };
    let sig = payer_keys.sign(&tx.signing_bytes());
    tx.set_signature(payer_party, sig);
    Ok(tx)
}

/// Countersigns and applies a commitment that pays the acceptor. On success
/// the channel advances to the commitment's balances and sequence number and
/// retains the fully-signed commitment.
pub fn accept_payment(
    channel: &mut Channel,
    tx: &CommitmentTx,
    acceptor_keys: &Keypair,
    acceptor: &NodeId,
    resolver: &dyn KeyResolver,
) -> Result<Tokens, ChannelError> {
    if channel.status == ChannelStatus::Settled {
        return Err(ChannelError::ChannelSettled);
    }
    if tx.channel_id != channel.id {
        return Err(ChannelError::WrongChannel);
    }
    let acceptor_party = channel.party_of(acceptor).ok_or(ChannelError::NotAParty)?;
    if tx.seq != channel.seq + 1 {
        return Err(ChannelError::StaleSeq);
    }
    let total = tx
        .balance_a
        .checked_add(tx.balance_b)
        .map_err(|_| ChannelError::NonConserving)?;
    if total != channel.deposit_total() {
        return Err(ChannelError::NonConserving);
    }
    let old = channel.balance_of(acceptor_party);
    let new = match acceptor_party {
        Party::A => tx.balance_a,
        Party::B => tx.balance_b,
    };
    let received = new
        .checked_sub(old)
        .map_err(|_| ChannelError::WrongDirection)?;
    let payer_party = match acceptor_party {
        Party::A => Party::B,
        Party::B => Party::A,
    };
    let payer = match payer_party {
        Party::A => &channel.party_a,
        Party::B => &channel.party_b,
    };
    let payer_key = resolver
        .pubkey_of(payer)
        .ok_or(ChannelError::Unregistered)?;
    let payer_sig = tx
        .signature_of(payer_party)
        .ok_or(ChannelError::BadSignature)?;
    use ed25519_dalek::Verifier;
    if payer_key.verify(&tx.signing_bytes(), payer_sig).is_err() {
        return Err(ChannelError::BadSignature);
    }

    let mut full = tx.clone();
    full.set_signature(acceptor_party, acceptor_keys.sign(&tx.signing_bytes()));
    channel.balance_a = tx.balance_a;
    channel.balance_b = tx.balance_b;
    channel.seq = tx.seq;
    channel.latest = Some(full);
    Ok(received)
}

/// Result of a successful hop split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitOutcome {
    /// Tokens this node keeps: its own price, or the whole remainder at the
    /// producer.
    pub kept: Tokens,
    /// Envelope for the next hop; `None` at the producer.
    pub forwarded: Option<PaymentEnvelope>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SplitError {
    /// The inbound commitment was rejected; no channel state changed.
    #[error("inbound payment rejected: {0}")]
    Inbound(ChannelError),
    /// The inbound payment was accepted (tokens landed in this node's
    /// channel) but the packet cannot be forwarded. The packet is dropped
    /// and nothing is refunded upstream.
    #[error("payment accepted but forwarding failed: {cause}")]
    AfterAccept { kept: Tokens, cause: ChannelError },
}

/// Applies the cheque-splitting rule at one hop: accept the inbound
/// commitment from `upstream`, keep `own_price`, and re-issue the remainder
/// toward `next_hop`. At the producer (`next_hop` is `None`) the whole
/// remainder is kept.
pub fn split_and_forward(
    book: &mut ChannelBook,
    node: &NodeId,
    node_keys: &Keypair,
    upstream: &NodeId,
    envelope_in: &PaymentEnvelope,
    own_price: Tokens,
    next_hop: Option<&NodeId>,
    resolver: &dyn KeyResolver,
) -> Result<SplitOutcome, SplitError> {
    let inbound = book
        .between_mut(upstream, node)
        .ok_or(SplitError::Inbound(ChannelError::NoChannel))?;
    // The envelope must transfer exactly what it claims.
    let received = accept_payment(inbound, &envelope_in.commitment, node_keys, node, resolver)
        .map_err(SplitError::Inbound)?;
    if received != envelope_in.remaining {
        // Accepted a commitment whose transfer disagrees with the sticker
        // amount; keep the tokens, drop the packet.
        return Err(SplitError::AfterAccept {
            kept: received,
            cause: ChannelError::AmountMismatch,
        });
    }

    let Some(next) = next_hop else {
        return Ok(SplitOutcome {
            kept: envelope_in.remaining,
            forwarded: None,
        });
    };

    let onward = match envelope_in.remaining.checked_sub(own_price) {
        Ok(v) => v,
        Err(_) => {
            return Err(SplitError::AfterAccept {
                kept: envelope_in.remaining,
                cause: ChannelError::UnderfundedEnvelope,
            })
        }
    };
    let outbound = match book.between_mut(node, next) {
        Some(c) => c,
        None => {
            return Err(SplitError::AfterAccept {
                kept: envelope_in.remaining,
                cause: ChannelError::NoChannel,
            })
        }
    };
    let tx = match make_payment(outbound, node_keys, node, onward) {
        Ok(tx) => tx,
        Err(cause) => {
            return Err(SplitError::AfterAccept {
                kept: envelope_in.remaining,
                cause,
            })
        }
    };
    Ok(SplitOutcome {
        kept: own_price,
        forwarded: Some(PaymentEnvelope {
            remaining: onward,
            commitment: tx,
        }),
    })
}
