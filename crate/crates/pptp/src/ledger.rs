//! Mock blockchain: identity registration with security deposits, channel
//! escrow, cooperative settlement, and price-equivocation disputes.
//!
//! The ledger is an in-process deterministic state machine with a single
//! logical writer. Tokens enter the system only at registration; afterwards
//! the sum of balances, unburned deposits, live escrow and burned tokens is
//! constant.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

use crate::crypto::{KeyResolver, VerifyingKey};
use crate::payments::{Channel, ChannelError, ChannelId, ChannelStatus, CommitmentTx, Party};
use crate::pricing;
use crate::tag::TagItem;
use crate::types::{NodeId, Tokens};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LedgerError {
    #[error("node is already registered")]
    DuplicateRegistration,
    #[error("node is not registered")]
    Unregistered,
    #[error("commitment is missing a signature")]
    MissingSignature,
    #[error("commitment signature is invalid")]
    BadSignature,
    #[error("final balances do not match the escrowed total")]
    NonConserving,
    #[error("channel is already settled")]
    AlreadySettled,
    #[error("a higher sequence number was already submitted for this channel")]
    StaleSubmission,
    #[error("commitment names an unknown channel")]
    UnknownChannel,
}

#[derive(Debug, Clone)]
pub struct Account {
    pub node: NodeId,
    pub pubkey: VerifyingKey,
    /// Spendable on-chain balance; excludes escrow and the security deposit.
    pub balance: Tokens,
    pub security_deposit: Tokens,
    /// Latching: set by a Punished verdict, never cleared within a run.
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    NoConflict,
    BadSignature,
    UnknownAdvertiser,
    AlreadyPunished,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::NoConflict => "no-conflict",
            RejectReason::BadSignature => "bad-signature",
            RejectReason::UnknownAdvertiser => "unknown-advertiser",
            RejectReason::AlreadyPunished => "already-punished",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Punished { advertiser: NodeId, burned: Tokens },
    Rejected(RejectReason),
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Punished { advertiser, burned } => {
                write!(f, "punished advertiser={advertiser} burned={burned}")
            }
            Verdict::Rejected(reason) => write!(f, "rejected reason={reason}"),
        }
    }
}

/// One dispute submission and its outcome.
#[derive(Debug, Clone)]
pub struct DisputeRecord {
    pub advertiser: NodeId,
    pub submitter: NodeId,
    pub verdict: Verdict,
}

#[derive(Debug, Default)]
pub struct Ledger {
    accounts: BTreeMap<NodeId, Account>,
    escrows: BTreeMap<ChannelId, Tokens>,
    dispute_log: Vec<DisputeRecord>,
    /// Highest commitment seq submitted for settlement, per channel.
    submitted_seq: BTreeMap<ChannelId, u64>,
    next_channel: u64,
    minted: Tokens,
    burned: Tokens,
    height: u64,
}

impl Ledger {
    pub fn new() -> Self {
        Ledger::default()
    }

    /// Creates an account, locking the security deposit. The pubkey becomes
    /// the verification root for all of this node's signatures.
    pub fn register(
        &mut self,
        node: &NodeId,
        pubkey: VerifyingKey,
        initial_balance: Tokens,
        security_deposit: Tokens,
    ) -> Result<&Account, LedgerError> {
        if self.accounts.contains_key(node) {
            return Err(LedgerError::DuplicateRegistration);
        }
        self.minted = self
            .minted
            .checked_add(initial_balance)
            .and_then(|m| m.checked_add(security_deposit))
            .map_err(|_| LedgerError::NonConserving)?;
        self.height += 1;
        self.accounts.insert(
            node.clone(),
            Account {
                node: node.clone(),
                pubkey,
                balance: initial_balance,
                security_deposit,
                flagged: false,
            },
        );
        Ok(self.accounts.get(node).expect("just inserted"))
    }

    pub fn account(&self, node: &NodeId) -> Option<&Account> {
        self.accounts.get(node)
    }

    pub fn accounts(&self) -> impl Iterator<Item = &Account> {
        self.accounts.values()
    }

    /// On-chain balance, excluding escrow and the security deposit.
    pub fn balance_of(&self, node: &NodeId) -> Result<Tokens, LedgerError> {
        self.accounts
            .get(node)
            .map(|a| a.balance)
            .ok_or(LedgerError::Unregistered)
    }

    pub fn is_flagged(&self, node: &NodeId) -> bool {
        self.accounts.get(node).map(|a| a.flagged).unwrap_or(false)
    }

    /// Debits both parties and escrows the channel funds. Called through
    /// `payments::open_channel`.
    pub(crate) fn escrow_channel(
        &mut self,
        a: &NodeId,
        b: &NodeId,
        deposit_a: Tokens,
        deposit_b: Tokens,
    ) -> Result<ChannelId, ChannelError> {
        if !self.accounts.contains_key(a) || !self.accounts.contains_key(b) {
            return Err(ChannelError::Unregistered);
        }
        let total = deposit_a
            .checked_add(deposit_b)
            .map_err(|_| ChannelError::InsufficientOnChainFunds)?;
        {
            let acct_a = self.accounts.get(a).expect("checked");
            let acct_b = self.accounts.get(b).expect("checked");
            if acct_a.balance < deposit_a || acct_b.balance < deposit_b {
                return Err(ChannelError::InsufficientOnChainFunds);
            }
        }
        let id = ChannelId(self.next_channel);
        self.next_channel += 1;
        for (node, deposit) in [(a, deposit_a), (b, deposit_b)] {
            let acct = self.accounts.get_mut(node).expect("checked");
            acct.balance = acct.balance.checked_sub(deposit).expect("checked above");
        }
        self.escrows.insert(id, total);
        self.height += 1;
        Ok(id)
    }

    /// Cooperative settlement: releases escrow at the final commitment's
    /// balances. The commitment must carry both valid signatures and be at
    /// least as recent as anything previously submitted for this channel.
    pub fn settle(
        &mut self,
        channel: &mut Channel,
        final_tx: &CommitmentTx,
    ) -> Result<(), LedgerError> {
        if channel.status == ChannelStatus::Settled {
            return Err(LedgerError::AlreadySettled);
        }
        if final_tx.channel_id != channel.id {
            return Err(LedgerError::UnknownChannel);
        }
        let escrow = *self
            .escrows
            .get(&channel.id)
            .ok_or(LedgerError::UnknownChannel)?;
        if let Some(&prev) = self.submitted_seq.get(&channel.id) {
            if final_tx.seq < prev {
                return Err(LedgerError::StaleSubmission);
            }
        }
        self.submitted_seq.insert(channel.id, final_tx.seq);

        let total = final_tx
            .balance_a
            .checked_add(final_tx.balance_b)
            .map_err(|_| LedgerError::NonConserving)?;
        if total != escrow {
            return Err(LedgerError::NonConserving);
        }
        for (party, node) in [(Party::A, &channel.party_a), (Party::B, &channel.party_b)] {
            let sig = final_tx
                .signature_of(party)
                .ok_or(LedgerError::MissingSignature)?;
            let key = self
                .accounts
                .get(node)
                .map(|a| a.pubkey)
                .ok_or(LedgerError::Unregistered)?;
            use ed25519_dalek::Verifier;
            if key.verify(&final_tx.signing_bytes(), sig).is_err() {
                return Err(LedgerError::BadSignature);
            }
        }

        self.escrows.remove(&channel.id);
        let acct_a = self.accounts.get_mut(&channel.party_a).expect("registered");
        acct_a.balance = acct_a
            .balance
            .checked_add(final_tx.balance_a)
            .expect("bounded by escrow");
        let acct_b = self.accounts.get_mut(&channel.party_b).expect("registered");
        acct_b.balance = acct_b
            .balance
            .checked_add(final_tx.balance_b)
            .expect("bounded by escrow");
        channel.status = ChannelStatus::Settled;
        channel.balance_a = final_tx.balance_a;
        channel.balance_b = final_tx.balance_b;
        self.height += 1;
        Ok(())
    }

    /// Judges a pair of advertisements. A provable conflict burns the
    /// advertiser's whole security deposit and flags the account; everything
    /// else is a rejection with a reason. All submissions are logged.
    pub fn submit_conflict(&mut self, proof: (&TagItem, &TagItem), submitter: &NodeId) -> Verdict {
        let (a, b) = proof;
        let verdict = self.judge_conflict(a, b);
        self.dispute_log.push(DisputeRecord {
            advertiser: a.core.advertiser.clone(),
            submitter: submitter.clone(),
            verdict: verdict.clone(),
        });
        self.height += 1;
        verdict
    }

    fn judge_conflict(&mut self, a: &TagItem, b: &TagItem) -> Verdict {
        for item in [a, b] {
            if !self.accounts.contains_key(&item.core.advertiser) {
                return Verdict::Rejected(RejectReason::UnknownAdvertiser);
            }
        }
        for item in [a, b] {
            if !crate::crypto::verify_item(item, self).unwrap_or(false) {
                return Verdict::Rejected(RejectReason::BadSignature);
            }
        }
        if !pricing::conflicting_cores(&a.core, &b.core) {
            return Verdict::Rejected(RejectReason::NoConflict);
        }
        let advertiser = a.core.advertiser.clone();
        let acct = self.accounts.get_mut(&advertiser).expect("checked");
        if acct.flagged {
            return Verdict::Rejected(RejectReason::AlreadyPunished);
        }
        let burned = acct.security_deposit;
        acct.security_deposit = Tokens::ZERO;
        acct.flagged = true;
        self.burned = self.burned.checked_add(burned).expect("conserved");
        Verdict::Punished { advertiser, burned }
    }

    pub fn dispute_log(&self) -> &[DisputeRecord] {
        &self.dispute_log
    }

    pub fn minted(&self) -> Tokens {
        self.minted
    }

    pub fn burned(&self) -> Tokens {
        self.burned
    }

    pub fn height(&self) -> u64 {
        self.height
    }

    pub fn escrow_of(&self, id: ChannelId) -> Option<Tokens> {
        self.escrows.get(&id).copied()
    }

    pub fn total_escrow(&self) -> Tokens {
        Tokens::sum(self.escrows.values()).expect("escrowed through checked arithmetic")
    }

    /// Closed-system check: minted equals balances + unburned deposits +
    /// live escrow + burned.
    pub fn conservation_holds(&self) -> bool {
        let mut total = self.burned;
        for acct in self.accounts.values() {
            total = match total
                .checked_add(acct.balance)
                .and_then(|t| t.checked_add(acct.security_deposit))
            {
                Ok(t) => t,
                Err(_) => return false,
            };
        }
        total = match total.checked_add(self.total_escrow()) {
            Ok(t) => t,
            Err(_) => return false,
        };
        total == self.minted
    }
}

impl KeyResolver for Ledger {
    fn pubkey_of(&self, node: &NodeId) -> Option<VerifyingKey> {
        self.accounts.get(node).map(|a| a.pubkey)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::Keypair;
    use crate::payments::{accept_payment, make_payment, open_channel, ChannelBook};
    use crate::pricing::PriceBook;
    use crate::types::{FaceId, PerfMetric, Window};

    fn node(id: &str) -> NodeId {
        NodeId::new(id)
    }

    fn keys_for(id: &str) -> Keypair {
        Keypair::for_node(5, &node(id))
    }

    #[test]
    fn register_locks_deposit() {
        let mut ledger = Ledger::new();
        let kp = keys_for("r1");
        let acct = ledger
            .register(&node("r1"), kp.public(), Tokens::new(100), Tokens::new(50))
            .unwrap();
        assert_eq!(acct.security_deposit, Tokens::new(50));
        assert!(!acct.flagged);
        assert_eq!(ledger.balance_of(&node("r1")), Ok(Tokens::new(100)));
        assert_eq!(ledger.minted(), Tokens::new(150));
    }

    #[test]
    fn duplicate_registration_rejected() {
        let mut ledger = Ledger::new();
        let kp = keys_for("r1");
        ledger
            .register(&node("r1"), kp.public(), Tokens::new(100), Tokens::new(50))
            .unwrap();
        assert_eq!(
            ledger
                .register(&node("r1"), kp.public(), Tokens::new(1), Tokens::new(1))
                .unwrap_err(),
            LedgerError::DuplicateRegistration
        );
    }

    #[test]
    fn unregistered_balance_query_fails() {
        let ledger = Ledger::new();
        assert_eq!(
            ledger.balance_of(&node("ghost")),
            Err(LedgerError::Unregistered)
        );
    }

    #[test]
    fn unregistered_identity_fails_verification_everywhere() {
        // The ledger is the key resolver; an unregistered advertiser is a
        // distinct error, not a false verdict.
        let ledger = Ledger::new();
        let kp = keys_for("ghost");
        let item = crate::tag::TagItemCore {
            advertiser: node("ghost"),
            face: FaceId(1),
            price: Tokens::new(5),
            window: Window::new(0, 10),
            metric: PerfMetric::new(1, 1),
        }
        .sign(&kp);
        assert!(crate::crypto::verify_item(&item, &ledger).is_err());
    }

    fn two_party_setup() -> (Ledger, ChannelBook, Keypair, Keypair) {
        let mut ledger = Ledger::new();
        let ka = keys_for("a");
        let kb = keys_for("b");
        ledger
            .register(&node("a"), ka.public(), Tokens::new(500), Tokens::ZERO)
            .unwrap();
        ledger
            .register(&node("b"), kb.public(), Tokens::new(500), Tokens::ZERO)
            .unwrap();
        (ledger, ChannelBook::new(), ka, kb)
    }

    #[test]
    fn settle_credits_final_balances() {
        let (mut ledger, mut book, ka, kb) = two_party_setup();
        let id = open_channel(
            &mut ledger,
            &mut book,
            &node("a"),
            &node("b"),
            Tokens::new(100),
            Tokens::ZERO,
        )
        .unwrap();
        // Pay 60 from a to b, co-signed.
        let tx = {
            let ch = book.get(id).unwrap();
            make_payment(ch, &ka, &node("a"), Tokens::new(60)).unwrap()
        };
        {
            let ch = book.get_mut(id).unwrap();
            accept_payment(ch, &tx, &kb, &node("b"), &ledger).unwrap();
        }
        let final_tx = book.get(id).unwrap().latest.clone().unwrap();
        let mut channel = book.get_mut(id).unwrap();
        ledger.settle(&mut channel, &final_tx).unwrap();
        assert_eq!(ledger.balance_of(&node("a")), Ok(Tokens::new(440)));
        assert_eq!(ledger.balance_of(&node("b")), Ok(Tokens::new(560)));
        assert_eq!(ledger.escrow_of(id), None);
        assert!(ledger.conservation_holds());
    }

    #[test]
    fn settle_requires_both_signatures() {
        let (mut ledger, mut book, ka, _kb) = two_party_setup();
        let id = open_channel(
            &mut ledger,
            &mut book,
            &node("a"),
            &node("b"),
            Tokens::new(100),
            Tokens::ZERO,
        )
        .unwrap();
        let tx = {
            let ch = book.get(id).unwrap();
            make_payment(ch, &ka, &node("a"), Tokens::new(60)).unwrap()
        };
        // Payer-only signature.
        let mut channel = book.get_mut(id).unwrap();
        assert_eq!(
            ledger.settle(&mut channel, &tx),
            Err(LedgerError::MissingSignature)
        );
    }

    #[test]
    fn settle_twice_fails() {
        let (mut ledger, mut book, ka, kb) = two_party_setup();
        let id = open_channel(
            &mut ledger,
            &mut book,
            &node("a"),
            &node("b"),
            Tokens::new(100),
            Tokens::ZERO,
        )
        .unwrap();
        let tx = {
            let ch = book.get(id).unwrap();
            make_payment(ch, &ka, &node("a"), Tokens::new(40)).unwrap()
        };
        {
            let ch = book.get_mut(id).unwrap();
            accept_payment(ch, &tx, &kb, &node("b"), &ledger).unwrap();
        }
        let final_tx = book.get(id).unwrap().latest.clone().unwrap();
        let channel = book.get_mut(id).unwrap();
        ledger.settle(channel, &final_tx).unwrap();
        assert_eq!(
            ledger.settle(channel, &final_tx),
            Err(LedgerError::AlreadySettled)
        );
    }

    #[test]
    fn settle_rejects_non_conserving_commitment() {
        let (mut ledger, mut book, ka, kb) = two_party_setup();
        let id = open_channel(
            &mut ledger,
            &mut book,
            &node("a"),
            &node("b"),
            Tokens::new(100),
            Tokens::ZERO,
        )
        .unwrap();
        let mut tx = CommitmentTx {
            channel_id: id,
            seq: 1,
            balance_a: Tokens::new(90),
            balance_b: Tokens::new(20), // 110 over a 100 escrow
            sig_a: None,
            sig_b: None,
        };
        tx.sig_a = Some(ka.sign(&tx.signing_bytes()));
        tx.sig_b = Some(kb.sign(&tx.signing_bytes()));
        let channel = book.get_mut(id).unwrap();
        assert_eq!(ledger.settle(channel, &tx), Err(LedgerError::NonConserving));
    }

    fn signed_pair(
        keys: &Keypair,
        owner: &str,
        prices: (u64, u64),
        windows: (Window, Window),
        faces: (u32, u32),
    ) -> (TagItem, TagItem) {
        let mut book = PriceBook::new(node(owner));
        book.enable_fault_injection();
        let metric = PerfMetric::new(1, 1);
        let a = book
            .equivocate_for_test(
                FaceId(faces.0),
                Tokens::new(prices.0),
                windows.0,
                metric,
                keys,
            )
            .unwrap();
        let b = book
            .equivocate_for_test(
                FaceId(faces.1),
                Tokens::new(prices.1),
                windows.1,
                metric,
                keys,
            )
            .unwrap();
        (a, b)
    }

    #[test]
    fn conflicting_pair_burns_deposit_and_flags() {
        let mut ledger = Ledger::new();
        let kp = keys_for("r1");
        ledger
            .register(&node("r1"), kp.public(), Tokens::new(100), Tokens::new(50))
            .unwrap();
        let (a, b) = signed_pair(
            &kp,
            "r1",
            (5, 7),
            (Window::new(0, 100), Window::new(50, 150)),
            (1, 1),
        );
        let verdict = ledger.submit_conflict((&a, &b), &node("w"));
        assert_eq!(
            verdict,
            Verdict::Punished {
                advertiser: node("r1"),
                burned: Tokens::new(50)
            }
        );
        let acct = ledger.account(&node("r1")).unwrap();
        assert_eq!(acct.security_deposit, Tokens::ZERO);
        assert!(acct.flagged);
        assert_eq!(ledger.burned(), Tokens::new(50));
        assert!(ledger.conservation_holds());
    }

    #[test]
    fn same_price_pair_is_rejected() {
        let mut ledger = Ledger::new();
        let kp = keys_for("r1");
        ledger
            .register(&node("r1"), kp.public(), Tokens::new(100), Tokens::new(50))
            .unwrap();
        let (a, b) = signed_pair(
            &kp,
            "r1",
            (5, 5),
            (Window::new(0, 100), Window::new(50, 150)),
            (1, 1),
        );
        assert_eq!(
            ledger.submit_conflict((&a, &b), &node("w")),
            Verdict::Rejected(RejectReason::NoConflict)
        );
    }

    #[test]
    fn bad_signature_pair_is_rejected_distinctly() {
        let mut ledger = Ledger::new();
        let kp = keys_for("r1");
        ledger
            .register(&node("r1"), kp.public(), Tokens::new(100), Tokens::new(50))
            .unwrap();
        let (a, mut b) = signed_pair(
            &kp,
            "r1",
            (5, 7),
            (Window::new(0, 100), Window::new(50, 150)),
            (1, 1),
        );
        b.core.price = Tokens::new(9);
        assert_eq!(
            ledger.submit_conflict((&a, &b), &node("w")),
            Verdict::Rejected(RejectReason::BadSignature)
        );
        assert_eq!(ledger.burned(), Tokens::ZERO);
    }

    #[test]
    fn duplicate_proof_is_already_punished() {
        let mut ledger = Ledger::new();
        let kp = keys_for("r1");
        ledger
            .register(&node("r1"), kp.public(), Tokens::new(100), Tokens::new(50))
            .unwrap();
        let (a, b) = signed_pair(
            &kp,
            "r1",
            (5, 7),
            (Window::new(0, 100), Window::new(50, 150)),
            (1, 1),
        );
        assert!(matches!(
            ledger.submit_conflict((&a, &b), &node("w")),
            Verdict::Punished { .. }
        ));
        assert_eq!(
            ledger.submit_conflict((&a, &b), &node("w")),
            Verdict::Rejected(RejectReason::AlreadyPunished)
        );
        // Deposit can only burn once.
        assert_eq!(ledger.burned(), Tokens::new(50));
        assert_eq!(ledger.dispute_log().len(), 2);
    }

    #[test]
    fn unknown_advertiser_is_rejected() {
        let mut ledger = Ledger::new();
        let kp = keys_for("ghost");
        let (a, b) = signed_pair(
            &kp,
            "ghost",
            (5, 7),
            (Window::new(0, 100), Window::new(50, 150)),
            (1, 1),
        );
        assert_eq!(
            ledger.submit_conflict((&a, &b), &node("w")),
            Verdict::Rejected(RejectReason::UnknownAdvertiser)
        );
    }

    #[test]
    fn balance_lifecycle_register_open_settle() {
        let (mut ledger, mut book, ka, kb) = two_party_setup();
        assert_eq!(ledger.balance_of(&node("a")), Ok(Tokens::new(500)));
        let id = open_channel(
            &mut ledger,
            &mut book,
            &node("a"),
            &node("b"),
            Tokens::new(500),
            Tokens::ZERO,
        )
        .unwrap();
        assert_eq!(ledger.balance_of(&node("a")), Ok(Tokens::ZERO));
        let tx = {
            let ch = book.get(id).unwrap();
            make_payment(ch, &ka, &node("a"), Tokens::new(460)).unwrap()
        };
        {
            let ch = book.get_mut(id).unwrap();
            accept_payment(ch, &tx, &kb, &node("b"), &ledger).unwrap();
        }
        let final_tx = book.get(id).unwrap().latest.clone().unwrap();
        ledger.settle(book.get_mut(id).unwrap(), &final_tx).unwrap();
        assert_eq!(ledger.balance_of(&node("a")), Ok(Tokens::new(40)));
        assert_eq!(ledger.balance_of(&node("b")), Ok(Tokens::new(960)));
    }

    #[test]
    fn conservation_holds_through_event_sequence() {
        let (mut ledger, mut book, ka, kb) = two_party_setup();
        assert!(ledger.conservation_holds());
        let id = open_channel(
            &mut ledger,
            &mut book,
            &node("a"),
            &node("b"),
            Tokens::new(100),
            Tokens::new(30),
        )
        .unwrap();
        assert!(ledger.conservation_holds());
        let tx = {
            let ch = book.get(id).unwrap();
            make_payment(ch, &ka, &node("a"), Tokens::new(25)).unwrap()
        };
        {
            let ch = book.get_mut(id).unwrap();
            accept_payment(ch, &tx, &kb, &node("b"), &ledger).unwrap();
        }
        assert!(ledger.conservation_holds());
        let final_tx = book.get(id).unwrap().latest.clone().unwrap();
        ledger.settle(book.get_mut(id).unwrap(), &final_tx).unwrap();
        assert!(ledger.conservation_holds());
    }
}
