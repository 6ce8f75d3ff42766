//! Signing and verification of tag items and commitments.
//!
//! Ed25519 with deterministic (RFC 8032) signing, so repeated runs produce
//! byte-identical signatures. A node's verification key is whatever was
//! registered on the ledger; nothing is ever verified against a key carried
//! in-band.

use std::collections::BTreeMap;

use ed25519_dalek::{Signer, SigningKey, Verifier};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec;
use crate::tag::{TagItem, TagItemCore};
use crate::types::NodeId;

pub type VerifyingKey = ed25519_dalek::VerifyingKey;
pub type Signature = ed25519_dalek::Signature;

/// A node's signing identity.
#[derive(Debug, Clone)]
pub struct Keypair {
    signing: SigningKey,
}

impl Keypair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Keypair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    /// Deterministic per-node key derivation for simulation runs: the seed is
    /// a hash of the run seed and the node id.
    pub fn for_node(run_seed: u64, node: &NodeId) -> Self {
        let mut h = Sha256::new();
        h.update(run_seed.to_be_bytes());
        h.update(node.as_str().as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        Keypair::from_seed(seed)
    }

    pub fn public(&self) -> VerifyingKey {
        self.signing.verifying_key()
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        self.signing.sign(message)
    }
}

/// Maps a node id to its registered verification key. Implemented by the
/// ledger; tests may use a plain map.
pub trait KeyResolver {
    fn pubkey_of(&self, node: &NodeId) -> Option<VerifyingKey>;
}

impl KeyResolver for BTreeMap<NodeId, VerifyingKey> {
    fn pubkey_of(&self, node: &NodeId) -> Option<VerifyingKey> {
        self.get(node).copied()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("identity {0} is not registered")]
pub struct UnregisteredIdentity(pub NodeId);

/// Signs a tag item core under the advertiser's key.
pub fn sign_item(keys: &Keypair, core: &TagItemCore) -> Signature {
    keys.sign(&codec::encode_tag_item_core(core))
}

/// True iff the item's signature is valid over the canonical encoding of its
/// core, under the advertiser's registered key. An unknown advertiser is a
/// distinct error, not `false`.
pub fn verify_item(
    item: &TagItem,
    resolver: &dyn KeyResolver,
) -> Result<bool, UnregisteredIdentity> {
    let key = resolver
        .pubkey_of(&item.core.advertiser)
        .ok_or_else(|| UnregisteredIdentity(item.core.advertiser.clone()))?;
    let message = codec::encode_tag_item_core(&item.core);
    Ok(key.verify(&message, &item.signature).is_ok())
}
