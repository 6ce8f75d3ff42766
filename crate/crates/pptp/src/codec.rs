//! Canonical byte encodings.
//!
//! The encoding is a custom fixed layout rather than a self-describing
//! format, so that signing inputs are injective and golden-byte tests can pin
//! the exact wire bytes. All integers are fixed-width big-endian; the only
//! variable-length field is the advertiser id, which is length-prefixed.
//!
//! Layouts (see also `docs/wire-format.md`):
//!
//! Tag item core (the signed bytes):
//! ```text
//! u16  advertiser id length        2
//! ...  advertiser id (UTF-8)       n
//! u32  face                        4
//! u64  price                       8
//! u64  window.not_before           8
//! u64  window.not_after            8
//! u32  metric.adv_bandwidth        4
//! u64  metric.adv_latency          8
//! ```
//!
//! Tag item: core followed by the 64-byte Ed25519 signature.
//!
//! Path tag: `u16` item count followed by the items, top of stack last.
//!
//! Commitment core (the signed bytes): `u64` channel id, `u64` seq,
//! `u64` balance_a, `u64` balance_b.
//!
//! Commitment: core followed by two signature slots, each a `u8` presence
//! flag (0 or 1) and, when present, 64 signature bytes.

use thiserror::Error;

use crate::crypto::Signature;
use crate::payments::{ChannelId, CommitmentTx};
use crate::tag::{PathTag, TagItem, TagItemCore};
use crate::types::{FaceId, NodeId, PerfMetric, Tokens, Window};

pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CodecError {
    #[error("unexpected end of input")]
    UnexpectedEof,
    #[error("trailing bytes after value")]
    TrailingBytes,
    #[error("advertiser id is not valid UTF-8")]
    BadUtf8,
    #[error("invalid field: {0}")]
    BadField(&'static str),
}

pub fn encode_tag_item_core(core: &TagItemCore) -> Vec<u8> {
    let id = core.advertiser.as_str().as_bytes();
    let mut out = Vec::with_capacity(42 + id.len());
    out.extend_from_slice(&(id.len() as u16).to_be_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&core.face.0.to_be_bytes());
    out.extend_from_slice(&core.price.amount().to_be_bytes());
    out.extend_from_slice(&core.window.not_before.to_be_bytes());
    out.extend_from_slice(&core.window.not_after.to_be_bytes());
    out.extend_from_slice(&core.metric.adv_bandwidth.to_be_bytes());
    out.extend_from_slice(&core.metric.adv_latency.to_be_bytes());
    out
}

pub fn encode_tag_item(item: &TagItem) -> Vec<u8> {
    let mut out = encode_tag_item_core(&item.core);
    out.extend_from_slice(&item.signature.to_bytes());
    out
}

pub fn encode_path_tag(tag: &PathTag) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&(tag.len() as u16).to_be_bytes());
    for item in tag.iter() {
        out.extend_from_slice(&encode_tag_item(item));
    }
    out
}

pub fn encode_commitment_core(
    channel_id: ChannelId,
    seq: u64,
    balance_a: Tokens,
    balance_b: Tokens,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(32);
    out.extend_from_slice(&channel_id.0.to_be_bytes());
    out.extend_from_slice(&seq.to_be_bytes());
    out.extend_from_slice(&balance_a.amount().to_be_bytes());
    out.extend_from_slice(&balance_b.amount().to_be_bytes());
    out
}

pub fn encode_commitment(tx: &CommitmentTx) -> Vec<u8> {
    let mut out = encode_commitment_core(tx.channel_id, tx.seq, tx.balance_a, tx.balance_b);
    for sig in [&tx.sig_a, &tx.sig_b] {
        match sig {
            Some(s) => {
                out.push(1);
                out.extend_from_slice(&s.to_bytes());
            }
            None => out.push(0),
        }
    }
    out
}

/// Cursor over an input slice for the decoders.
struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        if self.buf.len() - self.pos < n {
            return Err(CodecError::UnexpectedEof);
        }
        let slice = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_be_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_be_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn signature(&mut self) -> Result<Signature, CodecError> {
        let bytes: [u8; SIGNATURE_LEN] = self.take(SIGNATURE_LEN)?.try_into().unwrap();
        Ok(Signature::from_bytes(&bytes))
    }

    fn finish(&self) -> Result<(), CodecError> {
        if self.pos == self.buf.len() {
            Ok(())
        } else {
            Err(CodecError::TrailingBytes)
        }
    }
}

fn read_tag_item(r: &mut Reader<'_>) -> Result<TagItem, CodecError> {
    let id_len = r.u16()? as usize;
    let id = std::str::from_utf8(r.take(id_len)?).map_err(|_| CodecError::BadUtf8)?;
    if id.is_empty() {
        return Err(CodecError::BadField("empty advertiser id"));
    }
    let face = FaceId(r.u32()?);
    let price = Tokens::new(r.u64()?);
    let not_before = r.u64()?;
    let not_after = r.u64()?;
    let window =
        Window::try_new(not_before, not_after).ok_or(CodecError::BadField("window bounds"))?;
    let metric = PerfMetric::new(r.u32()?, r.u64()?);
    let signature = r.signature()?;
    Ok(TagItem {
        core: TagItemCore {
            advertiser: NodeId::new(id),
            face,
            price,
            window,
            metric,
        },
        signature,
    })
}

pub fn decode_tag_item(buf: &[u8]) -> Result<TagItem, CodecError> {
    let mut r = Reader::new(buf);
    let item = read_tag_item(&mut r)?;
    r.finish()?;
    Ok(item)
}

pub fn decode_path_tag(buf: &[u8]) -> Result<PathTag, CodecError> {
    let mut r = Reader::new(buf);
    let count = r.u16()?;
    let mut tag = PathTag::new();
    for _ in 0..count {
        tag.push(read_tag_item(&mut r)?);
    }
    r.finish()?;
    Ok(tag)
}

pub fn decode_commitment(buf: &[u8]) -> Result<CommitmentTx, CodecError> {
    let mut r = Reader::new(buf);
    let channel_id = ChannelId(r.u64()?);
    let seq = r.u64()?;
    let balance_a = Tokens::new(r.u64()?);
    let balance_b = Tokens::new(r.u64()?);
    let mut sigs = [None, None];
    for slot in sigs.iter_mut() {
        *slot = match r.u8()? {
            0 => None,
            1 => Some(r.signature()?),
            _ => return Err(CodecError::BadField("signature presence flag")),
        };
    }
    r.finish()?;
    Ok(CommitmentTx {
        channel_id,
        seq,
        balance_a,
        balance_b,
        sig_a: sigs[0],
        sig_b: sigs[1],
    })
}
