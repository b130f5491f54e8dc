//! Typed output payloads: the first byte tags what the rest carries.

use crate::crypto::CipherEnvelope;
use crate::datastore::Anchor;
use crate::ledger::MAX_PAYLOAD;
use crate::registry::SensorRecord;

const TAG_PURCHASE: u8 = 0x01;
const TAG_INLINE: u8 = 0x02;
const TAG_ANCHORED: u8 = 0x03;
const TAG_REGISTER: u8 = 0x04;
const TAG_UPDATE: u8 = 0x05;

/// Largest datum that still fits inline once encrypted and tagged.
pub const MAX_INLINE_DATUM: usize = MAX_PAYLOAD - 1 - crate::crypto::ENVELOPE_OVERHEAD;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Payload {
    /// Marks a payment output as a datum purchase.
    PurchaseRequest,
    InlineDatum(CipherEnvelope),
    /// Encrypted datum stored off-chain.
    AnchoredDatum(Anchor),
    Register(SensorRecord),
    Update(SensorRecord),
}

impl Payload {
    pub fn to_bytes(&self) -> Vec<u8> {
        let (tag, body) = match self {
            Payload::PurchaseRequest => (TAG_PURCHASE, Vec::new()),
            Payload::InlineDatum(env) => (TAG_INLINE, env.to_bytes()),
            Payload::AnchoredDatum(anchor) => (TAG_ANCHORED, anchor.to_bytes()),
            Payload::Register(r) => (TAG_REGISTER, r.to_bytes()),
            Payload::Update(r) => (TAG_UPDATE, r.to_bytes()),
        };
        let mut out = Vec::with_capacity(1 + body.len());
        out.push(tag);
        out.extend(body);
        out
    }

    /// `None` for anything that is not a well-formed tagged payload.
    pub fn parse(bytes: &[u8]) -> Option<Payload> {
        let (&tag, body) = bytes.split_first()?;
        match tag {
            TAG_PURCHASE if body.is_empty() => Some(Payload::PurchaseRequest),
            TAG_INLINE => CipherEnvelope::from_bytes(body).ok().map(Payload::InlineDatum),
            TAG_ANCHORED => Anchor::from_bytes(body).ok().map(Payload::AnchoredDatum),
            TAG_REGISTER => SensorRecord::from_bytes(body).ok().map(Payload::Register),
            TAG_UPDATE => SensorRecord::from_bytes(body).ok().map(Payload::Update),
            _ => None,
        }
    }
}
