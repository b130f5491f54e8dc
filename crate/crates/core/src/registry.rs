//! First-claim-wins sensor name registry carried in transaction payloads.
//!
//! A registration or update is a zero-value output paying the owner whose
//! payload holds the record. The owner is the key whose signature on the
//! transaction's first input verifies. Confirmed blocks are authoritative:
//! within a block, payloads apply in ascending txid order, so the lower txid
//! wins a name collision and the higher txid wins between two updates.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{verify, Address, Hash, KeyDigest, KeyPair};
use crate::ledger::{Block, DecodeError, MempoolError, Predicate, Reader, Transaction, TxOutput, Writer, MAX_PAYLOAD};
use crate::payload::Payload;
use crate::simnet::{Network, NodeId};
use crate::wallet::{build_payment, FeePolicy, WalletError};

pub const MAX_NAME_LEN: usize = 64;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RegistryError {
    #[error("record encodes to {size} bytes, over the {max}-byte payload cap")]
    RecordTooLarge { size: usize, max: usize },
    #[error("unknown name {0:?}")]
    UnknownName(String),
    #[error("name {0:?} is owned by another key")]
    NotOwner(String),
    #[error("invalid record: {0}")]
    InvalidRecord(&'static str),
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("rejected by node: {0}")]
    Rejected(#[from] MempoolError),
}

impl RegistryError {
    pub fn name(&self) -> &'static str {
        match self {
            RegistryError::RecordTooLarge { .. } => "RecordTooLarge",
            RegistryError::UnknownName(_) => "UnknownName",
            RegistryError::NotOwner(_) => "NotOwner",
            RegistryError::InvalidRecord(_) => "InvalidRecord",
            RegistryError::Wallet(_) => "InsufficientFunds",
            RegistryError::Rejected(e) => e.name(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SensorRecord {
    pub name: String,
    /// Filled from the signing key when read from the chain.
    pub owner_key_digest: KeyDigest,
    pub payment_address: Address,
    pub data_type: String,
    pub price_per_datum: u64,
    /// Store locator list such as `"1,2"`, or `"inline"`.
    pub endpoint: String,
}

impl SensorRecord {
    pub fn new(owner: &KeyPair, name: &str, data_type: &str, price_per_datum: u64, endpoint: &str) -> SensorRecord {
        SensorRecord {
            name: name.to_string(),
            owner_key_digest: owner.key_digest(),
            payment_address: owner.address(),
            data_type: data_type.to_string(),
            price_per_datum,
            endpoint: endpoint.to_string(),
        }
    }

    /// `u8 len ‖ name ‖ u8 len ‖ data_type ‖ u64 price ‖ payment digest[20] ‖ u8 len ‖ endpoint`.
    /// The owner is not encoded; it is the signer.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        for (i, s) in [&self.name, &self.data_type].into_iter().enumerate() {
            w.u8(s.len() as u8);
            w.raw(s.as_bytes());
            if i == 1 {
                w.u64(self.price_per_datum);
                w.raw(&self.payment_address.key_digest.0);
            }
        }
        w.u8(self.endpoint.len() as u8);
        w.raw(self.endpoint.as_bytes());
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<SensorRecord, DecodeError> {
        fn text(r: &mut Reader<'_>) -> Result<String, DecodeError> {
            let n = r.u8()? as usize;
            String::from_utf8(r.take(n)?.to_vec()).map_err(|_| DecodeError::BadUtf8)
        }
        let mut r = Reader::new(bytes);
        let name = text(&mut r)?;
        let data_type = text(&mut r)?;
        let price_per_datum = r.u64()?;
        let payment_address = Address::from_key_digest(KeyDigest(r.array()?));
        let endpoint = text(&mut r)?;
        r.finish()?;
        Ok(SensorRecord {
            name,
            owner_key_digest: KeyDigest([0; 20]),
            payment_address,
            data_type,
            price_per_datum,
            endpoint,
        })
    }

    fn check(&self) -> Result<(), RegistryError> {
        if self.name.is_empty() {
            return Err(RegistryError::InvalidRecord("empty name"));
        }
        if self.name.len() > MAX_NAME_LEN {
            return Err(RegistryError::InvalidRecord("name longer than 64 bytes"));
        }
        if self.data_type.len() > u8::MAX as usize || self.endpoint.len() > u8::MAX as usize {
            return Err(RegistryError::InvalidRecord("field longer than 255 bytes"));
        }
        let size = 1 + self.to_bytes().len();
        if size > MAX_PAYLOAD {
            return Err(RegistryError::RecordTooLarge { size, max: MAX_PAYLOAD });
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct NameEntry {
    pub record: SensorRecord,
    pub registration_txid: Hash,
    pub last_update_height: u64,
}

/// A registry payload the index did not apply.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IgnoredClaim {
    pub txid: Hash,
    pub height: u64,
    pub name: String,
    pub reason: &'static str,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct NameIndex {
    names: BTreeMap<String, NameEntry>,
    pub ignored: Vec<IgnoredClaim>,
}

/// The key whose signature on input 0 verifies, if any.
fn signer(tx: &Transaction) -> Option<KeyDigest> {
    let input = tx.inputs.first()?;
    let sighash = tx.sighash(0);
    input
        .witness
        .signatures
        .iter()
        .find(|s| verify(&s.public_key, &sighash.0, &s.signature))
        .map(|s| s.public_key.key_digest())
}

impl NameIndex {
    pub fn new() -> NameIndex {
        NameIndex::default()
    }

    /// Index built by scanning `blocks` from genesis.
    pub fn rebuild(blocks: &[Block]) -> NameIndex {
        let mut index = NameIndex::new();
        for b in blocks {
            index.apply_block(b);
        }
        index
    }

    pub fn apply_block(&mut self, block: &Block) {
        let mut claims: Vec<(Hash, &Transaction)> = block.transactions.iter().map(|t| (t.txid(), t)).collect();
        claims.sort_by_key(|(id, _)| *id);
        for (txid, tx) in claims {
            let payloads: Vec<Payload> = tx
                .outputs
                .iter()
                .filter_map(|o| o.payload.as_deref())
                .filter_map(Payload::parse)
                .filter(|p| matches!(p, Payload::Register(_) | Payload::Update(_)))
                .collect();
            if payloads.is_empty() {
                continue;
            }
            let Some(owner) = signer(tx) else { continue };
            for p in payloads {
                self.apply_payload(p, owner, txid, block.height);
            }
        }
    }

    fn apply_payload(&mut self, p: Payload, owner: KeyDigest, txid: Hash, height: u64) {
        let (mut record, is_update) = match p {
            Payload::Register(r) => (r, false),
            Payload::Update(r) => (r, true),
            _ => return,
        };
        record.owner_key_digest = owner;
        let reason = match (self.names.get_mut(&record.name), is_update) {
            _ if record.name.is_empty() || record.name.len() > MAX_NAME_LEN => "InvalidRecord",
            (Some(_), false) => "NameTaken",
            (None, false) => {
                let entry = NameEntry { record, registration_txid: txid, last_update_height: height };
                self.names.insert(entry.record.name.clone(), entry);
                return;
            }
            (None, true) => "UnknownName",
            (Some(e), true) if e.record.owner_key_digest != owner => "NotOwner",
            (Some(e), true) => {
                e.record = record;
                e.last_update_height = height;
                return;
            }
        };
        self.ignored.push(IgnoredClaim { txid, height, name: record.name, reason });
    }

    pub fn lookup(&self, name: &str) -> Result<&SensorRecord, RegistryError> {
        self.entry(name).map(|e| &e.record)
    }

    pub fn entry(&self, name: &str) -> Result<&NameEntry, RegistryError> {
        self.names.get(name).ok_or_else(|| RegistryError::UnknownName(name.to_string()))
    }

    /// Records with the given data type, by name.
    pub fn find_by_data_type(&self, tag: &str) -> Vec<&SensorRecord> {
        self.names.values().map(|e| &e.record).filter(|r| r.data_type == tag).collect()
    }

    pub fn entries(&self) -> impl Iterator<Item = &NameEntry> {
        self.names.values()
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// Broadcasts `payload` in a 0-value output signed by `owner`, without
/// consulting the local index. The chain index decides whether it applies.
pub fn submit_claim(
    net: &mut Network,
    node: NodeId,
    owner: &KeyPair,
    payload: Payload,
    fee: FeePolicy,
) -> Result<Transaction, RegistryError> {
    let out = TxOutput::new(0, Predicate::pay_to(&owner.public_key())).with_payload(payload.to_bytes());
    let (tx, _) = build_payment(net.node(node), owner, vec![out], fee, &[])?;
    net.submit(node, tx.clone())?;
    Ok(tx)
}

/// Broadcasts a registration of `record` signed by `owner`.
pub fn register_sensor(
    net: &mut Network,
    node: NodeId,
    owner: &KeyPair,
    record: &SensorRecord,
    fee: FeePolicy,
) -> Result<Transaction, RegistryError> {
    record.check()?;
    submit_claim(net, node, owner, Payload::Register(record.clone()), fee)
}

/// Broadcasts a replacement record for a name `owner` holds in the node's
/// confirmed index.
pub fn update_record(
    net: &mut Network,
    node: NodeId,
    owner: &KeyPair,
    record: &SensorRecord,
    fee: FeePolicy,
) -> Result<Transaction, RegistryError> {
    record.check()?;
    let current = net.node(node).registry.lookup(&record.name)?;
    if current.owner_key_digest != owner.key_digest() {
        return Err(RegistryError::NotOwner(record.name.clone()));
    }
    submit_claim(net, node, owner, Payload::Update(record.clone()), fee)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Chain, OutPoint, TxInput};

    fn claim(owner: &KeyPair, from: OutPoint, p: Payload) -> Transaction {
        let mut tx = Transaction {
            inputs: vec![TxInput::spending(from)],
            outputs: vec![TxOutput::new(0, Predicate::pay_to(&owner.public_key())).with_payload(p.to_bytes())],
            lock_height: None,
        };
        tx.add_signature(0, owner);
        tx
    }

    fn chain_for(keys: &[&KeyPair]) -> Chain {
        Chain::with_genesis(keys.iter().map(|k| TxOutput::new(100, Predicate::pay_to(&k.public_key()))).collect())
    }

    fn block(chain: &Chain, txs: Vec<Transaction>) -> Block {
        let mut b = Block {
            height: chain.height() + 1,
            prev_block_hash: chain.tip_hash(),
            timestamp_us: (chain.height() + 1) * 1_000_000,
            producer: KeyDigest([9; 20]),
            fee_reward: 0,
            transactions: txs,
        };
        if let Err(crate::ledger::BlockError::BadFeeReward { actual, .. }) = chain.check_block(&b) {
            b.fee_reward = actual;
        }
        b
    }

    #[test]
    fn record_round_trip() {
        let k = KeyPair::from_label("station");
        let r = SensorRecord::new(&k, "zurich-pm25", "air_pollution_pm25", 100, "inline");
        let mut back = SensorRecord::from_bytes(&r.to_bytes()).unwrap();
        back.owner_key_digest = k.key_digest();
        assert_eq!(back, r);
        let big = SensorRecord::new(&k, &"n".repeat(40), "temperature", 1, "inline");
        assert!(matches!(big.check(), Err(RegistryError::RecordTooLarge { .. })));
        let long = SensorRecord::new(&k, &"n".repeat(65), "t", 1, "");
        assert!(matches!(long.check(), Err(RegistryError::InvalidRecord(_))));
    }

    #[test]
    fn same_block_collision_lower_txid_wins() {
        let a = KeyPair::from_label("alice");
        let b = KeyPair::from_label("bob");
        let mut chain = chain_for(&[&a, &b]);
        let g = chain.genesis_txid();
        let ta = claim(
            &a,
            OutPoint::new(g, 0),
            Payload::Register(SensorRecord::new(&a, "roof", "temperature", 5, "inline")),
        );
        let tb = claim(
            &b,
            OutPoint::new(g, 1),
            Payload::Register(SensorRecord::new(&b, "roof", "temperature", 7, "inline")),
        );
        let winner = if ta.txid() < tb.txid() { &a } else { &b };
        // block order must not matter
        let blk = block(&chain, vec![tb.clone(), ta.clone()]);
        chain.apply_block(blk).unwrap();
        let idx = NameIndex::rebuild(chain.blocks());
        assert_eq!(idx.lookup("roof").unwrap().owner_key_digest, winner.key_digest());
        assert_eq!(idx.ignored.len(), 1);
        assert_eq!(idx.ignored[0].reason, "NameTaken");
    }

    #[test]
    fn updates_and_rescan_equivalence() {
        let a = KeyPair::from_label("alice");
        let b = KeyPair::from_label("bob");
        let mut chain = chain_for(&[&a, &b]);
        let g = chain.genesis_txid();
        let reg = claim(
            &a,
            OutPoint::new(g, 0),
            Payload::Register(SensorRecord::new(&a, "roof", "temperature", 5, "inline")),
        );
        let mut inc = NameIndex::new();
        inc.apply_block(&chain.blocks()[0]);
        chain.apply_block(block(&chain, vec![reg.clone()])).unwrap();
        inc.apply_block(chain.tip());

        // two owner updates and one thief update in the same block
        let u1 = claim(
            &a,
            OutPoint::new(reg.txid(), 0),
            Payload::Update(SensorRecord::new(&a, "roof", "temperature", 6, "inline")),
        );
        let thief =
            claim(&b, OutPoint::new(g, 1), Payload::Update(SensorRecord::new(&b, "roof", "temperature", 0, "inline")));
        chain.apply_block(block(&chain, vec![u1.clone(), thief])).unwrap();
        inc.apply_block(chain.tip());
        assert_eq!(inc.lookup("roof").unwrap().price_per_datum, 6);
        assert_eq!(inc.lookup("roof").unwrap().owner_key_digest, a.key_digest());
        assert_eq!(inc.entry("roof").unwrap().last_update_height, 2);
        assert_eq!(inc, NameIndex::rebuild(chain.blocks()));
        assert_eq!(inc.lookup("nowhere").unwrap_err(), RegistryError::UnknownName("nowhere".into()));
    }

    #[test]
    fn two_owner_updates_higher_txid_wins() {
        let a = KeyPair::from_label("alice");
        let mut chain = Chain::with_genesis(vec![
            TxOutput::new(100, Predicate::pay_to(&a.public_key())),
            TxOutput::new(100, Predicate::pay_to(&a.public_key())),
            TxOutput::new(100, Predicate::pay_to(&a.public_key())),
        ]);
        let g = chain.genesis_txid();
        let reg = claim(
            &a,
            OutPoint::new(g, 0),
            Payload::Register(SensorRecord::new(&a, "roof", "temperature", 5, "inline")),
        );
        chain.apply_block(block(&chain, vec![reg])).unwrap();
        let u1 =
            claim(&a, OutPoint::new(g, 1), Payload::Update(SensorRecord::new(&a, "roof", "temperature", 11, "inline")));
        let u2 =
            claim(&a, OutPoint::new(g, 2), Payload::Update(SensorRecord::new(&a, "roof", "temperature", 22, "inline")));
        let later = if u1.txid() > u2.txid() { 11 } else { 22 };
        chain.apply_block(block(&chain, vec![u1, u2])).unwrap();
        let idx = NameIndex::rebuild(chain.blocks());
        assert_eq!(idx.lookup("roof").unwrap().price_per_datum, later);
    }

    #[test]
    fn forged_first_signature_does_not_claim() {
        let a = KeyPair::from_label("alice");
        let victim = KeyPair::from_label("victim");
        let mut chain = chain_for(&[&a]);
        let g = chain.genesis_txid();
        let mut tx = claim(&a, OutPoint::new(g, 0), Payload::Register(SensorRecord::new(&a, "roof", "t", 1, "inline")));
        let mut forged = tx.inputs[0].witness.signatures[0];
        forged.public_key = victim.public_key();
        tx.inputs[0].witness.signatures.insert(0, forged);
        chain.apply_block(block(&chain, vec![tx])).unwrap();
        let idx = NameIndex::rebuild(chain.blocks());
        assert_eq!(idx.lookup("roof").unwrap().owner_key_digest, a.key_digest());
    }

    #[test]
    fn find_by_data_type_sorted() {
        let keys: Vec<KeyPair> = ["c", "a", "b", "d"].iter().map(|l| KeyPair::from_label(l)).collect();
        let mut chain = chain_for(&keys.iter().collect::<Vec<_>>());
        let g = chain.genesis_txid();
        let txs: Vec<Transaction> = ["gamma", "alpha", "beta", "delta"]
            .iter()
            .enumerate()
            .map(|(i, n)| {
                let tag = if i == 3 { "humidity" } else { "temperature" };
                claim(
                    &keys[i],
                    OutPoint::new(g, i as u32),
                    Payload::Register(SensorRecord::new(&keys[i], n, tag, 1, "inline")),
                )
            })
            .collect();
        chain.apply_block(block(&chain, txs)).unwrap();
        let idx = NameIndex::rebuild(chain.blocks());
        let names: Vec<&str> = idx.find_by_data_type("temperature").iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, vec!["alpha", "beta", "gamma"]);
    }
}
