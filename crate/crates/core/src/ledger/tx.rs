//! Transactions, blocks and their canonical byte layout.
//!
//! All integers are little-endian; lists and byte strings carry a `u32`
//! length prefix; optional fields carry a `u8` presence flag.
//!
//! ```text
//! tx       := u32 n_in  input*  u32 n_out  output*  opt(u64 lock_height)
//! input    := txid[32] u32 index u8 flags witness          flags bit0 = anyone-can-pay
//! witness  := u32 n_sig (pubkey[32] sig[64])*  opt(sig[64] oracle)
//! output   := u64 value predicate opt(bytes payload)
//! predicate:= 0x00 key_digest[20]
//!           | 0x01 u8 m u8 n pubkey[32]*n
//!           | 0x02 u64 unlock_height predicate
//!           | 0x03 pubkey[32] bytes expression_id predicate
//!           | 0x04
//!           | 0x05 predicate predicate
//! block    := u64 height hash[32] prev u64 timestamp_us key_digest[20] producer
//!             u64 fee_reward u32 n_tx (bytes tx)*
//! ```

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{
    digest, digest_parts, Hash, KeyDigest, KeyPair, PublicKey, Signature, HASH_LEN, KEY_DIGEST_LEN, PUBLIC_KEY_LEN,
    SIGNATURE_LEN,
};

use super::predicate::{Predicate, MAX_PREDICATE_DEPTH};

/// Largest payload an output may carry.
pub const MAX_PAYLOAD: usize = 80;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct OutPoint {
    pub txid: Hash,
    pub index: u32,
}

impl OutPoint {
    pub fn new(txid: Hash, index: u32) -> Self {
        OutPoint { txid, index }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KeyedSignature {
    pub public_key: PublicKey,
    pub signature: Signature,
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Witness {
    pub signatures: Vec<KeyedSignature>,
    pub oracle_signature: Option<Signature>,
}

impl Witness {
    /// First key in the witness; the payer identity for single-signer inputs.
    pub fn first_key(&self) -> Option<PublicKey> {
        self.signatures.first().map(|s| s.public_key)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxInput {
    pub prev: OutPoint,
    pub witness: Witness,
    pub anyone_can_pay: bool,
}

impl TxInput {
    pub fn spending(prev: OutPoint) -> Self {
        TxInput { prev, witness: Witness::default(), anyone_can_pay: false }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TxOutput {
    pub value: u64,
    pub predicate: Predicate,
    pub payload: Option<Vec<u8>>,
}

impl TxOutput {
    pub fn new(value: u64, predicate: Predicate) -> Self {
        TxOutput { value, predicate, payload: None }
    }

    pub fn with_payload(mut self, payload: Vec<u8>) -> Self {
        self.payload = Some(payload);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Transaction {
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
    pub lock_height: Option<u64>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecodeError {
    #[error("unexpected end of input at offset {0}")]
    Truncated(usize),
    #[error("unknown tag {tag:#04x} at offset {offset}")]
    BadTag { tag: u8, offset: usize },
    #[error("{0} trailing bytes")]
    Trailing(usize),
    #[error("predicate nested deeper than {MAX_PREDICATE_DEPTH}")]
    TooDeep,
    #[error("invalid utf-8 in expression id")]
    BadUtf8,
}

pub(crate) struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new() -> Self {
        Writer { buf: Vec::with_capacity(256) }
    }
    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }
    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn raw(&mut self, b: &[u8]) {
        self.buf.extend_from_slice(b);
    }
    pub(crate) fn bytes(&mut self, b: &[u8]) {
        self.u32(b.len() as u32);
        self.raw(b);
    }
    pub(crate) fn finish(self) -> Vec<u8> {
        self.buf
    }
}

pub(crate) struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Reader { buf, pos: 0 }
    }
    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8], DecodeError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(DecodeError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    pub(crate) fn u8(&mut self) -> Result<u8, DecodeError> {
        Ok(self.take(1)?[0])
    }
    pub(crate) fn u32(&mut self) -> Result<u32, DecodeError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn u64(&mut self) -> Result<u64, DecodeError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn array<const N: usize>(&mut self) -> Result<[u8; N], DecodeError> {
        Ok(self.take(N)?.try_into().unwrap())
    }
    pub(crate) fn bytes(&mut self) -> Result<&'a [u8], DecodeError> {
        let n = self.u32()? as usize;
        self.take(n)
    }
    pub(crate) fn offset(&self) -> usize {
        self.pos
    }
    pub(crate) fn finish(self) -> Result<(), DecodeError> {
        match self.buf.len() - self.pos {
            0 => Ok(()),
            n => Err(DecodeError::Trailing(n)),
        }
    }
}

fn write_predicate(w: &mut Writer, p: &Predicate) {
    match p {
        Predicate::PayToKeyHash(d) => {
            w.u8(0x00);
            w.raw(&d.0);
        }
        Predicate::MultiSig { required, keys } => {
            w.u8(0x01);
            w.u8(*required);
            w.u8(keys.len() as u8);
            for k in keys {
                w.raw(&k.0);
            }
        }
        Predicate::TimeLocked { unlock_height, inner } => {
            w.u8(0x02);
            w.u64(*unlock_height);
            write_predicate(w, inner);
        }
        Predicate::OracleGated { oracle_key, expression_id, inner } => {
            w.u8(0x03);
            w.raw(&oracle_key.0);
            w.bytes(expression_id.as_bytes());
            write_predicate(w, inner);
        }
        Predicate::AnyoneCanSpend => w.u8(0x04),
        Predicate::Either(l, r) => {
            w.u8(0x05);
            write_predicate(w, l);
            write_predicate(w, r);
        }
    }
}

fn read_predicate(r: &mut Reader<'_>, depth: usize) -> Result<Predicate, DecodeError> {
    if depth > MAX_PREDICATE_DEPTH {
        return Err(DecodeError::TooDeep);
    }
    let offset = r.offset();
    Ok(match r.u8()? {
        0x00 => Predicate::PayToKeyHash(KeyDigest(r.array::<KEY_DIGEST_LEN>()?)),
        0x01 => {
            let required = r.u8()?;
            let n = r.u8()? as usize;
            let keys = (0..n).map(|_| r.array::<PUBLIC_KEY_LEN>().map(PublicKey)).collect::<Result<_, _>>()?;
            Predicate::MultiSig { required, keys }
        }
        0x02 => {
            let unlock_height = r.u64()?;
            Predicate::TimeLocked { unlock_height, inner: Box::new(read_predicate(r, depth + 1)?) }
        }
        0x03 => {
            let oracle_key = PublicKey(r.array()?);
            let expression_id = std::str::from_utf8(r.bytes()?).map_err(|_| DecodeError::BadUtf8)?.to_string();
            Predicate::OracleGated { oracle_key, expression_id, inner: Box::new(read_predicate(r, depth + 1)?) }
        }
        0x04 => Predicate::AnyoneCanSpend,
        0x05 => {
            let l = read_predicate(r, depth + 1)?;
            let rr = read_predicate(r, depth + 1)?;
            Predicate::Either(Box::new(l), Box::new(rr))
        }
        tag => return Err(DecodeError::BadTag { tag, offset }),
    })
}

fn write_output(w: &mut Writer, o: &TxOutput) {
    w.u64(o.value);
    write_predicate(w, &o.predicate);
    match &o.payload {
        Some(p) => {
            w.u8(1);
            w.bytes(p);
        }
        None => w.u8(0),
    }
}

fn read_flag(r: &mut Reader<'_>) -> Result<bool, DecodeError> {
    let offset = r.offset();
    match r.u8()? {
        0 => Ok(false),
        1 => Ok(true),
        tag => Err(DecodeError::BadTag { tag, offset }),
    }
}

impl Transaction {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.inputs.len() as u32);
        for i in &self.inputs {
            w.raw(&i.prev.txid.0);
            w.u32(i.prev.index);
            w.u8(i.anyone_can_pay as u8);
            w.u32(i.witness.signatures.len() as u32);
            for s in &i.witness.signatures {
                w.raw(&s.public_key.0);
                w.raw(&s.signature.0);
            }
            match &i.witness.oracle_signature {
                Some(s) => {
                    w.u8(1);
                    w.raw(&s.0);
                }
                None => w.u8(0),
            }
        }
        w.u32(self.outputs.len() as u32);
        for o in &self.outputs {
            write_output(&mut w, o);
        }
        match self.lock_height {
            Some(h) => {
                w.u8(1);
                w.u64(h);
            }
            None => w.u8(0),
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Transaction, DecodeError> {
        let mut r = Reader::new(bytes);
        let tx = Self::read(&mut r)?;
        r.finish()?;
        Ok(tx)
    }

    fn read(r: &mut Reader<'_>) -> Result<Transaction, DecodeError> {
        let n_in = r.u32()? as usize;
        let mut inputs = Vec::with_capacity(n_in.min(1024));
        for _ in 0..n_in {
            let txid = Hash(r.array()?);
            let index = r.u32()?;
            let anyone_can_pay = read_flag(r)?;
            let n_sig = r.u32()? as usize;
            let mut signatures = Vec::with_capacity(n_sig.min(64));
            for _ in 0..n_sig {
                let public_key = PublicKey(r.array()?);
                let signature = Signature(r.array::<SIGNATURE_LEN>()?);
                signatures.push(KeyedSignature { public_key, signature });
            }
            let oracle_signature = if read_flag(r)? { Some(Signature(r.array()?)) } else { None };
            inputs.push(TxInput {
                prev: OutPoint::new(txid, index),
                witness: Witness { signatures, oracle_signature },
                anyone_can_pay,
            });
        }
        let n_out = r.u32()? as usize;
        let mut outputs = Vec::with_capacity(n_out.min(1024));
        for _ in 0..n_out {
            let value = r.u64()?;
            let predicate = read_predicate(r, 1)?;
            let payload = if read_flag(r)? { Some(r.bytes()?.to_vec()) } else { None };
            outputs.push(TxOutput { value, predicate, payload });
        }
        let lock_height = if read_flag(r)? { Some(r.u64()?) } else { None };
        Ok(Transaction { inputs, outputs, lock_height })
    }

    pub fn txid(&self) -> Hash {
        digest(&self.to_bytes())
    }

    pub fn serialized_size(&self) -> usize {
        self.to_bytes().len()
    }

    /// Hash each input's signatures commit to. Witnesses are excluded. An
    /// anyone-can-pay input commits only to its own outpoint and the outputs,
    /// so other inputs may be added later without invalidating it.
    pub fn sighash(&self, input_index: usize) -> Hash {
        let input = &self.inputs[input_index];
        let mut w = Writer::new();
        w.u8(input.anyone_can_pay as u8);
        if !input.anyone_can_pay {
            w.u32(self.inputs.len() as u32);
            for i in &self.inputs {
                w.raw(&i.prev.txid.0);
                w.u32(i.prev.index);
            }
        }
        w.raw(&input.prev.txid.0);
        w.u32(input.prev.index);
        w.u32(self.outputs.len() as u32);
        for o in &self.outputs {
            write_output(&mut w, o);
        }
        match self.lock_height {
            Some(h) => {
                w.u8(1);
                w.u64(h);
            }
            None => w.u8(0),
        }
        digest_parts(&[b"s2aas/sighash", &w.finish()])
    }

    pub fn sign_input(&self, input_index: usize, keypair: &KeyPair) -> KeyedSignature {
        let h = self.sighash(input_index);
        KeyedSignature { public_key: keypair.public_key(), signature: keypair.sign(&h.0) }
    }

    /// Signs `input_index` with `keypair` and appends the signature to its witness.
    pub fn add_signature(&mut self, input_index: usize, keypair: &KeyPair) {
        let sig = self.sign_input(input_index, keypair);
        self.inputs[input_index].witness.signatures.push(sig);
    }

    pub fn total_output(&self) -> Option<u64> {
        self.outputs.iter().try_fold(0u64, |acc, o| acc.checked_add(o.value))
    }

    pub fn outpoints(&self) -> impl Iterator<Item = OutPoint> + '_ {
        let txid = self.txid();
        (0..self.outputs.len() as u32).map(move |i| OutPoint::new(txid, i))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Block {
    pub height: u64,
    pub prev_block_hash: Hash,
    /// Simulated time in microseconds.
    pub timestamp_us: u64,
    pub producer: KeyDigest,
    pub fee_reward: u64,
    pub transactions: Vec<Transaction>,
}

impl Block {
    fn header_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u64(self.height);
        w.raw(&self.prev_block_hash.0);
        w.u64(self.timestamp_us);
        w.raw(&self.producer.0);
        w.u64(self.fee_reward);
        w.finish()
    }

    pub fn hash(&self) -> Hash {
        let mut w = Writer::new();
        w.raw(&self.header_bytes());
        w.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            w.raw(&tx.txid().0);
        }
        digest_parts(&[b"s2aas/block", &w.finish()])
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.raw(&self.header_bytes());
        w.u32(self.transactions.len() as u32);
        for tx in &self.transactions {
            w.bytes(&tx.to_bytes());
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Block, DecodeError> {
        let mut r = Reader::new(bytes);
        let height = r.u64()?;
        let prev_block_hash = Hash(r.array::<HASH_LEN>()?);
        let timestamp_us = r.u64()?;
        let producer = KeyDigest(r.array()?);
        let fee_reward = r.u64()?;
        let n = r.u32()? as usize;
        let mut transactions = Vec::with_capacity(n.min(4096));
        for _ in 0..n {
            transactions.push(Transaction::from_bytes(r.bytes()?)?);
        }
        r.finish()?;
        Ok(Block { height, prev_block_hash, timestamp_us, producer, fee_reward, transactions })
    }

    /// Outpoint at which the block's fee reward is credited to the producer.
    pub fn reward_outpoint(&self) -> OutPoint {
        OutPoint::new(self.hash(), 0)
    }
}
