//! The datum-for-cash exchange between a requester and a sensor.
//!
//! 1. The requester pays the sensor's price to its address, marking the
//!    output as a purchase.
//! 2. The sensor notices the payment once it has `k` confirmations and
//!    learns the payer's public key from the payment's first input witness.
//! 3. The sensor sends a 1-unit marker output to the payer carrying its
//!    current datum encrypted for the payer, either inline or as an anchor
//!    to an encrypted blob held by off-chain stores.
//! 4. The requester decrypts (fetching and checking the anchor first).

use std::collections::{BTreeMap, BTreeSet};

use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{decrypt, encrypt_for, CipherEnvelope, Hash, KeyDigest, KeyPair, PublicKey};
use crate::datastore::{DatastoreError, Datastores, StoreId};
use crate::ledger::{MempoolError, OutPoint, Predicate, Transaction, TxOutput};
use crate::payload::{Payload, MAX_INLINE_DATUM};
use crate::registry::SensorRecord;
use crate::simnet::{Network, Node, NodeId, SimTime};
use crate::wallet::{build_payment, FeePolicy, WalletError};

pub const MARKER_VALUE: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExchangeError {
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("sensor has no funds besides the payment to cover the delivery fee")]
    NoSensorFunds,
    #[error("rejected by node: {0}")]
    Rejected(#[from] MempoolError),
    #[error(transparent)]
    Datastore(#[from] DatastoreError),
    #[error("datum too large for inline delivery and no stores configured")]
    NoStores,
    #[error("delivery could not be decrypted")]
    DecryptFailed,
    #[error("anchored datum does not match its anchor")]
    AnchorMismatch,
}

impl ExchangeError {
    pub fn name(&self) -> &'static str {
        match self {
            ExchangeError::Wallet(_) => "InsufficientFunds",
            ExchangeError::NoSensorFunds => "NoSensorFunds",
            ExchangeError::Rejected(e) => e.name(),
            ExchangeError::Datastore(_) => "DatastoreError",
            ExchangeError::NoStores => "NoStores",
            ExchangeError::DecryptFailed => "DecryptFailed",
            ExchangeError::AnchorMismatch => "AnchorMismatch",
        }
    }
}

/// Datum a sensor reports at a given simulated time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatumSource {
    Constant(String),
    /// `prefix ‖ format(base + slope·⌊t / period_s⌋, decimals) ‖ suffix`.
    Series {
        #[serde(default)]
        prefix: String,
        base: f64,
        #[serde(default)]
        slope: f64,
        #[serde(default = "default_period")]
        period_s: f64,
        #[serde(default)]
        decimals: usize,
        #[serde(default)]
        suffix: String,
    },
    /// `size` pseudo-random bytes that change with every reading.
    Blob {
        size: usize,
    },
}

fn default_period() -> f64 {
    600.0
}

impl DatumSource {
    pub fn datum_at(&self, t: SimTime) -> Vec<u8> {
        match self {
            DatumSource::Constant(s) => s.as_bytes().to_vec(),
            DatumSource::Series { prefix, base, slope, period_s, decimals, suffix } => {
                let step = (t.as_secs_f64() / period_s).floor();
                format!("{prefix}{:.*}{suffix}", decimals, base + slope * step).into_bytes()
            }
            DatumSource::Blob { size } => {
                let mut out = Vec::with_capacity(*size);
                let mut counter = 0u64;
                while out.len() < *size {
                    let h = crate::crypto::digest_parts(&[b"s2aas/blob", &t.0.to_le_bytes(), &counter.to_le_bytes()]);
                    out.extend_from_slice(&h.0);
                    counter += 1;
                }
                out.truncate(*size);
                out
            }
        }
    }
}

/// Where datums too large for a payload go.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OffChain {
    #[serde(default = "default_replication")]
    pub replication: usize,
    /// Preferred stores, in order; empty means all stores by id.
    #[serde(default)]
    pub stores: Vec<StoreId>,
}

fn default_replication() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PaymentNotice {
    pub payment_txid: Hash,
    pub outpoint: OutPoint,
    pub amount: u64,
    pub payer: PublicKey,
    pub height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Fulfillment {
    pub payment_txid: Hash,
    pub delivery_txid: Hash,
    pub datum: Vec<u8>,
    pub fee: u64,
    pub anchored: bool,
}

#[derive(Debug)]
pub struct SensorActor {
    pub keypair: KeyPair,
    pub node: NodeId,
    pub price_per_datum: u64,
    pub source: DatumSource,
    pub confirmations: u64,
    pub off_chain: OffChain,
    pub fee: FeePolicy,
    scanned_height: u64,
    /// Payments seen but not yet fulfilled.
    pub pending: Vec<PaymentNotice>,
    pub underpaid: Vec<PaymentNotice>,
    pub fulfilled: Vec<Fulfillment>,
}

impl SensorActor {
    pub fn new(keypair: KeyPair, node: NodeId, price_per_datum: u64, source: DatumSource) -> SensorActor {
        SensorActor {
            keypair,
            node,
            price_per_datum,
            source,
            confirmations: 1,
            off_chain: OffChain { replication: default_replication(), stores: Vec::new() },
            fee: FeePolicy::default(),
            scanned_height: 0,
            pending: Vec::new(),
            underpaid: Vec::new(),
            fulfilled: Vec::new(),
        }
    }

    pub fn key_digest(&self) -> KeyDigest {
        self.keypair.key_digest()
    }
}

/// New purchase payments to `sensor` with at least `sensor.confirmations`
/// confirmations at `node`. Payments below the price are set aside in
/// `sensor.underpaid` instead of being returned.
pub fn detect_payment(sensor: &mut SensorActor, node: &Node) -> Vec<PaymentNotice> {
    let chain = &node.chain;
    let k = sensor.confirmations.max(1);
    if chain.height() + 1 < k {
        return Vec::new();
    }
    let last = chain.height() + 1 - k;
    let me = sensor.key_digest();
    let mut found = Vec::new();
    for h in sensor.scanned_height + 1..=last {
        let block = chain.block(h).expect("height within chain");
        for tx in &block.transactions {
            for (i, o) in tx.outputs.iter().enumerate() {
                if o.predicate != Predicate::PayToKeyHash(me) {
                    continue;
                }
                if o.payload.as_deref().and_then(Payload::parse) != Some(Payload::PurchaseRequest) {
                    continue;
                }
                let Some(payer) = tx.inputs.first().and_then(|inp| inp.witness.first_key()) else { continue };
                let txid = tx.txid();
                let notice = PaymentNotice {
                    payment_txid: txid,
                    outpoint: OutPoint::new(txid, i as u32),
                    amount: o.value,
                    payer,
                    height: h,
                };
                if o.value < sensor.price_per_datum {
                    sensor.underpaid.push(notice);
                } else {
                    found.push(notice);
                }
            }
        }
    }
    sensor.scanned_height = sensor.scanned_height.max(last);
    sensor.pending.extend(found.iter().cloned());
    found
}

/// Encrypts the sensor's current datum for the payer and broadcasts the
/// delivery. The fee comes from sensor funds other than the payment itself.
pub fn fulfill<R: RngCore + CryptoRng>(
    sensor: &mut SensorActor,
    notice: &PaymentNotice,
    net: &mut Network,
    stores: &mut Datastores,
    rng: &mut R,
) -> Result<Transaction, ExchangeError> {
    let datum = sensor.source.datum_at(net.now());
    let envelope = encrypt_for(&notice.payer, &datum, rng).expect("datum is never empty and payer key is valid");
    let anchored = datum.len() > MAX_INLINE_DATUM;
    let payload = if anchored {
        if stores.is_empty() {
            return Err(ExchangeError::NoStores);
        }
        let anchor = stores.store(&envelope.to_bytes(), sensor.off_chain.replication, &sensor.off_chain.stores)?;
        Payload::AnchoredDatum(anchor)
    } else {
        Payload::InlineDatum(envelope)
    };
    let marker = TxOutput::new(MARKER_VALUE, Predicate::pay_to(&notice.payer)).with_payload(payload.to_bytes());
    let (tx, fee) = build_payment(net.node(sensor.node), &sensor.keypair, vec![marker], sensor.fee, &[notice.outpoint])
        .map_err(|_| ExchangeError::NoSensorFunds)?;
    let delivery_txid = net.submit(sensor.node, tx.clone())?;
    sensor.pending.retain(|p| p.outpoint != notice.outpoint);
    sensor.fulfilled.push(Fulfillment { payment_txid: notice.payment_txid, delivery_txid, datum, fee, anchored });
    Ok(tx)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Outstanding {
    pub payment_txid: Hash,
    pub sensor: KeyDigest,
    pub amount: u64,
    pub fee: u64,
    pub requested_at: SimTime,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct DatumDelivery {
    pub payment_txid: Hash,
    pub delivery_txid: Hash,
    pub delivery_height: u64,
    pub plaintext: Vec<u8>,
}

/// A delivery that matched a request but could not be opened.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FailedDelivery {
    pub payment_txid: Hash,
    pub delivery_txid: Hash,
    pub error: ExchangeError,
}

#[derive(Debug)]
pub struct RequesterActor {
    pub keypair: KeyPair,
    pub node: NodeId,
    pub confirmations: u64,
    pub fee: FeePolicy,
    /// Requests in the order they were made.
    pub outstanding: Vec<Outstanding>,
    pub delivered: Vec<DatumDelivery>,
    pub failures: Vec<FailedDelivery>,
    scanned_height: u64,
    seen: BTreeSet<Hash>,
}

impl RequesterActor {
    pub fn new(keypair: KeyPair, node: NodeId) -> RequesterActor {
        RequesterActor {
            keypair,
            node,
            confirmations: 1,
            fee: FeePolicy::default(),
            outstanding: Vec::new(),
            delivered: Vec::new(),
            failures: Vec::new(),
            scanned_height: 0,
            seen: BTreeSet::new(),
        }
    }
}

/// Pays `amount` (normally the record's price) to the sensor's payment
/// address and registers the request.
pub fn initiate_purchase(
    requester: &mut RequesterActor,
    record: &SensorRecord,
    amount: u64,
    net: &mut Network,
) -> Result<Transaction, ExchangeError> {
    let sensor = record.payment_address.key_digest;
    let out = TxOutput::new(amount, Predicate::PayToKeyHash(sensor)).with_payload(Payload::PurchaseRequest.to_bytes());
    let (tx, fee) = build_payment(net.node(requester.node), &requester.keypair, vec![out], requester.fee, &[])?;
    let payment_txid = net.submit(requester.node, tx.clone())?;
    requester.outstanding.push(Outstanding { payment_txid, sensor, amount, fee, requested_at: net.now() });
    Ok(tx)
}

fn open(requester: &RequesterActor, payload: Payload, stores: &mut Datastores) -> Result<Vec<u8>, ExchangeError> {
    let envelope = match payload {
        Payload::InlineDatum(env) => env,
        Payload::AnchoredDatum(anchor) => {
            let fetched = stores.fetch(&anchor).map_err(|_| ExchangeError::AnchorMismatch)?;
            CipherEnvelope::from_bytes(&fetched.content).map_err(|_| ExchangeError::DecryptFailed)?
        }
        _ => unreachable!("only datum payloads are opened"),
    };
    decrypt(&requester.keypair, &envelope).map_err(|_| ExchangeError::DecryptFailed)
}

/// Opens confirmed deliveries addressed to the requester, matching each to
/// the oldest outstanding request to the delivering sensor. Failed
/// deliveries leave the request outstanding and are recorded.
pub fn receive_datum(requester: &mut RequesterActor, node: &Node, stores: &mut Datastores) -> Vec<DatumDelivery> {
    let chain = &node.chain;
    let k = requester.confirmations.max(1);
    if chain.height() + 1 < k {
        return Vec::new();
    }
    let last = chain.height() + 1 - k;
    let me = requester.keypair.key_digest();
    let mut out = Vec::new();
    for h in requester.scanned_height + 1..=last {
        let block = chain.block(h).expect("height within chain");
        for tx in &block.transactions {
            let txid = tx.txid();
            let Some(payload) = tx
                .outputs
                .iter()
                .filter(|o| o.predicate == Predicate::PayToKeyHash(me))
                .filter_map(|o| o.payload.as_deref().and_then(Payload::parse))
                .find(|p| matches!(p, Payload::InlineDatum(_) | Payload::AnchoredDatum(_)))
            else {
                continue;
            };
            if !requester.seen.insert(txid) {
                continue;
            }
            let Some(sender) = tx.inputs.first().and_then(|i| i.witness.first_key()) else { continue };
            let Some(pos) = requester.outstanding.iter().position(|o| o.sensor == sender.key_digest()) else {
                continue;
            };
            let payment_txid = requester.outstanding[pos].payment_txid;
            match open(requester, payload, stores) {
                Ok(plaintext) => {
                    requester.outstanding.remove(pos);
                    let d = DatumDelivery { payment_txid, delivery_txid: txid, delivery_height: h, plaintext };
                    requester.delivered.push(d.clone());
                    out.push(d);
                }
                Err(error) => requester.failures.push(FailedDelivery { payment_txid, delivery_txid: txid, error }),
            }
        }
    }
    requester.scanned_height = requester.scanned_height.max(last);
    out
}

/// Delivery fee paid per payment txid.
pub fn delivery_fees(sensor: &SensorActor) -> BTreeMap<Hash, u64> {
    sensor.fulfilled.iter().map(|f| (f.payment_txid, f.fee)).collect()
}
