//! Sensor data sold for cash over a simulated UTXO ledger.
//!
//! The crate provides the ledger ([`ledger`]), key material and encryption
//! ([`crypto`]), a deterministic discrete-event network ([`simnet`]), the
//! datum-for-cash exchange ([`exchange`]), micropayment channels
//! ([`channels`]), escrow / assurance / oracle contracts ([`contracts`]), a
//! first-claim name registry ([`registry`]), off-chain anchored storage
//! ([`datastore`]) and a scenario runner ([`scenario`]).

pub mod channels;
pub mod contracts;
pub mod crypto;
pub mod datastore;
pub mod exchange;
pub mod ledger;
pub mod payload;
pub mod registry;
pub mod scenario;
pub mod simnet;
pub mod wallet;
