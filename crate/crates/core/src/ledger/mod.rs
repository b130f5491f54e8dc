//! UTXO ledger: predicates, transactions, validation, chain state and mempool.

mod chain;
mod mempool;
mod predicate;
mod tx;
mod utxo;
mod validate;

pub use chain::{audit_chain, BlockError, Chain, ChainAudit};
pub use mempool::{fee_rate_cmp, Mempool, MempoolError, PoolEntry};
pub use predicate::{oracle_message, Predicate, MAX_EXPRESSION_ID_LEN, MAX_MULTISIG_KEYS, MAX_PREDICATE_DEPTH};
pub use tx::{Block, DecodeError, KeyedSignature, OutPoint, Transaction, TxInput, TxOutput, Witness, MAX_PAYLOAD};
pub(crate) use tx::{Reader, Writer};
pub use utxo::{UtxoEntry, UtxoSet, UtxoView};
pub use validate::validate_transaction;

use serde::Serialize;
use thiserror::Error;

/// First rule a transaction breaks.
#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "violation")]
pub enum TxViolation {
    #[error("input {input} spends a missing or already spent output")]
    MissingUtxo { input: usize, outpoint: OutPoint },
    #[error("signature does not verify")]
    BadSignature,
    #[error("{valid} of {required} required signatures")]
    InsufficientSigners { required: usize, valid: usize },
    #[error("locked until height {unlock_height}, evaluated at {height}")]
    TimelockNotExpired { unlock_height: u64, height: u64 },
    #[error("oracle signature missing")]
    OracleSignatureMissing,
    #[error("outputs exceed inputs by {excess}")]
    NegativeFee { excess: u64 },
    #[error("malformed transaction: {reason}")]
    MalformedTx { reason: String },
}

impl TxViolation {
    pub(crate) fn malformed(reason: impl Into<String>) -> Self {
        TxViolation::MalformedTx { reason: reason.into() }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TxViolation::MissingUtxo { .. } => "MissingUtxo",
            TxViolation::BadSignature => "BadSignature",
            TxViolation::InsufficientSigners { .. } => "InsufficientSigners",
            TxViolation::TimelockNotExpired { .. } => "TimelockNotExpired",
            TxViolation::OracleSignatureMissing => "OracleSignatureMissing",
            TxViolation::NegativeFee { .. } => "NegativeFee",
            TxViolation::MalformedTx { .. } => "MalformedTx",
        }
    }
}
