//! Escrow with mediation, assurance contracts and oracle-gated payouts.

pub mod assurance;
pub mod escrow;
pub mod oracle;

pub use assurance::{assemble_assurance, make_pledge, Campaign, Pledge};
pub use escrow::{escrow_release, fund_escrow, mediate, release_tx, EscrowAgreement, EscrowStatus};
pub use oracle::{
    bet_predicate, fund_bet, oracle_sign, settle_bet, Comparison, Expression, OracleService, OracleVerdict,
};

use thiserror::Error;

use crate::crypto::Hash;
use crate::ledger::{MempoolError, OutPoint, TxViolation};
use crate::wallet::WalletError;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ContractError {
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("amount must be positive")]
    InvalidAmount,
    #[error("no unspent output of exactly {amount}")]
    NoExactOutput { amount: u64 },
    #[error("pledges fall {shortfall} short of the goal")]
    InsufficientPledges { shortfall: u64 },
    #[error("pledged output {outpoint:?} was spent elsewhere")]
    DoubleSpentPledge { outpoint: OutPoint },
    #[error("unknown oracle expression {0:?}")]
    UnknownExpression(String),
    #[error("bad expression {0:?}: expected `<fact> <op> <number>`")]
    BadExpression(String),
    #[error("funding transaction {0} is not confirmed yet")]
    Unconfirmed(Hash),
    #[error(transparent)]
    Ledger(TxViolation),
    #[error("rejected by node: {0}")]
    Rejected(MempoolError),
}

impl ContractError {
    pub fn name(&self) -> &'static str {
        match self {
            ContractError::Wallet(_) | ContractError::NoExactOutput { .. } => "InsufficientFunds",
            ContractError::InvalidAmount => "InvalidAmount",
            ContractError::InsufficientPledges { .. } => "InsufficientPledges",
            ContractError::DoubleSpentPledge { .. } => "DoubleSpentPledge",
            ContractError::UnknownExpression(_) => "UnknownExpression",
            ContractError::BadExpression(_) => "BadExpression",
            ContractError::Unconfirmed(_) => "Unconfirmed",
            ContractError::Ledger(v) => v.name(),
            ContractError::Rejected(e) => e.name(),
        }
    }
}

impl From<MempoolError> for ContractError {
    fn from(e: MempoolError) -> Self {
        match e {
            MempoolError::Invalid(v) => ContractError::Ledger(v),
            other => ContractError::Rejected(other),
        }
    }
}

impl From<TxViolation> for ContractError {
    fn from(v: TxViolation) -> Self {
        ContractError::Ledger(v)
    }
}
