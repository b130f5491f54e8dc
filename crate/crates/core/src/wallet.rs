//! Coin selection and fee accounting for pay-to-key-hash wallets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{KeyPair, Signature};
use crate::ledger::{KeyedSignature, OutPoint, Predicate, Transaction, TxInput, TxOutput};
use crate::simnet::Node;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeePolicy {
    /// Fee proportional to serialized size.
    PerByte(u64),
    Flat(u64),
}

impl Default for FeePolicy {
    fn default() -> Self {
        FeePolicy::PerByte(1)
    }
}

impl FeePolicy {
    pub fn fee_for(&self, size: usize) -> u64 {
        match *self {
            FeePolicy::PerByte(r) => r * size as u64,
            FeePolicy::Flat(f) => f,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
pub enum WalletError {
    #[error("insufficient funds: need {needed}, have {available}")]
    InsufficientFunds { needed: u64, available: u64 },
}

/// One party funding part of a transaction.
pub struct Contribution<'a> {
    pub keypair: &'a KeyPair,
    pub amount: u64,
    /// Outpoints this party must not spend.
    pub exclude: &'a [OutPoint],
}

fn dummy_signature(kp: &KeyPair) -> KeyedSignature {
    KeyedSignature { public_key: kp.public_key(), signature: Signature([0; 64]) }
}

/// Builds and signs a transaction paying `outputs`, funded by each
/// contributor's spendable outputs at `node` (largest first). Each
/// contributor covers its `amount` plus an equal share of the fee and gets
/// its own change output. Returns the transaction and the fee paid.
pub fn build_joint(
    node: &Node,
    contributions: &[Contribution<'_>],
    outputs: Vec<TxOutput>,
    fee: FeePolicy,
) -> Result<(Transaction, u64), WalletError> {
    let n = contributions.len() as u64;
    assert!(n > 0, "at least one contributor");
    let pools: Vec<Vec<(OutPoint, TxOutput)>> = contributions
        .iter()
        .map(|c| {
            let mut coins: Vec<_> =
                node.spendable(&c.keypair.key_digest()).into_iter().filter(|(op, _)| !c.exclude.contains(op)).collect();
            coins.sort_by(|a, b| b.1.value.cmp(&a.1.value).then(a.0.cmp(&b.0)));
            coins
        })
        .collect();

    let mut fee_guess = match fee {
        FeePolicy::Flat(f) => f,
        FeePolicy::PerByte(_) => 0,
    };
    loop {
        let mut tx = Transaction { inputs: vec![], outputs: outputs.clone(), lock_height: None };
        let mut owners = Vec::new();
        for (i, (c, coins)) in contributions.iter().zip(&pools).enumerate() {
            let share = fee_guess / n + if i == 0 { fee_guess % n } else { 0 };
            let need = c.amount + share;
            let mut got = 0u64;
            for (k, (op, o)) in coins.iter().enumerate() {
                // every contributor signs at least one input, even for a zero amount
                if got >= need && k > 0 {
                    break;
                }
                got += o.value;
                let mut input = TxInput::spending(*op);
                input.witness.signatures.push(dummy_signature(c.keypair));
                tx.inputs.push(input);
                owners.push(c.keypair);
            }
            if got < need {
                let available = coins.iter().map(|(_, o)| o.value).sum();
                return Err(WalletError::InsufficientFunds { needed: need, available });
            }
            if got > need {
                tx.outputs.push(TxOutput::new(got - need, Predicate::pay_to(&c.keypair.public_key())));
            }
        }
        if tx.inputs.is_empty() {
            return Err(WalletError::InsufficientFunds { needed: 1, available: 0 });
        }
        let needed = fee.fee_for(tx.serialized_size());
        if needed <= fee_guess {
            for input in &mut tx.inputs {
                input.witness.signatures.clear();
            }
            for (i, kp) in owners.iter().enumerate() {
                tx.add_signature(i, kp);
            }
            return Ok((tx, fee_guess));
        }
        fee_guess = needed;
    }
}

/// Single-payer transaction paying `outputs` with change back to the payer.
pub fn build_payment(
    node: &Node,
    keypair: &KeyPair,
    outputs: Vec<TxOutput>,
    fee: FeePolicy,
    exclude: &[OutPoint],
) -> Result<(Transaction, u64), WalletError> {
    let amount = outputs.iter().map(|o| o.value).sum();
    build_joint(node, &[Contribution { keypair, amount, exclude }], outputs, fee)
}
