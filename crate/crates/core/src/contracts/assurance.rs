//! Assurance contracts: pledges that only form a valid transaction once
//! together they reach the goal.
//!
//! Each pledge is an anyone-can-pay input signed over the single goal
//! output, so the entrepreneur can combine any set of pledges without
//! invalidating their signatures. Such inputs cannot take change, so a
//! contributor pledges an output of exactly the pledged amount.

use serde::Serialize;

use crate::crypto::{KeyDigest, KeyPair, PublicKey};
use crate::ledger::{OutPoint, Predicate, Transaction, TxInput, TxOutput};
use crate::simnet::Node;

use super::ContractError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Campaign {
    pub entrepreneur: KeyDigest,
    pub goal: u64,
}

impl Campaign {
    pub fn goal_output(&self) -> TxOutput {
        TxOutput::new(self.goal, Predicate::PayToKeyHash(self.entrepreneur))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Pledge {
    pub contributor: PublicKey,
    pub input: TxInput,
    /// Value claimed by the contributor; assembly re-reads the ledger.
    pub amount: u64,
}

impl Pledge {
    pub fn outpoint(&self) -> OutPoint {
        self.input.prev
    }

    /// The pledge on its own, which is never valid while it is below the goal.
    pub fn as_transaction(&self, campaign: &Campaign) -> Transaction {
        Transaction { inputs: vec![self.input.clone()], outputs: vec![campaign.goal_output()], lock_height: None }
    }
}

/// Signs one of `contributor`'s unspent outputs worth exactly `amount`
/// towards `campaign`. Outputs in `exclude` (already pledged) are skipped.
pub fn make_pledge(
    node: &Node,
    contributor: &KeyPair,
    campaign: &Campaign,
    amount: u64,
    exclude: &[OutPoint],
) -> Result<Pledge, ContractError> {
    if amount == 0 {
        return Err(ContractError::InvalidAmount);
    }
    let outpoint = node
        .chain
        .utxo()
        .owned_by(&contributor.key_digest())
        .filter(|(op, e)| e.output.value == amount && !exclude.contains(op) && !node.mempool.is_spent(op))
        .map(|(op, _)| *op)
        .min()
        .ok_or(ContractError::NoExactOutput { amount })?;
    let mut input = TxInput::spending(outpoint);
    input.anyone_can_pay = true;
    let mut tx = Transaction { inputs: vec![input], outputs: vec![campaign.goal_output()], lock_height: None };
    tx.add_signature(0, contributor);
    Ok(Pledge { contributor: contributor.public_key(), input: tx.inputs.remove(0), amount })
}

/// Combines `pledges` into one transaction paying the goal. Pledge values
/// are read from the node's confirmed state, not taken from the pledges;
/// anything above the goal is left as fee.
pub fn assemble_assurance(
    pledges: &[Pledge],
    campaign: &Campaign,
    node: &Node,
) -> Result<(Transaction, u64), ContractError> {
    let mut total: u64 = 0;
    for p in pledges {
        let op = p.outpoint();
        let entry = node.chain.utxo().get(&op).filter(|_| !node.mempool.is_spent(&op));
        let Some(entry) = entry else {
            return Err(ContractError::DoubleSpentPledge { outpoint: op });
        };
        total = total.saturating_add(entry.output.value);
    }
    if total < campaign.goal {
        return Err(ContractError::InsufficientPledges { shortfall: campaign.goal - total });
    }
    let tx = Transaction {
        inputs: pledges.iter().map(|p| p.input.clone()).collect(),
        outputs: vec![campaign.goal_output()],
        lock_height: None,
    };
    Ok((tx, total - campaign.goal))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{validate_transaction, TxViolation};
    use proptest::prelude::*;

    fn setup(values: &[u64]) -> (Node, Vec<KeyPair>, Campaign) {
        let keys: Vec<KeyPair> = (0..values.len()).map(|i| KeyPair::from_label(&format!("backer{i}"))).collect();
        let genesis =
            values.iter().zip(&keys).map(|(v, k)| TxOutput::new(*v, Predicate::pay_to(&k.public_key()))).collect();
        let campaign = Campaign { entrepreneur: KeyPair::from_label("city").key_digest(), goal: 1000 };
        (Node::new(0, genesis), keys, campaign)
    }

    #[test]
    fn goal_met_excess_is_fee() {
        let (node, keys, c) = setup(&[400, 400, 300]);
        let pledges: Vec<Pledge> =
            keys.iter().zip([400, 400, 300]).map(|(k, v)| make_pledge(&node, k, &c, v, &[]).unwrap()).collect();
        let alone = pledges[0].as_transaction(&c);
        assert_eq!(validate_transaction(&alone, node.chain.utxo(), 1), Err(TxViolation::NegativeFee { excess: 600 }));
        let (tx, fee) = assemble_assurance(&pledges, &c, &node).unwrap();
        assert_eq!(fee, 100);
        assert_eq!(validate_transaction(&tx, node.chain.utxo(), 1), Ok(100));
    }

    #[test]
    fn shortfall_reported() {
        let (node, keys, c) = setup(&[400, 400]);
        let pledges: Vec<Pledge> = keys.iter().map(|k| make_pledge(&node, k, &c, 400, &[]).unwrap()).collect();
        assert_eq!(assemble_assurance(&pledges, &c, &node), Err(ContractError::InsufficientPledges { shortfall: 200 }));
    }

    #[test]
    fn pledge_preconditions() {
        let (node, keys, c) = setup(&[400]);
        assert_eq!(make_pledge(&node, &keys[0], &c, 0, &[]), Err(ContractError::InvalidAmount));
        assert_eq!(make_pledge(&node, &keys[0], &c, 300, &[]), Err(ContractError::NoExactOutput { amount: 300 }));
        let p = make_pledge(&node, &keys[0], &c, 400, &[]).unwrap();
        assert_eq!(
            make_pledge(&node, &keys[0], &c, 400, &[p.outpoint()]),
            Err(ContractError::NoExactOutput { amount: 400 })
        );
    }

    #[test]
    fn inflated_claim_is_ignored() {
        let (node, keys, c) = setup(&[400, 400]);
        let mut pledges: Vec<Pledge> = keys.iter().map(|k| make_pledge(&node, k, &c, 400, &[]).unwrap()).collect();
        pledges[0].amount = 10_000;
        assert_eq!(assemble_assurance(&pledges, &c, &node), Err(ContractError::InsufficientPledges { shortfall: 200 }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]
        #[test]
        fn assembles_iff_goal_met(values in proptest::collection::vec(1u64..1000, 1..8), goal in 1u64..5000) {
            let (node, keys, mut c) = setup(&values);
            c.goal = goal;
            let pledges: Vec<Pledge> =
                keys.iter().zip(&values).map(|(k, v)| make_pledge(&node, k, &c, *v, &[]).unwrap()).collect();
            let sum: u64 = values.iter().sum();
            match assemble_assurance(&pledges, &c, &node) {
                Ok((tx, fee)) => {
                    prop_assert!(sum >= goal);
                    prop_assert_eq!(fee, sum - goal);
                    prop_assert_eq!(validate_transaction(&tx, node.chain.utxo(), 1), Ok(fee));
                    prop_assert_eq!(tx.total_output(), Some(goal));
                }
                Err(e) => {
                    prop_assert!(sum < goal);
                    prop_assert_eq!(e, ContractError::InsufficientPledges { shortfall: goal - sum });
                }
            }
        }
    }
}
