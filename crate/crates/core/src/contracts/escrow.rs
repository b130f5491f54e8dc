//! 2-of-3 escrow between buyer, seller and a mediator.

use std::ops::RangeInclusive;

use serde::Serialize;

use crate::crypto::{Hash, KeyPair, PublicKey};
use crate::ledger::{validate_transaction, OutPoint, Predicate, Transaction, TxInput, TxOutput};
use crate::simnet::{Network, NodeId};
use crate::wallet::{build_payment, FeePolicy};

use super::oracle::reading_value;
use super::ContractError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum EscrowStatus {
    Funded,
    Released { txid: Hash },
    Refunded { txid: Hash },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EscrowAgreement {
    pub buyer: PublicKey,
    pub seller: PublicKey,
    pub mediator: PublicKey,
    pub amount: u64,
    pub outpoint: OutPoint,
    pub status: EscrowStatus,
}

impl EscrowAgreement {
    pub fn predicate(&self) -> Predicate {
        Predicate::multisig(2, vec![self.buyer, self.seller, self.mediator])
    }
}

/// Buyer locks `amount` in a 2-of-3 output.
pub fn fund_escrow(
    net: &mut Network,
    node: NodeId,
    buyer: &KeyPair,
    seller: &PublicKey,
    mediator: &PublicKey,
    amount: u64,
    fee: FeePolicy,
) -> Result<EscrowAgreement, ContractError> {
    if amount == 0 {
        return Err(ContractError::InvalidAmount);
    }
    let mut agreement = EscrowAgreement {
        buyer: buyer.public_key(),
        seller: *seller,
        mediator: *mediator,
        amount,
        outpoint: OutPoint::new(Hash::ZERO, 0),
        status: EscrowStatus::Funded,
    };
    let (tx, _) = build_payment(net.node(node), buyer, vec![TxOutput::new(amount, agreement.predicate())], fee, &[])?;
    let txid = net.submit(node, tx)?;
    agreement.outpoint = OutPoint::new(txid, 0);
    Ok(agreement)
}

/// Unsigned spend of the escrow output to `destination`, less `fee`.
pub fn release_tx(agreement: &EscrowAgreement, destination: &PublicKey, fee: u64) -> Transaction {
    Transaction {
        inputs: vec![TxInput::spending(agreement.outpoint)],
        outputs: vec![TxOutput::new(agreement.amount.saturating_sub(fee), Predicate::pay_to(destination))],
        lock_height: None,
    }
}

/// Spends the escrow to `destination` with the given signers. The spend is
/// checked against the node's confirmed state before it is broadcast, so a
/// lone or bad signer gets `InsufficientSigners` / `BadSignature` back.
pub fn escrow_release(
    agreement: &mut EscrowAgreement,
    signers: &[&KeyPair],
    destination: &PublicKey,
    net: &mut Network,
    node: NodeId,
    fee: FeePolicy,
) -> Result<Transaction, ContractError> {
    let chain = &net.node(node).chain;
    if chain.confirmations(&agreement.outpoint.txid).is_none() {
        return Err(ContractError::Unconfirmed(agreement.outpoint.txid));
    }
    let sign = |fee_value| {
        let mut tx = release_tx(agreement, destination, fee_value);
        for kp in signers {
            tx.add_signature(0, kp);
        }
        tx
    };
    let tx = sign(fee.fee_for(sign(0).serialized_size()));
    validate_transaction(&tx, chain.utxo(), chain.height() + 1)?;
    let txid = net.submit(node, tx.clone())?;
    agreement.status =
        if *destination == agreement.buyer { EscrowStatus::Refunded { txid } } else { EscrowStatus::Released { txid } };
    Ok(tx)
}

/// The mediator's ruling: the seller is paid when the delivered datum's
/// reading lies in `valid`, the buyer is refunded otherwise.
pub fn mediate(agreement: &EscrowAgreement, datum: &[u8], valid: &RangeInclusive<f64>) -> PublicKey {
    match reading_value(datum) {
        Some(v) if valid.contains(&v) => agreement.seller,
        _ => agreement.buyer,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{Chain, TxViolation};

    fn parties() -> [KeyPair; 3] {
        [KeyPair::from_label("buyer"), KeyPair::from_label("seller"), KeyPair::from_label("mediator")]
    }

    fn funded() -> (Chain, EscrowAgreement) {
        let [b, s, m] = parties();
        let mut a = EscrowAgreement {
            buyer: b.public_key(),
            seller: s.public_key(),
            mediator: m.public_key(),
            amount: 500,
            outpoint: OutPoint::new(Hash::ZERO, 0),
            status: EscrowStatus::Funded,
        };
        let chain = Chain::with_genesis(vec![TxOutput::new(500, a.predicate())]);
        a.outpoint = OutPoint::new(chain.genesis_txid(), 0);
        (chain, a)
    }

    #[test]
    fn every_signer_subset_and_destination() {
        let (chain, a) = funded();
        let keys = parties();
        for dest in [a.buyer, a.seller, a.mediator] {
            for mask in 0u8..8 {
                let mut tx = release_tx(&a, &dest, 10);
                for (i, k) in keys.iter().enumerate() {
                    if mask & (1 << i) != 0 {
                        tx.add_signature(0, k);
                    }
                }
                let ok = validate_transaction(&tx, chain.utxo(), 1).is_ok();
                assert_eq!(ok, mask.count_ones() >= 2, "mask {mask:03b}");
            }
        }
    }

    #[test]
    fn mediator_alone_and_bad_signature() {
        let (chain, a) = funded();
        let [b, s, m] = parties();
        let mut tx = release_tx(&a, &a.mediator, 0);
        tx.add_signature(0, &m);
        assert_eq!(
            validate_transaction(&tx, chain.utxo(), 1),
            Err(TxViolation::InsufficientSigners { required: 2, valid: 1 })
        );
        let mut tx = release_tx(&a, &a.seller, 0);
        tx.add_signature(0, &b);
        let mut forged = tx.sign_input(0, &s);
        forged.signature.0[0] ^= 1;
        tx.inputs[0].witness.signatures.push(forged);
        assert_eq!(validate_transaction(&tx, chain.utxo(), 1), Err(TxViolation::BadSignature));
    }

    #[test]
    fn mediation_follows_datum_validity() {
        let (_, a) = funded();
        let range = 0.0..=50.0;
        assert_eq!(mediate(&a, b"pm25=12.5", &range), a.seller);
        assert_eq!(mediate(&a, b"pm25=-999", &range), a.buyer);
        assert_eq!(mediate(&a, b"garbage", &range), a.buyer);
    }
}
