//! Fixtures shared by the benchmarks.

use s2aas_core::crypto::KeyPair;
use s2aas_core::ledger::{Chain, Mempool, OutPoint, Predicate, Transaction, TxInput, TxOutput};

/// A chain with `n` confirmed coins and a pool holding one spend of each,
/// fees rising with the index.
pub fn funded_pool(n: u32) -> (Chain, Mempool, Vec<Transaction>) {
    let owner = KeyPair::from_label("bench");
    let pk = owner.public_key();
    let chain = Chain::with_genesis((0..n).map(|_| TxOutput::new(1_000_000, Predicate::pay_to(&pk))).collect());
    let txs: Vec<Transaction> = (0..n)
        .map(|i| {
            let mut tx = Transaction {
                inputs: vec![TxInput::spending(OutPoint::new(chain.genesis_txid(), i))],
                outputs: vec![TxOutput::new(1_000_000 - 10 * i as u64, Predicate::pay_to(&pk))],
                lock_height: None,
            };
            tx.add_signature(0, &owner);
            tx
        })
        .collect();
    let mut pool = Mempool::new();
    for tx in &txs {
        pool.insert(tx.clone(), &chain).expect("valid spend");
    }
    (chain, pool, txs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pool_holds_every_spend() {
        let (_, pool, txs) = funded_pool(8);
        assert_eq!(pool.len(), txs.len());
    }
}
