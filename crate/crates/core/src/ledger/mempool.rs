use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use thiserror::Error;

use crate::crypto::{Hash, KeyDigest};

use super::chain::Chain;
use super::tx::{OutPoint, Transaction, TxOutput};
use super::utxo::UtxoView;
use super::validate::validate_transaction;
use super::TxViolation;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MempoolError {
    #[error(transparent)]
    Invalid(#[from] TxViolation),
    #[error("input {outpoint:?} already spent by pool transaction {existing}")]
    Conflict { outpoint: OutPoint, existing: Hash },
    #[error("transaction already known")]
    Duplicate,
}

impl MempoolError {
    pub fn name(&self) -> &'static str {
        match self {
            MempoolError::Invalid(v) => v.name(),
            MempoolError::Conflict { .. } => "Conflict",
            MempoolError::Duplicate => "Duplicate",
        }
    }
}

#[derive(Clone, Debug)]
pub struct PoolEntry {
    pub tx: Transaction,
    pub txid: Hash,
    pub fee: u64,
    pub size: usize,
    /// Arrival order; first seen wins conflicts.
    pub seq: u64,
}

/// Compares `fee_a / size_a` with `fee_b / size_b` exactly.
pub fn fee_rate_cmp(fee_a: u64, size_a: usize, fee_b: u64, size_b: usize) -> Ordering {
    (fee_a as u128 * size_b as u128).cmp(&(fee_b as u128 * size_a as u128))
}

/// Validated, unconfirmed transactions. Spending outputs of other pool
/// transactions is allowed.
#[derive(Clone, Debug, Default)]
pub struct Mempool {
    entries: BTreeMap<Hash, PoolEntry>,
    spent: HashMap<OutPoint, Hash>,
    next_seq: u64,
}

struct PoolView<'a> {
    chain: &'a Chain,
    pool: &'a Mempool,
}

impl UtxoView for PoolView<'_> {
    fn output(&self, op: &OutPoint) -> Option<&TxOutput> {
        self.chain
            .utxo()
            .output(op)
            .or_else(|| self.pool.entries.get(&op.txid).and_then(|e| e.tx.outputs.get(op.index as usize)))
    }
}

#[derive(PartialEq, Eq)]
struct Ready<'a> {
    fee: u64,
    size: usize,
    txid: Hash,
    entry: &'a PoolEntry,
}

impl Ord for Ready<'_> {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap: higher fee rate first, then lower txid
        fee_rate_cmp(self.fee, self.size, other.fee, other.size).then_with(|| other.txid.cmp(&self.txid))
    }
}

impl PartialOrd for Ready<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl PartialEq for PoolEntry {
    fn eq(&self, other: &Self) -> bool {
        self.txid == other.txid
    }
}
impl Eq for PoolEntry {}

impl Mempool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, txid: &Hash) -> bool {
        self.entries.contains_key(txid)
    }

    pub fn get(&self, txid: &Hash) -> Option<&PoolEntry> {
        self.entries.get(txid)
    }

    pub fn entries(&self) -> impl Iterator<Item = &PoolEntry> {
        self.entries.values()
    }

    pub fn is_spent(&self, outpoint: &OutPoint) -> bool {
        self.spent.contains_key(outpoint)
    }

    /// Validates `tx` at the next height and admits it unless it conflicts
    /// with a transaction seen earlier.
    pub fn insert(&mut self, tx: Transaction, chain: &Chain) -> Result<Hash, MempoolError> {
        let seq = self.next_seq;
        let txid = self.admit(tx, chain, seq)?;
        self.next_seq += 1;
        Ok(txid)
    }

    fn admit(&mut self, tx: Transaction, chain: &Chain, seq: u64) -> Result<Hash, MempoolError> {
        let txid = tx.txid();
        if self.entries.contains_key(&txid) || chain.locate(&txid).is_some() {
            return Err(MempoolError::Duplicate);
        }
        for input in &tx.inputs {
            if let Some(existing) = self.spent.get(&input.prev) {
                return Err(MempoolError::Conflict { outpoint: input.prev, existing: *existing });
            }
        }
        let fee = validate_transaction(&tx, &PoolView { chain, pool: self }, chain.height() + 1)?;
        for input in &tx.inputs {
            self.spent.insert(input.prev, txid);
        }
        let size = tx.serialized_size();
        self.entries.insert(txid, PoolEntry { tx, txid, fee, size, seq });
        Ok(txid)
    }

    /// Greedy block template: repeatedly takes the highest fee-rate
    /// transaction whose in-pool parents are already taken, skipping any
    /// that no longer fit in `max_block_size` bytes. Ties go to the lower txid.
    pub fn select_for_block(&self, max_block_size: usize) -> Vec<Transaction> {
        let mut waiting: HashMap<Hash, usize> = HashMap::new();
        let mut children: HashMap<Hash, Vec<Hash>> = HashMap::new();
        let mut heap = BinaryHeap::new();
        for e in self.entries.values() {
            let mut parents: Vec<Hash> =
                e.tx.inputs.iter().map(|i| i.prev.txid).filter(|p| self.entries.contains_key(p)).collect();
            parents.sort();
            parents.dedup();
            for p in &parents {
                children.entry(*p).or_default().push(e.txid);
            }
            if parents.is_empty() {
                heap.push(Ready { fee: e.fee, size: e.size, txid: e.txid, entry: e });
            } else {
                waiting.insert(e.txid, parents.len());
            }
        }
        let mut used = 0usize;
        let mut out = Vec::new();
        while let Some(r) = heap.pop() {
            if used + r.size > max_block_size {
                continue;
            }
            used += r.size;
            out.push(r.entry.tx.clone());
            for c in children.get(&r.txid).into_iter().flatten() {
                let n = waiting.get_mut(c).unwrap();
                *n -= 1;
                if *n == 0 {
                    let e = &self.entries[c];
                    heap.push(Ready { fee: e.fee, size: e.size, txid: e.txid, entry: e });
                }
            }
        }
        out
    }

    /// Drops confirmed transactions and re-admits the rest, in arrival
    /// order, against the new chain state.
    pub fn reconcile(&mut self, chain: &Chain) {
        let mut old: Vec<PoolEntry> = std::mem::take(&mut self.entries).into_values().collect();
        old.sort_by_key(|e| e.seq);
        self.spent.clear();
        for e in old {
            if chain.locate(&e.txid).is_some() {
                continue;
            }
            let _ = self.admit(e.tx, chain, e.seq);
        }
    }

    /// Unspent outputs paying `owner`, including unconfirmed ones from the
    /// pool, minus anything a pool transaction already spends.
    pub fn spendable(&self, chain: &Chain, owner: &KeyDigest) -> Vec<(OutPoint, TxOutput)> {
        let mut out: Vec<(OutPoint, TxOutput)> = chain
            .utxo()
            .owned_by(owner)
            .filter(|(op, _)| !self.spent.contains_key(op))
            .map(|(op, e)| (*op, e.output.clone()))
            .collect();
        for e in self.entries.values() {
            for (i, o) in e.tx.outputs.iter().enumerate() {
                let op = OutPoint::new(e.txid, i as u32);
                if o.predicate.owner() == Some(*owner) && !self.spent.contains_key(&op) {
                    out.push((op, o.clone()));
                }
            }
        }
        out.sort_by_key(|(op, _)| *op);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::ledger::{Predicate, TxInput};

    fn setup(values: &[u64]) -> (Chain, KeyPair) {
        let a = KeyPair::from_label("a");
        let chain =
            Chain::with_genesis(values.iter().map(|v| TxOutput::new(*v, Predicate::pay_to(&a.public_key()))).collect());
        (chain, a)
    }

    fn spend(from: OutPoint, value: u64, key: &KeyPair) -> Transaction {
        let mut tx = Transaction {
            inputs: vec![TxInput::spending(from)],
            outputs: vec![TxOutput::new(value, Predicate::pay_to(&key.public_key()))],
            lock_height: None,
        };
        tx.add_signature(0, key);
        tx
    }

    #[test]
    fn accepts_and_detects_conflict() {
        let (chain, a) = setup(&[1000]);
        let mut pool = Mempool::new();
        let op = OutPoint::new(chain.genesis_txid(), 0);
        let t1 = spend(op, 990, &a);
        let id = pool.insert(t1.clone(), &chain).unwrap();
        assert_eq!(pool.insert(t1, &chain), Err(MempoolError::Duplicate));
        let t2 = spend(op, 900, &a);
        assert_eq!(pool.insert(t2, &chain), Err(MempoolError::Conflict { outpoint: op, existing: id }));
    }

    #[test]
    fn zero_fee_accepted_lowest_priority() {
        let (chain, a) = setup(&[1000, 1000]);
        let mut pool = Mempool::new();
        let free = spend(OutPoint::new(chain.genesis_txid(), 0), 1000, &a);
        let paid = spend(OutPoint::new(chain.genesis_txid(), 1), 900, &a);
        pool.insert(free.clone(), &chain).unwrap();
        pool.insert(paid.clone(), &chain).unwrap();
        let sel = pool.select_for_block(1 << 20);
        assert_eq!(sel, vec![paid, free]);
    }

    #[test]
    fn empty_pool_selects_nothing() {
        assert!(Mempool::new().select_for_block(1000).is_empty());
    }

    #[test]
    fn child_spending_unconfirmed_parent() {
        let (chain, a) = setup(&[1000]);
        let mut pool = Mempool::new();
        let parent = spend(OutPoint::new(chain.genesis_txid(), 0), 999, &a);
        let child = spend(OutPoint::new(parent.txid(), 0), 900, &a);
        pool.insert(parent.clone(), &chain).unwrap();
        pool.insert(child.clone(), &chain).unwrap();
        let size = parent.serialized_size();
        assert_eq!(pool.select_for_block(size), vec![parent.clone()]);
        assert_eq!(pool.select_for_block(size * 2), vec![parent, child]);
    }

    #[test]
    fn spendable_tracks_pool() {
        let (chain, a) = setup(&[1000, 5]);
        let mut pool = Mempool::new();
        let t = spend(OutPoint::new(chain.genesis_txid(), 0), 990, &a);
        pool.insert(t.clone(), &chain).unwrap();
        let sp = pool.spendable(&chain, &a.key_digest());
        let ops: Vec<_> = sp.iter().map(|(op, _)| *op).collect();
        assert!(ops.contains(&OutPoint::new(t.txid(), 0)));
        assert!(ops.contains(&OutPoint::new(chain.genesis_txid(), 1)));
        assert!(!ops.contains(&OutPoint::new(chain.genesis_txid(), 0)));
    }
}
