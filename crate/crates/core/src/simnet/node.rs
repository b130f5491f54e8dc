use thiserror::Error;

use crate::crypto::{Hash, KeyDigest};
use crate::ledger::{Block, BlockError, Chain, Mempool, OutPoint, TxOutput};
use crate::registry::NameIndex;

use super::NodeId;

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("transaction {0} is neither confirmed nor pending")]
pub struct NotFound(pub Hash);

/// One full node: chain, mempool and the registry index derived from the chain.
#[derive(Clone, Debug)]
pub struct Node {
    pub id: NodeId,
    pub chain: Chain,
    pub mempool: Mempool,
    pub registry: NameIndex,
    /// Transactions and blocks this node refused, with the reason.
    pub rejected: Vec<(Hash, String)>,
}

impl Node {
    pub fn new(id: NodeId, genesis: Vec<TxOutput>) -> Node {
        let chain = Chain::with_genesis(genesis);
        let registry = NameIndex::rebuild(chain.blocks());
        Node { id, chain, mempool: Mempool::new(), registry, rejected: Vec::new() }
    }

    pub fn apply_block(&mut self, block: Block) -> Result<(), BlockError> {
        self.chain.apply_block(block)?;
        self.mempool.reconcile(&self.chain);
        self.registry.apply_block(self.chain.tip());
        Ok(())
    }

    /// 0 while pending, k when buried under k-1 later blocks.
    pub fn confirmations(&self, txid: &Hash) -> Result<u64, NotFound> {
        if let Some(c) = self.chain.confirmations(txid) {
            return Ok(c);
        }
        if self.mempool.contains(txid) {
            return Ok(0);
        }
        Err(NotFound(*txid))
    }

    pub fn spendable(&self, owner: &KeyDigest) -> Vec<(OutPoint, TxOutput)> {
        self.mempool.spendable(&self.chain, owner)
    }

    pub fn confirmed_balance(&self, owner: &KeyDigest) -> u64 {
        self.chain.utxo().balance(owner)
    }

    /// Whether `outpoint` is unspent on chain and not spent by a pending transaction.
    pub fn is_unspent(&self, outpoint: &OutPoint) -> bool {
        self.chain.utxo().contains(outpoint) && !self.mempool.is_spent(outpoint)
    }
}
