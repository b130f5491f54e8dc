use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{Hash, KeyDigest};

use super::tx::{Block, OutPoint, Transaction, TxOutput};
use super::utxo::{UtxoEntry, UtxoSet, UtxoView};
use super::validate::validate_transaction;
use super::{Predicate, TxViolation};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BlockError {
    #[error("block does not extend the tip")]
    BadParent,
    #[error("block height {got}, expected {expected}")]
    BadHeight { expected: u64, got: u64 },
    #[error("block timestamp does not advance")]
    StaleTimestamp,
    #[error("transaction {index} invalid: {violation}")]
    InvalidTxInBlock { index: usize, violation: TxViolation },
    #[error("fee reward {claimed} does not match fees {actual}")]
    BadFeeReward { claimed: u64, actual: u64 },
    #[error("nothing to revert")]
    AtGenesis,
}

#[derive(Clone, Debug)]
struct BlockUndo {
    spent: Vec<(OutPoint, UtxoEntry)>,
    created: Vec<OutPoint>,
}

/// Blocks from genesis to tip together with the UTXO set they produce.
#[derive(Clone, Debug)]
pub struct Chain {
    blocks: Vec<Block>,
    hashes: Vec<Hash>,
    utxo: UtxoSet,
    undo: Vec<BlockUndo>,
    tx_index: HashMap<Hash, (u64, usize)>,
}

/// Overlay of a UTXO set with outputs created and spent earlier in the same block.
struct BlockView<'a> {
    base: &'a UtxoSet,
    created: HashMap<OutPoint, TxOutput>,
    spent: HashSet<OutPoint>,
}

impl UtxoView for BlockView<'_> {
    fn output(&self, op: &OutPoint) -> Option<&TxOutput> {
        if self.spent.contains(op) {
            return None;
        }
        self.created.get(op).or_else(|| self.base.output(op))
    }
}

impl Chain {
    /// Chain whose genesis block holds one input-less transaction creating `outputs`.
    pub fn with_genesis(outputs: Vec<TxOutput>) -> Chain {
        let genesis_tx = Transaction { inputs: vec![], outputs, lock_height: None };
        let genesis = Block {
            height: 0,
            prev_block_hash: Hash::ZERO,
            timestamp_us: 0,
            producer: KeyDigest([0; 20]),
            fee_reward: 0,
            transactions: vec![genesis_tx],
        };
        let mut utxo = UtxoSet::new();
        let mut tx_index = HashMap::new();
        let mut created = Vec::new();
        for tx in &genesis.transactions {
            let txid = tx.txid();
            tx_index.insert(txid, (0, 0));
            for (i, o) in tx.outputs.iter().enumerate() {
                let op = OutPoint::new(txid, i as u32);
                utxo.insert(op, UtxoEntry { output: o.clone(), height: 0 });
                created.push(op);
            }
        }
        let hash = genesis.hash();
        Chain {
            blocks: vec![genesis],
            hashes: vec![hash],
            utxo,
            undo: vec![BlockUndo { spent: vec![], created }],
            tx_index,
        }
    }

    pub fn genesis_txid(&self) -> Hash {
        self.blocks[0].transactions[0].txid()
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip_hash(&self) -> Hash {
        *self.hashes.last().unwrap()
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().unwrap()
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn utxo(&self) -> &UtxoSet {
        &self.utxo
    }

    /// Height and position of a confirmed transaction.
    pub fn locate(&self, txid: &Hash) -> Option<(u64, usize)> {
        self.tx_index.get(txid).copied()
    }

    pub fn transaction(&self, txid: &Hash) -> Option<&Transaction> {
        let (h, i) = self.locate(txid)?;
        Some(&self.blocks[h as usize].transactions[i])
    }

    /// Validates every transaction of `block` in order, each against the
    /// state left by those before it. Returns the total fee.
    pub fn check_block(&self, block: &Block) -> Result<u64, BlockError> {
        if block.prev_block_hash != self.tip_hash() {
            return Err(BlockError::BadParent);
        }
        if block.height != self.height() + 1 {
            return Err(BlockError::BadHeight { expected: self.height() + 1, got: block.height });
        }
        if block.timestamp_us <= self.tip().timestamp_us {
            return Err(BlockError::StaleTimestamp);
        }
        let mut view = BlockView { base: &self.utxo, created: HashMap::new(), spent: HashSet::new() };
        let mut fees: u64 = 0;
        for (index, tx) in block.transactions.iter().enumerate() {
            let fee = validate_transaction(tx, &view, block.height)
                .map_err(|violation| BlockError::InvalidTxInBlock { index, violation })?;
            let txid = tx.txid();
            if self.tx_index.contains_key(&txid) {
                return Err(BlockError::InvalidTxInBlock {
                    index,
                    violation: TxViolation::malformed("already confirmed"),
                });
            }
            for input in &tx.inputs {
                view.created.remove(&input.prev);
                view.spent.insert(input.prev);
            }
            for (i, o) in tx.outputs.iter().enumerate() {
                view.created.insert(OutPoint::new(txid, i as u32), o.clone());
            }
            fees += fee;
        }
        if fees != block.fee_reward {
            return Err(BlockError::BadFeeReward { claimed: block.fee_reward, actual: fees });
        }
        Ok(fees)
    }

    /// Validates and applies `block`; on error the chain is unchanged.
    pub fn apply_block(&mut self, block: Block) -> Result<(), BlockError> {
        self.check_block(&block)?;
        let height = block.height;
        let mut undo = BlockUndo { spent: Vec::new(), created: Vec::new() };
        for (pos, tx) in block.transactions.iter().enumerate() {
            let txid = tx.txid();
            for input in &tx.inputs {
                let entry = self.utxo.remove(&input.prev).expect("checked above");
                undo.spent.push((input.prev, entry));
            }
            for (i, o) in tx.outputs.iter().enumerate() {
                let op = OutPoint::new(txid, i as u32);
                self.utxo.insert(op, UtxoEntry { output: o.clone(), height });
                undo.created.push(op);
            }
            self.tx_index.insert(txid, (height, pos));
        }
        if block.fee_reward > 0 {
            let op = block.reward_outpoint();
            let reward = TxOutput::new(block.fee_reward, Predicate::PayToKeyHash(block.producer));
            self.utxo.insert(op, UtxoEntry { output: reward, height });
            undo.created.push(op);
        }
        self.hashes.push(block.hash());
        self.blocks.push(block);
        self.undo.push(undo);
        Ok(())
    }

    /// Removes the tip block, restoring the previous UTXO set exactly.
    pub fn revert_block(&mut self) -> Result<Block, BlockError> {
        if self.blocks.len() == 1 {
            return Err(BlockError::AtGenesis);
        }
        let block = self.blocks.pop().unwrap();
        self.hashes.pop();
        let undo = self.undo.pop().unwrap();
        for op in undo.created.iter().rev() {
            self.utxo.remove(op);
        }
        for (op, entry) in undo.spent.into_iter().rev() {
            self.utxo.insert(op, entry);
        }
        for tx in &block.transactions {
            self.tx_index.remove(&tx.txid());
        }
        Ok(block)
    }

    /// Burial depth of a confirmed transaction: 1 in the tip block.
    pub fn confirmations(&self, txid: &Hash) -> Option<u64> {
        self.locate(txid).map(|(h, _)| self.height() - h + 1)
    }

    /// Finds the confirmed transaction spending `outpoint`, if any.
    pub fn spender_of(&self, outpoint: &OutPoint) -> Option<(u64, &Transaction)> {
        self.blocks.iter().find_map(|b| {
            b.transactions.iter().find(|tx| tx.inputs.iter().any(|i| i.prev == *outpoint)).map(|tx| (b.height, tx))
        })
    }
}

/// Result of a full scan of a block list, independent of any UTXO set.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ChainAudit {
    pub blocks: u64,
    pub transactions: u64,
    pub double_spends: Vec<OutPoint>,
    pub missing_inputs: Vec<OutPoint>,
    pub conservation_violations: Vec<u64>,
    pub non_increasing_timestamps: Vec<u64>,
}

impl ChainAudit {
    pub fn is_clean(&self) -> bool {
        self.double_spends.is_empty()
            && self.missing_inputs.is_empty()
            && self.conservation_violations.is_empty()
            && self.non_increasing_timestamps.is_empty()
    }
}

/// Replays `blocks` tracking every created and spent outpoint, checking that
/// nothing is spent twice and that each block satisfies
/// `Σ inputs = Σ outputs + fee_reward`.
pub fn audit_chain(blocks: &[Block]) -> ChainAudit {
    let mut values: HashMap<OutPoint, u64> = HashMap::new();
    let mut spent: HashSet<OutPoint> = HashSet::new();
    let mut audit = ChainAudit::default();
    let mut last_ts: Option<u64> = None;
    for block in blocks {
        audit.blocks += 1;
        if last_ts.is_some_and(|t| block.timestamp_us <= t) {
            audit.non_increasing_timestamps.push(block.height);
        }
        last_ts = Some(block.timestamp_us);
        let mut sum_in: u128 = 0;
        let mut sum_out: u128 = 0;
        for tx in &block.transactions {
            audit.transactions += 1;
            for input in &tx.inputs {
                if !spent.insert(input.prev) {
                    audit.double_spends.push(input.prev);
                }
                match values.get(&input.prev) {
                    Some(v) => sum_in += *v as u128,
                    None => audit.missing_inputs.push(input.prev),
                }
            }
            let txid = tx.txid();
            for (i, o) in tx.outputs.iter().enumerate() {
                values.insert(OutPoint::new(txid, i as u32), o.value);
                sum_out += o.value as u128;
            }
        }
        if block.height > 0 && sum_in != sum_out + block.fee_reward as u128 {
            audit.conservation_violations.push(block.height);
        }
        if block.fee_reward > 0 {
            values.insert(block.reward_outpoint(), block.fee_reward);
        }
    }
    audit
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::KeyPair;
    use crate::ledger::TxInput;

    fn setup() -> (Chain, KeyPair, KeyPair) {
        let a = KeyPair::from_label("alice");
        let b = KeyPair::from_label("bob");
        let chain = Chain::with_genesis(vec![
            TxOutput::new(1000, Predicate::pay_to(&a.public_key())),
            TxOutput::new(500, Predicate::pay_to(&b.public_key())),
        ]);
        (chain, a, b)
    }

    fn pay(chain: &Chain, from: &KeyPair, index: u32, value: u64, to: &KeyPair) -> Transaction {
        let mut tx = Transaction {
            inputs: vec![TxInput::spending(OutPoint::new(chain.genesis_txid(), index))],
            outputs: vec![TxOutput::new(value, Predicate::pay_to(&to.public_key()))],
            lock_height: None,
        };
        tx.add_signature(0, from);
        tx
    }

    fn block_on(chain: &Chain, txs: Vec<Transaction>, fee: u64) -> Block {
        Block {
            height: chain.height() + 1,
            prev_block_hash: chain.tip_hash(),
            timestamp_us: chain.tip().timestamp_us + 1_000_000,
            producer: KeyPair::from_label("miner").key_digest(),
            fee_reward: fee,
            transactions: txs,
        }
    }

    #[test]
    fn apply_then_revert_restores_utxo_bytes() {
        let (mut chain, a, b) = setup();
        let before = chain.utxo().to_bytes();
        let tx = pay(&chain, &a, 0, 990, &b);
        let block = block_on(&chain, vec![tx.clone()], 10);
        chain.apply_block(block).unwrap();
        assert_eq!(chain.height(), 1);
        assert_eq!(chain.confirmations(&tx.txid()), Some(1));
        assert_eq!(chain.utxo().balance(&KeyPair::from_label("miner").key_digest()), 10);
        chain.revert_block().unwrap();
        assert_eq!(chain.utxo().to_bytes(), before);
        assert_eq!(chain.confirmations(&tx.txid()), None);
        assert_eq!(chain.revert_block().unwrap_err(), BlockError::AtGenesis);
    }

    #[test]
    fn empty_block_only_advances_tip() {
        let (mut chain, _, _) = setup();
        let before = chain.utxo().to_bytes();
        let block = block_on(&chain, vec![], 0);
        let hash = block.hash();
        chain.apply_block(block).unwrap();
        assert_eq!(chain.tip_hash(), hash);
        assert_eq!(chain.utxo().to_bytes(), before);
    }

    #[test]
    fn conflicting_pair_rejected() {
        let (mut chain, a, b) = setup();
        let t1 = pay(&chain, &a, 0, 990, &b);
        let t2 = pay(&chain, &a, 0, 980, &a);
        let block = block_on(&chain, vec![t1, t2], 30);
        let before = chain.utxo().to_bytes();
        assert!(matches!(
            chain.apply_block(block),
            Err(BlockError::InvalidTxInBlock { index: 1, violation: TxViolation::MissingUtxo { .. } })
        ));
        assert_eq!(chain.utxo().to_bytes(), before);
        assert_eq!(chain.height(), 0);
    }

    #[test]
    fn bad_parent_and_fee() {
        let (mut chain, a, b) = setup();
        let mut block = block_on(&chain, vec![], 0);
        block.prev_block_hash = Hash([9; 32]);
        assert_eq!(chain.apply_block(block).unwrap_err(), BlockError::BadParent);
        let tx = pay(&chain, &a, 0, 990, &b);
        let block = block_on(&chain, vec![tx], 11);
        assert_eq!(chain.apply_block(block).unwrap_err(), BlockError::BadFeeReward { claimed: 11, actual: 10 });
    }

    #[test]
    fn in_block_chaining_and_audit() {
        let (mut chain, a, b) = setup();
        let parent = pay(&chain, &a, 0, 990, &b);
        let mut child = Transaction {
            inputs: vec![TxInput::spending(OutPoint::new(parent.txid(), 0))],
            outputs: vec![TxOutput::new(900, Predicate::pay_to(&a.public_key()))],
            lock_height: None,
        };
        child.add_signature(0, &b);
        chain.apply_block(block_on(&chain, vec![parent, child], 100)).unwrap();
        let audit = audit_chain(chain.blocks());
        assert!(audit.is_clean(), "{audit:?}");
        assert_eq!(audit.transactions, 3);
    }

    #[test]
    fn audit_flags_double_spend() {
        let (chain, a, b) = setup();
        let t1 = pay(&chain, &a, 0, 990, &b);
        let t2 = pay(&chain, &a, 0, 980, &a);
        let mut blocks = chain.blocks().to_vec();
        let b1 = block_on(&chain, vec![t1], 10);
        let mut b2 = b1.clone();
        b2.height = 2;
        b2.transactions = vec![t2];
        b2.fee_reward = 20;
        blocks.push(b1);
        blocks.push(b2);
        let audit = audit_chain(&blocks);
        assert_eq!(audit.double_spends.len(), 1);
    }
}
