//! Chain and registry dumps as structured text.
//!
//! The chain dump is JSON lines, one block per line. Each line carries the
//! block's hex encoding, so a dump re-parses into identical blocks.

use serde::{Deserialize, Serialize};

use crate::crypto::Hash;
use crate::ledger::Block;
use crate::registry::NameIndex;

use super::report::RegistryRow;
use super::ScenarioError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainDumpLine {
    pub height: u64,
    pub hash: Hash,
    pub prev_block_hash: Hash,
    pub timestamp_us: u64,
    pub fee_reward: u64,
    pub txids: Vec<Hash>,
    pub hex: String,
}

pub fn dump_chain(blocks: &[Block]) -> String {
    let mut out = String::new();
    for b in blocks {
        let line = ChainDumpLine {
            height: b.height,
            hash: b.hash(),
            prev_block_hash: b.prev_block_hash,
            timestamp_us: b.timestamp_us,
            fee_reward: b.fee_reward,
            txids: b.transactions.iter().map(|t| t.txid()).collect(),
            hex: hex::encode(b.to_bytes()),
        };
        out.push_str(&serde_json::to_string(&line).expect("dump line serializes"));
        out.push('\n');
    }
    out
}

/// Parses a chain dump, checking every line's hash and link to its parent.
pub fn parse_chain_dump(text: &str) -> Result<Vec<Block>, ScenarioError> {
    let mut blocks: Vec<Block> = Vec::new();
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let bad = |m: String| ScenarioError::Parse { line: i + 1, column: 1, message: m };
        let entry: ChainDumpLine = serde_json::from_str(line).map_err(|e| ScenarioError::Parse {
            line: i + 1,
            column: e.column(),
            message: e.to_string(),
        })?;
        let bytes = hex::decode(&entry.hex).map_err(|e| bad(e.to_string()))?;
        let block = Block::from_bytes(&bytes).map_err(|e| bad(e.to_string()))?;
        if block.hash() != entry.hash {
            return Err(bad(format!("block hash {} does not match encoding", entry.hash)));
        }
        if let Some(prev) = blocks.last() {
            if block.prev_block_hash != prev.hash() || block.height != prev.height + 1 {
                return Err(bad(format!("block {} does not extend block {}", block.height, prev.height)));
            }
        }
        blocks.push(block);
    }
    Ok(blocks)
}

/// Reads a chain dump written by `run`; `NoSnapshot` if there is none.
pub fn load_chain_dump(path: &str) -> Result<Vec<Block>, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|_| ScenarioError::NoSnapshot(path.to_string()))?;
    let blocks = parse_chain_dump(&text)?;
    if blocks.is_empty() {
        return Err(ScenarioError::NoSnapshot(path.to_string()));
    }
    Ok(blocks)
}

/// The registry index rebuilt from `blocks`, sorted by name. Owners and
/// payees are key digests.
pub fn dump_registry(blocks: &[Block]) -> String {
    let index = NameIndex::rebuild(blocks);
    let rows: Vec<RegistryRow> = index
        .entries()
        .map(|e| RegistryRow {
            name: e.record.name.clone(),
            owner: hex::encode(e.record.owner_key_digest.0),
            pays_to: hex::encode(e.record.payment_address.key_digest.0),
            data_type: e.record.data_type.clone(),
            price: e.record.price_per_datum,
            endpoint: e.record.endpoint.clone(),
            registration_txid: e.registration_txid,
            last_update_height: e.last_update_height,
        })
        .collect();
    serde_json::to_string_pretty(&rows).expect("registry serializes")
}
