use std::collections::{BTreeMap, BTreeSet};

use crate::crypto::KeyDigest;

use super::tx::{OutPoint, TxOutput, Writer};

/// Read access to spendable outputs.
pub trait UtxoView {
    fn output(&self, outpoint: &OutPoint) -> Option<&TxOutput>;
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UtxoEntry {
    pub output: TxOutput,
    pub height: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct UtxoSet {
    entries: BTreeMap<OutPoint, UtxoEntry>,
    by_owner: BTreeMap<KeyDigest, BTreeSet<OutPoint>>,
}

impl UtxoSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, outpoint: &OutPoint) -> Option<&UtxoEntry> {
        self.entries.get(outpoint)
    }

    pub fn contains(&self, outpoint: &OutPoint) -> bool {
        self.entries.contains_key(outpoint)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&OutPoint, &UtxoEntry)> {
        self.entries.iter()
    }

    pub(crate) fn insert(&mut self, outpoint: OutPoint, entry: UtxoEntry) {
        if let Some(owner) = entry.output.predicate.owner() {
            self.by_owner.entry(owner).or_default().insert(outpoint);
        }
        let prev = self.entries.insert(outpoint, entry);
        debug_assert!(prev.is_none(), "outpoint created twice");
    }

    pub(crate) fn remove(&mut self, outpoint: &OutPoint) -> Option<UtxoEntry> {
        let entry = self.entries.remove(outpoint)?;
        if let Some(owner) = entry.output.predicate.owner() {
            if let Some(set) = self.by_owner.get_mut(&owner) {
                set.remove(outpoint);
                if set.is_empty() {
                    self.by_owner.remove(&owner);
                }
            }
        }
        Some(entry)
    }

    /// Pay-to-key-hash outputs locked to `owner`, in outpoint order.
    pub fn owned_by(&self, owner: &KeyDigest) -> impl Iterator<Item = (&OutPoint, &UtxoEntry)> {
        self.by_owner.get(owner).into_iter().flat_map(|set| set.iter()).map(move |op| (op, &self.entries[op]))
    }

    pub fn balance(&self, owner: &KeyDigest) -> u64 {
        self.owned_by(owner).map(|(_, e)| e.output.value).sum()
    }

    /// Canonical byte form, used to compare states exactly.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u32(self.entries.len() as u32);
        for (op, e) in &self.entries {
            w.raw(&op.txid.0);
            w.u32(op.index);
            w.u64(e.height);
            let tx = super::Transaction { inputs: vec![], outputs: vec![e.output.clone()], lock_height: None };
            w.bytes(&tx.to_bytes());
        }
        w.finish()
    }
}

impl UtxoView for UtxoSet {
    fn output(&self, outpoint: &OutPoint) -> Option<&TxOutput> {
        self.entries.get(outpoint).map(|e| &e.output)
    }
}
