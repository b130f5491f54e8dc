//! Off-chain replicated blob storage with on-chain hash anchors.
//!
//! Content lives on third-party stores; a transaction carries only an
//! [`Anchor`]: the ids of the stores holding it plus the content digest.
//! Any later alteration by a store is detected on fetch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{digest, Hash, HASH_LEN};
use crate::ledger::{Reader, Writer};

pub type StoreId = u16;

pub const MAX_LOCATORS: usize = 8;
/// Encoded anchor size for `n` locators.
pub const fn anchor_len(n: usize) -> usize {
    1 + 2 * n + HASH_LEN
}

#[derive(Debug, Error, Clone, PartialEq, Eq, Serialize)]
pub enum DatastoreError {
    #[error("replication {requested} exceeds {available} available stores")]
    ReplicationUnsatisfiable { requested: usize, available: usize },
    #[error("no replica returned content matching the anchor")]
    AllReplicasBadOrMissing,
    #[error("unknown store {0}")]
    UnknownStore(StoreId),
    #[error("malformed anchor")]
    MalformedAnchor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Anchor {
    pub blob_id: Hash,
    pub locators: Vec<StoreId>,
}

impl Anchor {
    /// `u8 n ‖ n × u16 store id ‖ blob_id[32]`.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.u8(self.locators.len() as u8);
        for id in &self.locators {
            w.raw(&id.to_le_bytes());
        }
        w.raw(&self.blob_id.0);
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Anchor, DatastoreError> {
        let mut r = Reader::new(bytes);
        let parse = |r: &mut Reader<'_>| -> Result<Anchor, crate::ledger::DecodeError> {
            let n = r.u8()? as usize;
            let mut locators = Vec::with_capacity(n);
            for _ in 0..n {
                locators.push(u16::from_le_bytes(r.array()?));
            }
            Ok(Anchor { locators, blob_id: Hash(r.array()?) })
        };
        let anchor = parse(&mut r).map_err(|_| DatastoreError::MalformedAnchor)?;
        r.finish().map_err(|_| DatastoreError::MalformedAnchor)?;
        if anchor.locators.is_empty() || anchor.locators.len() > MAX_LOCATORS {
            return Err(DatastoreError::MalformedAnchor);
        }
        Ok(anchor)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct StoredBlob {
    pub blob_id: Hash,
    pub content: Vec<u8>,
    pub replicas: Vec<StoreId>,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct Store {
    pub id: StoreId,
    /// Silently corrupts content it serves.
    #[serde(default)]
    pub byzantine: bool,
    #[serde(skip)]
    blobs: BTreeMap<Hash, Vec<u8>>,
}

impl Store {
    pub fn new(id: StoreId, byzantine: bool) -> Store {
        Store { id, byzantine, blobs: BTreeMap::new() }
    }

    fn serve(&self, blob_id: &Hash) -> Option<Vec<u8>> {
        let mut content = self.blobs.get(blob_id)?.clone();
        if self.byzantine {
            // flip one byte chosen by the blob id, or append one if empty
            match content.len() {
                0 => content.push(0xff),
                n => content[blob_id.0[0] as usize % n] ^= 0x5a,
            }
        }
        Some(content)
    }

    pub fn holds(&self, blob_id: &Hash) -> bool {
        self.blobs.contains_key(blob_id)
    }
}

/// Something the fetch path noticed on the way to good content.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "event")]
pub enum TamperEvent {
    Corrupted { store: StoreId, blob_id: Hash },
    Missing { store: StoreId, blob_id: Hash },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Fetched {
    pub content: Vec<u8>,
    pub served_by: StoreId,
    pub events: Vec<TamperEvent>,
}

/// The set of third-party stores known to the simulation.
#[derive(Clone, Debug, Default)]
pub struct Datastores {
    stores: BTreeMap<StoreId, Store>,
    pub tamper_log: Vec<TamperEvent>,
}

impl Datastores {
    pub fn new(stores: impl IntoIterator<Item = Store>) -> Datastores {
        Datastores { stores: stores.into_iter().map(|s| (s.id, s)).collect(), tamper_log: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.stores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.stores.is_empty()
    }

    pub fn ids(&self) -> Vec<StoreId> {
        self.stores.keys().copied().collect()
    }

    pub fn store_ref(&self, id: StoreId) -> Option<&Store> {
        self.stores.get(&id)
    }

    /// Writes `content` to the first `replication` stores of `preference`
    /// (all stores in id order when empty).
    pub fn store(
        &mut self,
        content: &[u8],
        replication: usize,
        preference: &[StoreId],
    ) -> Result<Anchor, DatastoreError> {
        let order: Vec<StoreId> = if preference.is_empty() { self.ids() } else { preference.to_vec() };
        for id in &order {
            if !self.stores.contains_key(id) {
                return Err(DatastoreError::UnknownStore(*id));
            }
        }
        if replication == 0 || replication > order.len() || replication > MAX_LOCATORS {
            return Err(DatastoreError::ReplicationUnsatisfiable { requested: replication, available: order.len() });
        }
        let blob_id = digest(content);
        let locators: Vec<StoreId> = order.into_iter().take(replication).collect();
        for id in &locators {
            self.stores.get_mut(id).unwrap().blobs.insert(blob_id, content.to_vec());
        }
        Ok(Anchor { blob_id, locators })
    }

    /// Tries replicas in locator order, returning the first whose content
    /// digest matches the anchor.
    pub fn fetch(&mut self, anchor: &Anchor) -> Result<Fetched, DatastoreError> {
        let mut events = Vec::new();
        for id in &anchor.locators {
            let served = self.stores.get(id).and_then(|s| s.serve(&anchor.blob_id));
            match served {
                Some(content) if verify_anchor(&content, anchor) => {
                    self.tamper_log.extend(events.iter().cloned());
                    return Ok(Fetched { content, served_by: *id, events });
                }
                Some(_) => events.push(TamperEvent::Corrupted { store: *id, blob_id: anchor.blob_id }),
                None => events.push(TamperEvent::Missing { store: *id, blob_id: anchor.blob_id }),
            }
        }
        self.tamper_log.extend(events);
        Err(DatastoreError::AllReplicasBadOrMissing)
    }

    /// Replaces the bytes one store holds for `blob_id`.
    pub fn tamper(&mut self, store: StoreId, blob_id: &Hash, f: impl FnOnce(&mut Vec<u8>)) -> bool {
        match self.stores.get_mut(&store).and_then(|s| s.blobs.get_mut(blob_id)) {
            Some(content) => {
                f(content);
                true
            }
            None => false,
        }
    }

    pub fn stored_blob(&self, blob_id: &Hash) -> Option<StoredBlob> {
        let replicas: Vec<StoreId> = self.stores.values().filter(|s| s.holds(blob_id)).map(|s| s.id).collect();
        let first = replicas.first()?;
        let content = self.stores[first].blobs[blob_id].clone();
        Some(StoredBlob { blob_id: *blob_id, content, replicas })
    }
}

pub fn verify_anchor(content: &[u8], anchor: &Anchor) -> bool {
    digest(content) == anchor.blob_id
}
