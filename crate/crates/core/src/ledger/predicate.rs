//! Spending conditions for outputs.

use crate::crypto::digest_parts;
use crate::crypto::{verify, Hash, KeyDigest, PublicKey};

use super::tx::{KeyedSignature, Witness};
use super::TxViolation;

pub const MAX_MULTISIG_KEYS: usize = 15;
pub const MAX_PREDICATE_DEPTH: usize = 4;
pub const MAX_EXPRESSION_ID_LEN: usize = 64;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Predicate {
    PayToKeyHash(KeyDigest),
    MultiSig {
        required: u8,
        keys: Vec<PublicKey>,
    },
    TimeLocked {
        unlock_height: u64,
        inner: Box<Predicate>,
    },
    OracleGated {
        oracle_key: PublicKey,
        expression_id: String,
        inner: Box<Predicate>,
    },
    AnyoneCanSpend,
    /// Satisfied by a witness that satisfies either branch.
    Either(Box<Predicate>, Box<Predicate>),
}

impl Predicate {
    pub fn pay_to(key: &PublicKey) -> Predicate {
        Predicate::PayToKeyHash(key.key_digest())
    }

    pub fn multisig(required: u8, keys: Vec<PublicKey>) -> Predicate {
        Predicate::MultiSig { required, keys }
    }

    pub fn time_locked(unlock_height: u64, inner: Predicate) -> Predicate {
        Predicate::TimeLocked { unlock_height, inner: Box::new(inner) }
    }

    pub fn oracle_gated(oracle_key: PublicKey, expression_id: impl Into<String>, inner: Predicate) -> Predicate {
        Predicate::OracleGated { oracle_key, expression_id: expression_id.into(), inner: Box::new(inner) }
    }

    pub fn either(left: Predicate, right: Predicate) -> Predicate {
        Predicate::Either(Box::new(left), Box::new(right))
    }

    pub fn depth(&self) -> usize {
        match self {
            Predicate::PayToKeyHash(_) | Predicate::MultiSig { .. } | Predicate::AnyoneCanSpend => 1,
            Predicate::TimeLocked { inner, .. } | Predicate::OracleGated { inner, .. } => 1 + inner.depth(),
            Predicate::Either(l, r) => 1 + l.depth().max(r.depth()),
        }
    }

    /// Structural limits: `1 ≤ m ≤ n ≤ 15`, distinct keys, depth ≤ 4.
    pub fn is_well_formed(&self) -> bool {
        self.depth() <= MAX_PREDICATE_DEPTH && self.check_nodes()
    }

    fn check_nodes(&self) -> bool {
        match self {
            Predicate::PayToKeyHash(_) | Predicate::AnyoneCanSpend => true,
            Predicate::MultiSig { required, keys } => {
                let n = keys.len();
                let mut sorted = keys.clone();
                sorted.sort();
                sorted.dedup();
                *required >= 1 && (*required as usize) <= n && n <= MAX_MULTISIG_KEYS && sorted.len() == n
            }
            Predicate::TimeLocked { inner, .. } => inner.check_nodes(),
            Predicate::OracleGated { expression_id, inner, .. } => {
                !expression_id.is_empty() && expression_id.len() <= MAX_EXPRESSION_ID_LEN && inner.check_nodes()
            }
            Predicate::Either(l, r) => l.check_nodes() && r.check_nodes(),
        }
    }

    /// Key digest when this is a plain pay-to-key-hash lock.
    pub fn owner(&self) -> Option<KeyDigest> {
        match self {
            Predicate::PayToKeyHash(d) => Some(*d),
            _ => None,
        }
    }

    /// Checks `witness` against this predicate for an input whose signature
    /// hash is `sighash`, evaluated at block `height`.
    pub fn check(&self, witness: &Witness, sighash: &Hash, height: u64) -> Result<(), TxViolation> {
        match self {
            Predicate::AnyoneCanSpend => Ok(()),
            Predicate::PayToKeyHash(d) => {
                let sig = witness
                    .signatures
                    .iter()
                    .find(|s| s.public_key.key_digest() == *d)
                    .ok_or(TxViolation::InsufficientSigners { required: 1, valid: 0 })?;
                if verify(&sig.public_key, &sighash.0, &sig.signature) {
                    Ok(())
                } else {
                    Err(TxViolation::BadSignature)
                }
            }
            Predicate::MultiSig { required, keys } => {
                let mut seen: Vec<&PublicKey> = Vec::new();
                for KeyedSignature { public_key, signature } in &witness.signatures {
                    if !keys.contains(public_key) || seen.contains(&public_key) {
                        continue;
                    }
                    if !verify(public_key, &sighash.0, signature) {
                        return Err(TxViolation::BadSignature);
                    }
                    seen.push(public_key);
                }
                if seen.len() < *required as usize {
                    return Err(TxViolation::InsufficientSigners { required: *required as usize, valid: seen.len() });
                }
                Ok(())
            }
            Predicate::TimeLocked { unlock_height, inner } => {
                if height < *unlock_height {
                    return Err(TxViolation::TimelockNotExpired { unlock_height: *unlock_height, height });
                }
                inner.check(witness, sighash, height)
            }
            Predicate::OracleGated { oracle_key, expression_id, inner } => {
                let sig = witness.oracle_signature.as_ref().ok_or(TxViolation::OracleSignatureMissing)?;
                let msg = oracle_message(expression_id, sighash);
                if !verify(oracle_key, &msg.0, sig) {
                    return Err(TxViolation::BadSignature);
                }
                inner.check(witness, sighash, height)
            }
            Predicate::Either(l, r) => match l.check(witness, sighash, height) {
                Ok(()) => Ok(()),
                // the fallback branch's failure is the one reported
                Err(_) => r.check(witness, sighash, height),
            },
        }
    }
}

/// Message an oracle signs to attest that `expression_id` held for the
/// input committed to by `sighash`.
pub fn oracle_message(expression_id: &str, sighash: &Hash) -> Hash {
    digest_parts(&[b"s2aas/oracle", &(expression_id.len() as u32).to_le_bytes(), expression_id.as_bytes(), &sighash.0])
}
