use super::tx::{Transaction, MAX_PAYLOAD};
use super::utxo::UtxoView;
use super::TxViolation;

/// Validates `tx` against `utxo` as if included in a block at `height`.
/// Returns the fee on success.
///
/// Rules, in the order they are checked: structure, transaction lock
/// height, then per input the referenced output and its predicate, and
/// finally value balance.
pub fn validate_transaction<V: UtxoView + ?Sized>(tx: &Transaction, utxo: &V, height: u64) -> Result<u64, TxViolation> {
    if tx.inputs.is_empty() {
        return Err(TxViolation::malformed("no inputs"));
    }
    if tx.outputs.is_empty() {
        return Err(TxViolation::malformed("no outputs"));
    }
    for (i, o) in tx.outputs.iter().enumerate() {
        if o.payload.as_ref().is_some_and(|p| p.len() > MAX_PAYLOAD) {
            return Err(TxViolation::malformed(format!("output {i} payload exceeds {MAX_PAYLOAD} bytes")));
        }
        if !o.predicate.is_well_formed() {
            return Err(TxViolation::malformed(format!("output {i} predicate is malformed")));
        }
    }
    for (i, input) in tx.inputs.iter().enumerate() {
        if tx.inputs[..i].iter().any(|p| p.prev == input.prev) {
            return Err(TxViolation::malformed(format!("input {i} spends the same outpoint twice")));
        }
    }
    let total_out = tx.total_output().ok_or_else(|| TxViolation::malformed("output value overflow"))?;

    if let Some(lock) = tx.lock_height {
        if lock > height {
            return Err(TxViolation::TimelockNotExpired { unlock_height: lock, height });
        }
    }

    let mut total_in: u64 = 0;
    for (i, input) in tx.inputs.iter().enumerate() {
        let spent = utxo.output(&input.prev).ok_or(TxViolation::MissingUtxo { input: i, outpoint: input.prev })?;
        spent.predicate.check(&input.witness, &tx.sighash(i), height)?;
        total_in = total_in.checked_add(spent.value).ok_or_else(|| TxViolation::malformed("input value overflow"))?;
    }

    if total_in < total_out {
        return Err(TxViolation::NegativeFee { excess: total_out - total_in });
    }
    Ok(total_in - total_out)
}
