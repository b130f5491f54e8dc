//! Oracles that sign only while an expression over their facts holds, and
//! the two-party bet settled by one.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::crypto::{Hash, KeyPair, PublicKey, Signature};
use crate::ledger::{oracle_message, OutPoint, Predicate, Transaction, TxInput, TxOutput};
use crate::simnet::{Network, NodeId};
use crate::wallet::{build_joint, Contribution, FeePolicy};

use super::ContractError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Comparison {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
}

impl Comparison {
    fn holds(self, a: f64, b: f64) -> bool {
        match self {
            Comparison::Lt => a < b,
            Comparison::Le => a <= b,
            Comparison::Gt => a > b,
            Comparison::Ge => a >= b,
            Comparison::Eq => a == b,
        }
    }

    fn symbol(self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Eq => "==",
        }
    }
}

/// `<fact> <op> <number>`, where the number may carry a unit suffix such
/// as `10mm` (the unit is ignored).
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Expression {
    pub fact: String,
    pub op: Comparison,
    pub threshold: f64,
}

impl FromStr for Expression {
    type Err = ContractError;

    fn from_str(s: &str) -> Result<Expression, ContractError> {
        let bad = || ContractError::BadExpression(s.to_string());
        let parts: Vec<&str> = s.split_whitespace().collect();
        let [fact, op, number] = parts[..] else { return Err(bad()) };
        let op = match op {
            "<" => Comparison::Lt,
            "<=" => Comparison::Le,
            ">" => Comparison::Gt,
            ">=" => Comparison::Ge,
            "==" => Comparison::Eq,
            _ => return Err(bad()),
        };
        let digits = number.trim_end_matches(|c: char| c.is_ascii_alphabetic() || c == '%');
        let threshold: f64 = digits.parse().map_err(|_| bad())?;
        if !threshold.is_finite() || !fact.chars().next().is_some_and(|c| c.is_alphabetic()) {
            return Err(bad());
        }
        Ok(Expression { fact: fact.to_string(), op, threshold })
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.fact, self.op.symbol(), self.threshold)
    }
}

impl Expression {
    /// False when the fact is unknown.
    pub fn evaluate(&self, facts: &BTreeMap<String, f64>) -> bool {
        facts.get(&self.fact).is_some_and(|v| self.op.holds(*v, self.threshold))
    }
}

/// First standalone decimal number in a sensor reading such as
/// `rain=12.5mm`. Digits inside a name (`pm25`) are skipped.
pub fn reading_value(datum: &[u8]) -> Option<f64> {
    let text = std::str::from_utf8(datum).ok()?;
    let bytes = text.as_bytes();
    let start = (0..bytes.len()).find(|&i| {
        let prev_ok = i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_' || bytes[i - 1] == b'.');
        let starts =
            bytes[i].is_ascii_digit() || (bytes[i] == b'-' && bytes.get(i + 1).is_some_and(u8::is_ascii_digit));
        prev_ok && starts
    })?;
    let rest = &text[start..];
    let end =
        rest.char_indices().skip(1).find(|(_, c)| !(c.is_ascii_digit() || *c == '.')).map_or(rest.len(), |(i, _)| i);
    rest[..end].parse().ok()
}

#[derive(Clone, Debug)]
pub struct OracleService {
    pub keypair: KeyPair,
    pub expressions: BTreeMap<String, Expression>,
    pub facts: BTreeMap<String, f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    Signed(Signature),
    Refused,
}

impl OracleService {
    pub fn new(keypair: KeyPair) -> OracleService {
        OracleService { keypair, expressions: BTreeMap::new(), facts: BTreeMap::new() }
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public_key()
    }

    pub fn add_expression(&mut self, id: &str, text: &str) -> Result<(), ContractError> {
        self.expressions.insert(id.to_string(), text.parse()?);
        Ok(())
    }

    pub fn set_fact(&mut self, name: &str, value: f64) {
        self.facts.insert(name.to_string(), value);
    }

    /// Records the numeric reading in `datum` as `fact`.
    pub fn observe(&mut self, fact: &str, datum: &[u8]) -> Option<f64> {
        let v = reading_value(datum)?;
        self.set_fact(fact, v);
        Some(v)
    }

    pub fn evaluate(&self, expression_id: &str) -> Result<bool, ContractError> {
        let e = self
            .expressions
            .get(expression_id)
            .ok_or_else(|| ContractError::UnknownExpression(expression_id.into()))?;
        Ok(e.evaluate(&self.facts))
    }
}

/// Signs input `input_index` of `tx` for `expression_id` if the expression
/// currently holds.
pub fn oracle_sign(
    oracle: &OracleService,
    expression_id: &str,
    tx: &Transaction,
    input_index: usize,
) -> Result<OracleVerdict, ContractError> {
    if !oracle.evaluate(expression_id)? {
        return Ok(OracleVerdict::Refused);
    }
    let msg = oracle_message(expression_id, &tx.sighash(input_index));
    Ok(OracleVerdict::Signed(oracle.keypair.sign(&msg.0)))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum BetStatus {
    Funded,
    Settled { winner: PublicKey, txid: Hash },
}

/// Pot claimable by party `i` with the oracle's signature for `expressions[i]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct WeatherBet {
    pub parties: [PublicKey; 2],
    pub expressions: [String; 2],
    pub oracle: PublicKey,
    pub pot: OutPoint,
    pub amount: u64,
    pub status: BetStatus,
}

pub fn bet_predicate(oracle: &PublicKey, parties: &[PublicKey; 2], expressions: &[String; 2]) -> Predicate {
    Predicate::either(
        Predicate::oracle_gated(*oracle, expressions[0].clone(), Predicate::pay_to(&parties[0])),
        Predicate::oracle_gated(*oracle, expressions[1].clone(), Predicate::pay_to(&parties[1])),
    )
}

/// Both parties pay their stake into one oracle-gated pot.
pub fn fund_bet(
    net: &mut Network,
    node: NodeId,
    parties: [&KeyPair; 2],
    stakes: [u64; 2],
    oracle: &PublicKey,
    expressions: [String; 2],
    fee: FeePolicy,
) -> Result<WeatherBet, ContractError> {
    let keys = [parties[0].public_key(), parties[1].public_key()];
    let amount = stakes[0] + stakes[1];
    let pot = TxOutput::new(amount, bet_predicate(oracle, &keys, &expressions));
    let contributions: Vec<Contribution<'_>> =
        parties.iter().zip(stakes).map(|(kp, amount)| Contribution { keypair: kp, amount, exclude: &[] }).collect();
    let (tx, _) = build_joint(net.node(node), &contributions, vec![pot], fee)?;
    let txid = net.submit(node, tx)?;
    Ok(WeatherBet {
        parties: keys,
        expressions,
        oracle: *oracle,
        pot: OutPoint::new(txid, 0),
        amount,
        status: BetStatus::Funded,
    })
}

/// Party `index` claims the pot. The oracle is asked to sign for that
/// party's expression; a refusal leaves the pot untouched.
pub fn settle_bet(
    bet: &mut WeatherBet,
    index: usize,
    claimant: &KeyPair,
    oracle: &OracleService,
    net: &mut Network,
    node: NodeId,
    fee: FeePolicy,
) -> Result<Option<Transaction>, ContractError> {
    if net.node(node).chain.confirmations(&bet.pot.txid).is_none() {
        return Err(ContractError::Unconfirmed(bet.pot.txid));
    }
    let build = |fee_value: u64| {
        let mut tx = Transaction {
            inputs: vec![TxInput::spending(bet.pot)],
            outputs: vec![TxOutput::new(
                bet.amount.saturating_sub(fee_value),
                Predicate::pay_to(&claimant.public_key()),
            )],
            lock_height: None,
        };
        tx.add_signature(0, claimant);
        tx.inputs[0].witness.oracle_signature = Some(Signature([0; 64]));
        tx
    };
    let mut tx = build(fee.fee_for(build(0).serialized_size()));
    match oracle_sign(oracle, &bet.expressions[index], &tx, 0)? {
        OracleVerdict::Refused => Ok(None),
        OracleVerdict::Signed(sig) => {
            tx.inputs[0].witness.oracle_signature = Some(sig);
            let txid = net.submit(node, tx.clone())?;
            bet.status = BetStatus::Settled { winner: claimant.public_key(), txid };
            Ok(Some(tx))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::{validate_transaction, Chain, TxViolation};

    #[test]
    fn expression_grammar() {
        let e: Expression = "rainfall_mm > 10mm".parse().unwrap();
        assert_eq!(e, Expression { fact: "rainfall_mm".into(), op: Comparison::Gt, threshold: 10.0 });
        for bad in ["rain >", "rain => 3", "> 3 rain", "rain > x", "3 > 4"] {
            assert!(bad.parse::<Expression>().is_err(), "{bad}");
        }
        let mut facts = BTreeMap::new();
        assert!(!e.evaluate(&facts));
        facts.insert("rainfall_mm".into(), 12.0);
        assert!(e.evaluate(&facts));
        facts.insert("rainfall_mm".into(), 10.0);
        assert!(!e.evaluate(&facts));
        assert!("rainfall_mm == 10".parse::<Expression>().unwrap().evaluate(&facts));
        assert!("rainfall_mm <= 10".parse::<Expression>().unwrap().evaluate(&facts));
    }

    #[test]
    fn readings() {
        assert_eq!(reading_value(b"rain=12.5mm"), Some(12.5));
        assert_eq!(reading_value(b"-3.25C"), Some(-3.25));
        assert_eq!(reading_value(b"pm25=-7"), Some(-7.0));
        assert_eq!(reading_value(b"none"), None);
    }

    fn bet_chain() -> (Chain, [KeyPair; 2], OracleService, [String; 2], OutPoint) {
        let p = [KeyPair::from_label("film-producer"), KeyPair::from_label("insurer")];
        let mut o = OracleService::new(KeyPair::from_label("weather-oracle"));
        o.add_expression("rain", "rainfall_mm > 10").unwrap();
        o.add_expression("dry", "rainfall_mm <= 10").unwrap();
        let exprs = ["rain".to_string(), "dry".to_string()];
        let keys = [p[0].public_key(), p[1].public_key()];
        let chain = Chain::with_genesis(vec![TxOutput::new(1000, bet_predicate(&o.public_key(), &keys, &exprs))]);
        let pot = OutPoint::new(chain.genesis_txid(), 0);
        (chain, p, o, exprs, pot)
    }

    fn claim(pot: OutPoint, kp: &KeyPair) -> Transaction {
        let mut tx = Transaction {
            inputs: vec![TxInput::spending(pot)],
            outputs: vec![TxOutput::new(990, Predicate::pay_to(&kp.public_key()))],
            lock_height: None,
        };
        tx.add_signature(0, kp);
        tx
    }

    #[test]
    fn gated_on_oracle_truth() {
        let (chain, p, mut o, exprs, pot) = bet_chain();
        o.set_fact("rainfall_mm", 12.0);
        let mut win = claim(pot, &p[0]);
        let OracleVerdict::Signed(sig) = oracle_sign(&o, &exprs[0], &win, 0).unwrap() else { panic!("should sign") };
        assert_eq!(oracle_sign(&o, &exprs[1], &win, 0).unwrap(), OracleVerdict::Refused);
        win.inputs[0].witness.oracle_signature = Some(sig);
        assert_eq!(validate_transaction(&win, chain.utxo(), 1), Ok(10));

        // the loser cannot reuse the oracle's signature
        let mut steal = claim(pot, &p[1]);
        steal.inputs[0].witness.oracle_signature = Some(sig);
        assert!(validate_transaction(&steal, chain.utxo(), 1).is_err());

        // both parties sign, no oracle
        let mut both = claim(pot, &p[0]);
        both.add_signature(0, &p[1]);
        assert_eq!(validate_transaction(&both, chain.utxo(), 1), Err(TxViolation::OracleSignatureMissing));

        assert_eq!(oracle_sign(&o, "snow", &win, 0), Err(ContractError::UnknownExpression("snow".into())));
    }

    #[test]
    fn dry_day_pays_insurer() {
        let (chain, p, mut o, exprs, pot) = bet_chain();
        o.observe("rainfall_mm", b"rain=5.0mm");
        let mut tx = claim(pot, &p[1]);
        let OracleVerdict::Signed(sig) = oracle_sign(&o, &exprs[1], &tx, 0).unwrap() else { panic!("should sign") };
        tx.inputs[0].witness.oracle_signature = Some(sig);
        assert_eq!(validate_transaction(&tx, chain.utxo(), 1), Ok(10));
        assert_eq!(oracle_sign(&o, &exprs[0], &claim(pot, &p[0]), 0).unwrap(), OracleVerdict::Refused);
    }
}
