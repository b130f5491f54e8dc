//! Unidirectional micropayment channels from a requester to a sensor.
//!
//! The funding output is spendable either by both parties together or by the
//! requester alone once `expiry_height` is reached. Every off-chain update is
//! a fully signed settlement transaction for the new split; only the latest
//! one is ever broadcast by an honest party.

use serde::Serialize;
use thiserror::Error;

use crate::crypto::{verify, Hash, KeyPair, PublicKey, Signature};
use crate::ledger::{KeyedSignature, MempoolError, OutPoint, Predicate, Transaction, TxInput, TxOutput, TxViolation};
use crate::simnet::{Network, Node, NodeId};
use crate::wallet::{build_payment, FeePolicy, WalletError};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ChannelError {
    #[error(transparent)]
    Wallet(#[from] WalletError),
    #[error("expiry height {expiry} is not above current height {height}")]
    ExpiryNotInFuture { expiry: u64, height: u64 },
    #[error("deposit {deposit} does not cover the settlement fee {fee}")]
    DepositTooSmall { deposit: u64, fee: u64 },
    #[error("counterparty refused to sign the initial state")]
    CounterpartyRefused,
    #[error("funding transaction is not confirmed yet")]
    FundingUnconfirmed,
    #[error("payment {amount} exceeds requester balance {balance}")]
    InsufficientChannelBalance { amount: u64, balance: u64 },
    #[error("payment amount must be positive")]
    ZeroPayment,
    #[error("state sequence {got} is not above {current}")]
    StaleSequence { current: u64, got: u64 },
    #[error("state is not signed by both parties")]
    Unsigned,
    #[error("state belongs to another channel")]
    WrongChannel,
    #[error("refusing to settle sequence {attempted}; latest signed is {latest}")]
    StaleState { attempted: u64, latest: u64 },
    #[error("channel already closed")]
    AlreadyClosed,
    #[error(transparent)]
    Ledger(TxViolation),
    #[error("rejected by node: {0}")]
    Rejected(MempoolError),
}

impl ChannelError {
    pub fn name(&self) -> &'static str {
        match self {
            ChannelError::Wallet(_) => "InsufficientFunds",
            ChannelError::ExpiryNotInFuture { .. } => "ExpiryNotInFuture",
            ChannelError::DepositTooSmall { .. } => "DepositTooSmall",
            ChannelError::CounterpartyRefused => "CounterpartyRefused",
            ChannelError::FundingUnconfirmed => "FundingUnconfirmed",
            ChannelError::InsufficientChannelBalance { .. } => "InsufficientChannelBalance",
            ChannelError::ZeroPayment => "ZeroPayment",
            ChannelError::StaleSequence { .. } => "StaleSequence",
            ChannelError::Unsigned => "Unsigned",
            ChannelError::WrongChannel => "WrongChannel",
            ChannelError::StaleState { .. } => "StaleState",
            ChannelError::AlreadyClosed => "AlreadyClosed",
            ChannelError::Ledger(v) => v.name(),
            ChannelError::Rejected(e) => e.name(),
        }
    }
}

impl From<MempoolError> for ChannelError {
    fn from(e: MempoolError) -> Self {
        match e {
            MempoolError::Invalid(v) => ChannelError::Ledger(v),
            other => ChannelError::Rejected(other),
        }
    }
}

/// 2-of-2 between the parties, or the requester alone from `expiry_height`.
pub fn funding_predicate(requester: &PublicKey, sensor: &PublicKey, expiry_height: u64) -> Predicate {
    Predicate::either(
        Predicate::multisig(2, vec![*requester, *sensor]),
        Predicate::time_locked(expiry_height, Predicate::pay_to(requester)),
    )
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelState {
    pub channel_id: OutPoint,
    pub requester: PublicKey,
    pub sensor: PublicKey,
    pub deposit: u64,
    pub balance_requester: u64,
    pub balance_sensor: u64,
    pub sequence: u64,
    pub expiry_height: u64,
    pub settlement_fee: u64,
    #[serde(skip)]
    pub requester_sig: Option<Signature>,
    #[serde(skip)]
    pub sensor_sig: Option<Signature>,
}

impl ChannelState {
    /// Fee shares `(requester, sensor)`: the sensor pays up to half, the
    /// requester the rest, and whoever still has funds covers any remainder.
    pub fn fee_shares(&self) -> (u64, u64) {
        let f = self.settlement_fee;
        let mut s = self.balance_sensor.min(f / 2);
        let r = self.balance_requester.min(f - s);
        s += f - s - r;
        (r, s)
    }

    /// Unsigned settlement paying each party its balance less its fee
    /// share; zero outputs are left out.
    pub fn settlement_tx(&self) -> Transaction {
        let (fr, fs) = self.fee_shares();
        let mut outputs = Vec::new();
        for (bal, fee, key) in [(self.balance_requester, fr, &self.requester), (self.balance_sensor, fs, &self.sensor)]
        {
            if bal > fee {
                outputs.push(TxOutput::new(bal - fee, Predicate::pay_to(key)));
            }
        }
        Transaction { inputs: vec![TxInput::spending(self.channel_id)], outputs, lock_height: None }
    }

    fn sighash(&self) -> Hash {
        self.settlement_tx().sighash(0)
    }

    pub fn is_fully_signed(&self) -> bool {
        let h = self.sighash();
        match (self.requester_sig, self.sensor_sig) {
            (Some(r), Some(s)) => verify(&self.requester, &h.0, &r) && verify(&self.sensor, &h.0, &s),
            _ => false,
        }
    }

    /// The settlement with both signatures in its witness.
    pub fn signed_settlement(&self) -> Result<Transaction, ChannelError> {
        if !self.is_fully_signed() {
            return Err(ChannelError::Unsigned);
        }
        let mut tx = self.settlement_tx();
        tx.inputs[0].witness.signatures = vec![
            KeyedSignature { public_key: self.requester, signature: self.requester_sig.unwrap() },
            KeyedSignature { public_key: self.sensor, signature: self.sensor_sig.unwrap() },
        ];
        Ok(tx)
    }

    fn sign_both(mut self, requester: &KeyPair, sensor: &KeyPair) -> Result<ChannelState, ChannelError> {
        let h = self.sighash();
        self.requester_sig = Some(requester.sign(&h.0));
        // the sensor checks the requester's signature before countersigning
        if !verify(&self.requester, &h.0, self.requester_sig.as_ref().unwrap()) {
            return Err(ChannelError::Unsigned);
        }
        self.sensor_sig = Some(sensor.sign(&h.0));
        Ok(self)
    }
}

/// Next state moving `amount` from requester to sensor, signed by both.
pub fn channel_pay(
    state: &ChannelState,
    amount: u64,
    requester: &KeyPair,
    sensor: &KeyPair,
) -> Result<ChannelState, ChannelError> {
    if amount == 0 {
        return Err(ChannelError::ZeroPayment);
    }
    if amount > state.balance_requester {
        return Err(ChannelError::InsufficientChannelBalance { amount, balance: state.balance_requester });
    }
    let next = ChannelState {
        balance_requester: state.balance_requester - amount,
        balance_sensor: state.balance_sensor + amount,
        sequence: state.sequence + 1,
        requester_sig: None,
        sensor_sig: None,
        ..state.clone()
    };
    next.sign_both(requester, sensor)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ChannelStatus {
    Open,
    Closed { txid: Hash },
    Refunded { txid: Hash },
}

/// How a confirmed spend of the funding output relates to the channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SpendKind {
    Latest,
    Refund,
    /// Anything else, including an older signed state.
    Stale,
}

#[derive(Clone, Debug)]
pub struct Channel {
    pub funding_txid: Hash,
    pub state: ChannelState,
    pub status: ChannelStatus,
    pub payments: u64,
}

impl Channel {
    pub fn id(&self) -> OutPoint {
        self.state.channel_id
    }

    /// Errors unless the funding output has at least one confirmation at `node`.
    pub fn require_funded(&self, node: &Node) -> Result<(), ChannelError> {
        match node.chain.confirmations(&self.funding_txid) {
            Some(c) if c >= 1 => Ok(()),
            _ => Err(ChannelError::FundingUnconfirmed),
        }
    }

    /// Replaces the latest state with a newer, fully signed one.
    pub fn accept(&mut self, next: ChannelState) -> Result<(), ChannelError> {
        if self.status != ChannelStatus::Open {
            return Err(ChannelError::AlreadyClosed);
        }
        if next.channel_id != self.state.channel_id || next.deposit != self.state.deposit {
            return Err(ChannelError::WrongChannel);
        }
        if next.sequence <= self.state.sequence {
            return Err(ChannelError::StaleSequence { current: self.state.sequence, got: next.sequence });
        }
        if !next.is_fully_signed() || next.balance_requester + next.balance_sensor != next.deposit {
            return Err(ChannelError::Unsigned);
        }
        self.state = next;
        Ok(())
    }

    /// Pays `amount` off-chain once the channel is funded at `node`.
    pub fn pay(
        &mut self,
        node: &Node,
        amount: u64,
        requester: &KeyPair,
        sensor: &KeyPair,
    ) -> Result<&ChannelState, ChannelError> {
        if self.status != ChannelStatus::Open {
            return Err(ChannelError::AlreadyClosed);
        }
        self.require_funded(node)?;
        let next = channel_pay(&self.state, amount, requester, sensor)?;
        self.accept(next)?;
        self.payments += 1;
        Ok(&self.state)
    }

    pub fn classify_spend(&self, tx: &Transaction) -> SpendKind {
        let requester_only =
            tx.inputs.iter().all(|i| i.witness.signatures.iter().all(|s| s.public_key == self.state.requester));
        let to_requester = tx.outputs.iter().all(|o| o.predicate == Predicate::pay_to(&self.state.requester));
        if requester_only && to_requester && tx.outputs.len() == 1 {
            return SpendKind::Refund;
        }
        if tx.outputs == self.state.settlement_tx().outputs && tx.lock_height.is_none() {
            SpendKind::Latest
        } else {
            SpendKind::Stale
        }
    }
}

fn settlement_fee_estimate(requester: &KeyPair, sensor: &KeyPair, fee: FeePolicy) -> u64 {
    let mut tx = Transaction {
        inputs: vec![TxInput::spending(OutPoint::new(Hash::ZERO, 0))],
        outputs: vec![
            TxOutput::new(1, Predicate::pay_to(&requester.public_key())),
            TxOutput::new(1, Predicate::pay_to(&sensor.public_key())),
        ],
        lock_height: None,
    };
    tx.add_signature(0, requester);
    tx.add_signature(0, sensor);
    fee.fee_for(tx.serialized_size())
}

/// Funds a channel from `funder` to `counterparty` (`None` when the
/// counterparty does not answer). The counterparty signs the initial state
/// before the funding transaction is broadcast.
#[allow(clippy::too_many_arguments)]
pub fn open_channel(
    net: &mut Network,
    node: NodeId,
    funder: &KeyPair,
    counterparty: &PublicKey,
    counterparty_signer: Option<&KeyPair>,
    deposit: u64,
    expiry_height: u64,
    fee: FeePolicy,
) -> Result<Channel, ChannelError> {
    let height = net.node(node).chain.height();
    if expiry_height <= height {
        return Err(ChannelError::ExpiryNotInFuture { expiry: expiry_height, height });
    }
    let dummy_sensor = counterparty_signer.cloned().unwrap_or_else(|| KeyPair::from_label("unresponsive"));
    let settlement_fee = settlement_fee_estimate(funder, &dummy_sensor, fee);
    if deposit <= settlement_fee {
        return Err(ChannelError::DepositTooSmall { deposit, fee: settlement_fee });
    }
    let out = TxOutput::new(deposit, funding_predicate(&funder.public_key(), counterparty, expiry_height));
    let (funding, _) = build_payment(net.node(node), funder, vec![out], fee, &[])?;
    let funding_txid = funding.txid();
    let initial = ChannelState {
        channel_id: OutPoint::new(funding_txid, 0),
        requester: funder.public_key(),
        sensor: *counterparty,
        deposit,
        balance_requester: deposit,
        balance_sensor: 0,
        sequence: 0,
        expiry_height,
        settlement_fee,
        requester_sig: None,
        sensor_sig: None,
    };
    let Some(sensor) = counterparty_signer else {
        return Err(ChannelError::CounterpartyRefused);
    };
    let state = initial.sign_both(funder, sensor)?;
    net.submit(node, funding)?;
    Ok(Channel { funding_txid, state, status: ChannelStatus::Open, payments: 0 })
}

/// Broadcasts the latest signed settlement.
pub fn close_channel(channel: &mut Channel, net: &mut Network, node: NodeId) -> Result<Transaction, ChannelError> {
    if channel.status != ChannelStatus::Open {
        return Err(ChannelError::AlreadyClosed);
    }
    let tx = channel.state.signed_settlement()?;
    let txid = net.submit(node, tx.clone())?;
    channel.status = ChannelStatus::Closed { txid };
    Ok(tx)
}

/// Honest-party rule: only the latest state may be settled.
pub fn settle_state(
    channel: &mut Channel,
    state: &ChannelState,
    net: &mut Network,
    node: NodeId,
) -> Result<Transaction, ChannelError> {
    if state.sequence < channel.state.sequence {
        return Err(ChannelError::StaleState { attempted: state.sequence, latest: channel.state.sequence });
    }
    close_channel(channel, net, node)
}

/// The requester reclaims the whole deposit through the timelock branch.
pub fn refund_after_expiry(
    channel: &mut Channel,
    funder: &KeyPair,
    net: &mut Network,
    node: NodeId,
    fee: FeePolicy,
) -> Result<Transaction, ChannelError> {
    let build = |fee_value: u64| {
        let mut tx = Transaction {
            inputs: vec![TxInput::spending(channel.id())],
            outputs: vec![TxOutput::new(
                channel.state.deposit.saturating_sub(fee_value),
                Predicate::pay_to(&funder.public_key()),
            )],
            lock_height: None,
        };
        tx.add_signature(0, funder);
        tx
    };
    let size = build(0).serialized_size();
    let tx = build(fee.fee_for(size));
    let txid = net.submit(node, tx.clone())?;
    channel.status = ChannelStatus::Refunded { txid };
    Ok(tx)
}
