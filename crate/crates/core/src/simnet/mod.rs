//! Deterministic discrete-event network of ledger nodes.
//!
//! Events run in `(fire_time, insertion_sequence)` order. One designated
//! node produces blocks at exponentially distributed intervals; blocks and
//! transactions reach every other node after a fixed per-link delay.

mod node;

pub use node::{Node, NotFound};

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::crypto::{digest_parts, Hash, KeyDigest};
use crate::ledger::{Block, MempoolError, Transaction, TxOutput};

pub type NodeId = usize;
pub type ActorId = usize;

/// Simulated time in whole microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub fn from_secs_f64(s: f64) -> SimTime {
        SimTime((s * 1e6).round().max(0.0) as u64)
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn plus_secs(self, s: f64) -> SimTime {
        SimTime(self.0 + SimTime::from_secs_f64(s).0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6}s", self.as_secs_f64())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("mean block interval must be positive, got {0}")]
    BadMeanInterval(f64),
    #[error("propagation delay must be non-negative, got {0}")]
    BadDelay(f64),
    #[error("need at least one node")]
    NoNodes,
    #[error("producer node {0} does not exist")]
    BadProducer(NodeId),
    #[error("end time {end} is before current time {now}")]
    TimeTravel { now: SimTime, end: SimTime },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub rng_seed: u64,
    pub mean_block_interval_s: f64,
    pub propagation_delay_s: f64,
    pub max_block_size: usize,
    pub nodes: usize,
    pub producer: NodeId,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            rng_seed: 0,
            mean_block_interval_s: 600.0,
            propagation_delay_s: 1.0,
            max_block_size: 100_000,
            nodes: 3,
            producer: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.mean_block_interval_s > 0.0 && self.mean_block_interval_s.is_finite()) {
            return Err(SimError::BadMeanInterval(self.mean_block_interval_s));
        }
        if !(self.propagation_delay_s >= 0.0 && self.propagation_delay_s.is_finite()) {
            return Err(SimError::BadDelay(self.propagation_delay_s));
        }
        if self.nodes == 0 {
            return Err(SimError::NoNodes);
        }
        if self.producer >= self.nodes {
            return Err(SimError::BadProducer(self.producer));
        }
        Ok(())
    }
}

/// Independent generator for one subsystem, derived from the run seed and a
/// fixed label so that draws in one subsystem never shift another's.
pub fn subsystem_rng(seed: u64, label: &str) -> ChaCha20Rng {
    ChaCha20Rng::from_seed(digest_parts(&[b"s2aas/rng", &seed.to_le_bytes(), label.as_bytes()]).0)
}

/// Exponentially distributed inter-block delay in seconds with the given mean.
pub fn next_block_delay<R: Rng + ?Sized>(rng: &mut R, mean: f64) -> f64 {
    assert!(mean > 0.0, "mean block interval must be positive");
    Exp::new(1.0 / mean).expect("positive rate").sample(rng)
}

#[derive(Clone, Debug)]
pub enum EventKind {
    BlockProduced,
    TxBroadcast { to: NodeId, tx: Arc<Transaction> },
    BlockReceived { to: NodeId, block: Arc<Block> },
    ProtocolTimer { actor: ActorId, tag: u64 },
}

#[derive(Clone, Debug)]
pub struct Event {
    pub fire_time: SimTime,
    pub seq: u64,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        (self.fire_time, self.seq) == (other.fire_time, other.seq)
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.fire_time, self.seq).cmp(&(other.fire_time, other.seq))
    }
}

/// What an executed event means to the application layer.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Notification {
    Timer { actor: ActorId, tag: u64 },
    BlockApplied { node: NodeId, height: u64 },
    Internal,
}

/// Callbacks the event loop drives. Implementors own the actors.
pub trait Application {
    fn on_timer(&mut self, net: &mut Network, actor: ActorId, tag: u64);

    fn on_block(&mut self, _net: &mut Network, _node: NodeId, _height: u64) {}

    /// Named key digests whose balances appear in the report.
    fn accounts(&self) -> Vec<(String, KeyDigest)> {
        Vec::new()
    }
}

/// Runs the network alone.
pub struct NoActors;

impl Application for NoActors {
    fn on_timer(&mut self, _: &mut Network, _: ActorId, _: u64) {}
}

pub struct Network {
    config: SimConfig,
    now: SimTime,
    queue: BinaryHeap<Reverse<Event>>,
    next_seq: u64,
    nodes: Vec<Node>,
    block_rng: ChaCha20Rng,
    producer_key: KeyDigest,
    trace: Sha256,
    executed: u64,
    producing: bool,
}

impl fmt::Debug for Network {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Network")
            .field("now", &self.now)
            .field("nodes", &self.nodes.len())
            .field("queued", &self.queue.len())
            .finish()
    }
}

impl Network {
    /// Every node starts from the same genesis block funding `genesis`.
    /// Block production starts immediately.
    pub fn new(config: SimConfig, genesis: Vec<TxOutput>, producer_key: KeyDigest) -> Result<Network, SimError> {
        config.validate()?;
        let nodes = (0..config.nodes).map(|id| Node::new(id, genesis.clone())).collect();
        let block_rng = subsystem_rng(config.rng_seed, "blocks");
        let mut net = Network {
            config,
            now: SimTime::ZERO,
            queue: BinaryHeap::new(),
            next_seq: 0,
            nodes,
            block_rng,
            producer_key,
            trace: Sha256::new(),
            executed: 0,
            producing: true,
        };
        net.schedule_next_block();
        Ok(net)
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn node_mut(&mut self, id: NodeId) -> &mut Node {
        &mut self.nodes[id]
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn producer(&self) -> &Node {
        &self.nodes[self.config.producer]
    }

    pub fn producer_key(&self) -> KeyDigest {
        self.producer_key
    }

    pub fn events_executed(&self) -> u64 {
        self.executed
    }

    pub fn pending_events(&self) -> usize {
        self.queue.len()
    }

    /// Stops scheduling further blocks once the pending one fires.
    pub fn stop_block_production(&mut self) {
        self.producing = false;
    }

    /// Digest over every event executed so far.
    pub fn trace_digest(&self) -> Hash {
        Hash(self.trace.clone().finalize().into())
    }

    fn push(&mut self, fire_time: SimTime, kind: EventKind) {
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Event { fire_time, seq, kind }));
    }

    fn schedule_next_block(&mut self) {
        let delay = next_block_delay(&mut self.block_rng, self.config.mean_block_interval_s);
        // at least one microsecond so timestamps strictly increase
        let delay_us = ((delay * 1e6).round() as u64).max(1);
        self.push(SimTime(self.now.0 + delay_us), EventKind::BlockProduced);
    }

    pub fn schedule_timer(&mut self, at: SimTime, actor: ActorId, tag: u64) {
        let at = at.max(self.now);
        self.push(at, EventKind::ProtocolTimer { actor, tag });
    }

    fn link_delay(&self) -> SimTime {
        SimTime::from_secs_f64(self.config.propagation_delay_s)
    }

    /// Schedules delivery of an already locally accepted `tx` to every node
    /// other than `origin`.
    pub fn broadcast(&mut self, tx: Transaction, origin: NodeId) {
        let at = SimTime(self.now.0 + self.link_delay().0);
        let tx = Arc::new(tx);
        for to in 0..self.nodes.len() {
            if to != origin {
                self.push(at, EventKind::TxBroadcast { to, tx: Arc::clone(&tx) });
            }
        }
    }

    /// Admits `tx` to `origin`'s mempool and, if accepted, broadcasts it.
    pub fn submit(&mut self, origin: NodeId, tx: Transaction) -> Result<Hash, MempoolError> {
        let node = &mut self.nodes[origin];
        let txid = node.mempool.insert(tx.clone(), &node.chain)?;
        self.broadcast(tx, origin);
        Ok(txid)
    }

    fn produce_block(&mut self) -> u64 {
        let pid = self.config.producer;
        let node = &self.nodes[pid];
        let txs = node.mempool.select_for_block(self.config.max_block_size);
        let fee_reward = txs.iter().map(|t| node.mempool.get(&t.txid()).map_or(0, |e| e.fee)).sum();
        let block = Block {
            height: node.chain.height() + 1,
            prev_block_hash: node.chain.tip_hash(),
            timestamp_us: self.now.0,
            producer: self.producer_key,
            fee_reward,
            transactions: txs,
        };
        let height = block.height;
        self.nodes[pid].apply_block(block.clone()).expect("producer builds valid blocks");
        let at = SimTime(self.now.0 + self.link_delay().0);
        let block = Arc::new(block);
        for to in 0..self.nodes.len() {
            if to != pid {
                self.push(at, EventKind::BlockReceived { to, block: Arc::clone(&block) });
            }
        }
        if self.producing {
            self.schedule_next_block();
        }
        height
    }

    fn record(&mut self, ev: &Event) {
        self.trace.update(ev.fire_time.0.to_le_bytes());
        self.trace.update(ev.seq.to_le_bytes());
        match &ev.kind {
            EventKind::BlockProduced => self.trace.update([0u8]),
            EventKind::TxBroadcast { to, tx } => {
                self.trace.update([1u8]);
                self.trace.update((*to as u64).to_le_bytes());
                self.trace.update(tx.txid().0);
            }
            EventKind::BlockReceived { to, block } => {
                self.trace.update([2u8]);
                self.trace.update((*to as u64).to_le_bytes());
                self.trace.update(block.hash().0);
            }
            EventKind::ProtocolTimer { actor, tag } => {
                self.trace.update([3u8]);
                self.trace.update((*actor as u64).to_le_bytes());
                self.trace.update(tag.to_le_bytes());
            }
        }
    }

    /// Executes the next event due at or before `t_end`.
    pub fn step(&mut self, t_end: SimTime) -> Option<Notification> {
        if self.queue.peek().is_none_or(|Reverse(e)| e.fire_time > t_end) {
            return None;
        }
        let Reverse(ev) = self.queue.pop().unwrap();
        self.now = ev.fire_time;
        self.executed += 1;
        self.record(&ev);
        Some(match ev.kind {
            EventKind::BlockProduced => {
                let height = self.produce_block();
                Notification::BlockApplied { node: self.config.producer, height }
            }
            EventKind::TxBroadcast { to, tx } => {
                let node = &mut self.nodes[to];
                let txid = tx.txid();
                if let Err(e) = node.mempool.insert((*tx).clone(), &node.chain) {
                    node.rejected.push((txid, e.name().to_string()));
                }
                Notification::Internal
            }
            EventKind::BlockReceived { to, block } => {
                let height = block.height;
                match self.nodes[to].apply_block((*block).clone()) {
                    Ok(()) => Notification::BlockApplied { node: to, height },
                    Err(e) => {
                        self.nodes[to].rejected.push((block.hash(), e.to_string()));
                        Notification::Internal
                    }
                }
            }
            EventKind::ProtocolTimer { actor, tag } => Notification::Timer { actor, tag },
        })
    }

    /// Runs until simulated time `t_end`; afterwards `now() == t_end`.
    pub fn run_until<A: Application>(&mut self, app: &mut A, t_end: SimTime) -> Result<SimReport, SimError> {
        if t_end < self.now {
            return Err(SimError::TimeTravel { now: self.now, end: t_end });
        }
        while let Some(n) = self.step(t_end) {
            match n {
                Notification::Timer { actor, tag } => app.on_timer(self, actor, tag),
                Notification::BlockApplied { node, height } => app.on_block(self, node, height),
                Notification::Internal => {}
            }
        }
        self.now = t_end;
        Ok(self.report(app))
    }

    /// Runs until the producer's chain reaches `height`.
    pub fn run_until_height<A: Application>(&mut self, app: &mut A, height: u64) -> SimReport {
        while self.producer().chain.height() < height {
            match self.step(SimTime(u64::MAX)) {
                Some(Notification::Timer { actor, tag }) => app.on_timer(self, actor, tag),
                Some(Notification::BlockApplied { node, height }) => app.on_block(self, node, height),
                Some(Notification::Internal) => {}
                None => break,
            }
        }
        self.report(app)
    }

    pub fn report<A: Application>(&self, app: &A) -> SimReport {
        let chain = &self.producer().chain;
        let confirmed_txs = chain.blocks().iter().skip(1).map(|b| b.transactions.len() as u64).sum();
        let total_fees = chain.blocks().iter().map(|b| b.fee_reward).sum();
        let balances = app.accounts().into_iter().map(|(name, kd)| (name, chain.utxo().balance(&kd))).collect();
        SimReport {
            time_s: self.now.as_secs_f64(),
            height: chain.height(),
            confirmed_txs,
            total_fees,
            tip_hash: chain.tip_hash(),
            events_executed: self.executed,
            trace_digest: self.trace_digest(),
            balances,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimReport {
    pub time_s: f64,
    pub height: u64,
    pub confirmed_txs: u64,
    pub total_fees: u64,
    pub tip_hash: Hash,
    pub events_executed: u64,
    pub trace_digest: Hash,
    pub balances: BTreeMap<String, u64>,
}

#[cfg(test)]
mod tests;
