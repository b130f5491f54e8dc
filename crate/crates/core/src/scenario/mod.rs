//! Scenario files: a seeded network, funded actors, timed steps and
//! assertions over the final report.
//!
//! Scenarios are JSON. Steps fire at simulated times; a step whose inputs
//! are not confirmed yet (an unconfirmed channel, an unregistered name) is
//! retried at every later block until the horizon. Assertions select a
//! report section and compare fields:
//!
//! ```json
//! { "check": "channel", "id": "stream", "expect": { "payments": 1000, "chain_txs": 2 } }
//! ```
//!
//! An expected value may also be a matcher object `{"min": a, "max": b}`.

mod dump;
mod report;
mod world;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::Deserialize;
use serde_json::{Map, Value};
use thiserror::Error;

use crate::crypto::KeyPair;
use crate::datastore::{Datastores, Store, StoreId};
use crate::exchange::{DatumSource, OffChain};
use crate::ledger::{Block, Predicate, TxOutput};
use crate::simnet::{Network, NodeId, SimConfig, SimError, SimTime};
use crate::wallet::FeePolicy;

pub use dump::{dump_chain, dump_registry, load_chain_dump, parse_chain_dump, ChainDumpLine};
pub use report::{
    AssertionResult, BalanceRow, BetRow, CampaignRow, ChainStats, ChannelRow, EscrowRow, ExchangeRow, RegistryRow,
    Report, StepRow,
};
pub use world::World;

/// Bundled scenarios as `(name, json)`.
pub const BUNDLED: &[(&str, &str)] = &[
    ("atomic_exchange", include_str!("bundled/atomic_exchange.json")),
    ("weather_subscription_channel", include_str!("bundled/weather_subscription_channel.json")),
    ("escrow_dispute", include_str!("bundled/escrow_dispute.json")),
    ("air_quality_crowdfund", include_str!("bundled/air_quality_crowdfund.json")),
    ("weather_bet_oracle", include_str!("bundled/weather_bet_oracle.json")),
    ("registry_collision", include_str!("bundled/registry_collision.json")),
    ("tampered_datastore", include_str!("bundled/tampered_datastore.json")),
];

pub const EXIT_PASS: i32 = 0;
pub const EXIT_ASSERTION_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("no chain snapshot at {0}")]
    NoSnapshot(String),
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        EXIT_USAGE
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    /// `rng_seed` here is ignored in favor of `seed`.
    #[serde(default)]
    pub config: SimConfig,
    pub horizon_s: f64,
    #[serde(default)]
    pub fee: FeePolicy,
    /// Store ids are positions in this list.
    #[serde(default)]
    pub stores: Vec<StoreSpec>,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub steps: Vec<Step>,
    #[serde(default)]
    pub assertions: Vec<Assertion>,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StoreSpec {
    #[serde(default)]
    pub byzantine: bool,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    /// Also the key derivation label.
    pub name: String,
    #[serde(default)]
    pub node: NodeId,
    /// One genesis output per entry.
    #[serde(default)]
    pub funds: Vec<u64>,
    /// Never answers: sensors do not deliver and counterparties do not sign.
    #[serde(default)]
    pub unresponsive: bool,
    /// Confirmations before a delivery is opened.
    #[serde(default = "one")]
    pub confirmations: u64,
    #[serde(default)]
    pub sensor: Option<SensorSpec>,
    #[serde(default)]
    pub oracle: Option<OracleSpec>,
}

fn one() -> u64 {
    1
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorSpec {
    /// Registry name.
    pub name: String,
    pub data_type: String,
    pub price: u64,
    #[serde(default)]
    pub endpoint: String,
    pub source: DatumSource,
    #[serde(default = "one")]
    pub confirmations: u64,
    #[serde(default)]
    pub off_chain: Option<OffChain>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleSpec {
    /// Expression id to `<fact> <op> <number>`.
    pub expressions: BTreeMap<String, String>,
}

#[derive(Clone, Debug, Deserialize)]
pub struct Step {
    /// Fire time in simulated seconds.
    pub at: f64,
    /// Names the channel, escrow, campaign, bet or purchase a step creates.
    #[serde(default)]
    pub id: Option<String>,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Register {
        actor: String,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        price: Option<u64>,
    },
    /// `force` skips the local ownership check and lets the chain index decide.
    UpdateRecord {
        actor: String,
        name: String,
        #[serde(default)]
        price: Option<u64>,
        #[serde(default)]
        endpoint: Option<String>,
        #[serde(default)]
        force: bool,
    },
    /// Buys from a sensor actor directly (`sensor`) or through a registry
    /// lookup (`name`).
    Purchase {
        requester: String,
        #[serde(default)]
        sensor: Option<String>,
        #[serde(default)]
        name: Option<String>,
        #[serde(default)]
        amount: Option<u64>,
    },
    OpenChannel {
        requester: String,
        sensor: String,
        deposit: u64,
        expiry_blocks: u64,
    },
    Subscribe {
        channel: String,
        amount: u64,
        interval_s: f64,
        count: u64,
    },
    CloseChannel {
        channel: String,
    },
    /// The sensor tries to settle an older state.
    SettleStale {
        channel: String,
        sequence: u64,
    },
    RefundChannel {
        channel: String,
    },
    FundEscrow {
        buyer: String,
        seller: String,
        mediator: String,
        amount: u64,
    },
    EscrowRelease {
        escrow: String,
        signers: Vec<String>,
        to: String,
    },
    /// The mediator rules on a delivered datum (`purchase`) or a literal
    /// `datum` and co-signs with the winning party.
    EscrowMediate {
        escrow: String,
        #[serde(default)]
        purchase: Option<String>,
        #[serde(default)]
        datum: Option<String>,
        valid: [f64; 2],
    },
    Campaign {
        entrepreneur: String,
        goal: u64,
    },
    Pledge {
        campaign: String,
        contributor: String,
        amount: u64,
    },
    /// The contributor spends its pledged output elsewhere.
    DoubleSpendPledge {
        campaign: String,
        contributor: String,
    },
    Assemble {
        campaign: String,
    },
    WeatherBet {
        parties: [String; 2],
        stakes: [u64; 2],
        oracle: String,
        expressions: [String; 2],
    },
    /// Feeds an oracle fact from a literal `value` or a delivered datum.
    Observe {
        oracle: String,
        fact: String,
        #[serde(default)]
        purchase: Option<String>,
        #[serde(default)]
        value: Option<f64>,
    },
    SettleBet {
        bet: String,
        claimant: String,
    },
}

impl Action {
    pub fn name(&self) -> &'static str {
        match self {
            Action::Register { .. } => "register",
            Action::UpdateRecord { .. } => "update_record",
            Action::Purchase { .. } => "purchase",
            Action::OpenChannel { .. } => "open_channel",
            Action::Subscribe { .. } => "subscribe",
            Action::CloseChannel { .. } => "close_channel",
            Action::SettleStale { .. } => "settle_stale",
            Action::RefundChannel { .. } => "refund_channel",
            Action::FundEscrow { .. } => "fund_escrow",
            Action::EscrowRelease { .. } => "escrow_release",
            Action::EscrowMediate { .. } => "escrow_mediate",
            Action::Campaign { .. } => "campaign",
            Action::Pledge { .. } => "pledge",
            Action::DoubleSpendPledge { .. } => "double_spend_pledge",
            Action::Assemble { .. } => "assemble",
            Action::WeatherBet { .. } => "weather_bet",
            Action::Observe { .. } => "observe",
            Action::SettleBet { .. } => "settle_bet",
        }
    }
}

/// `check` names a report section: `balance`, `exchange`, `channel`,
/// `escrow`, `campaign`, `bet`, `registry`, `step` (rows, picked by `id`),
/// or `chain`, `audit`, `flags` (single objects).
#[derive(Clone, Debug, Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct Assertion {
    pub check: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub expect: Map<String, Value>,
}

const ROW_SECTIONS: &[&str] = &["balance", "exchange", "channel", "escrow", "campaign", "bet", "registry", "step"];
const OBJECT_SECTIONS: &[&str] = &["chain", "audit", "flags"];

fn parse_error(e: serde_json::Error) -> ScenarioError {
    ScenarioError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
}

/// Parses and checks a scenario.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let scenario: Scenario = serde_json::from_str(text).map_err(parse_error)?;
    scenario.check()?;
    Ok(scenario)
}

/// Reads a scenario from `source`: a file path, or the name of a bundled scenario.
pub fn load_scenario(source: &str) -> Result<Scenario, ScenarioError> {
    let path = Path::new(source);
    if !path.exists() {
        if let Some((_, text)) = BUNDLED.iter().find(|(n, _)| *n == source) {
            return parse_scenario(text);
        }
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| ScenarioError::Io { path: source.to_string(), message: e.to_string() })?;
    parse_scenario(&text)
}

pub fn bundled(name: &str) -> Option<Scenario> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, text)| parse_scenario(text).expect("bundled scenarios parse"))
}

impl Scenario {
    fn actor<'a>(&'a self, name: &str, what: &str) -> Result<&'a ActorSpec, ScenarioError> {
        self.actors
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| ScenarioError::Invalid(format!("{what} refers to undeclared actor {name:?}")))
    }

    /// Reference and ordering checks serde cannot express.
    pub fn check(&self) -> Result<(), ScenarioError> {
        let invalid = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.horizon_s > 0.0 && self.horizon_s.is_finite()) {
            return invalid(format!("horizon_s must be positive, got {}", self.horizon_s));
        }
        self.config.validate()?;
        let mut names = BTreeSet::new();
        for a in &self.actors {
            if !names.insert(a.name.as_str()) {
                return invalid(format!("actor {:?} declared twice", a.name));
            }
            if a.node >= self.config.nodes {
                return invalid(format!("actor {:?} on node {} but only {} nodes", a.name, a.node, self.config.nodes));
            }
            if let Some(oc) = a.sensor.as_ref().and_then(|s| s.off_chain.as_ref()) {
                if let Some(id) = oc.stores.iter().find(|id| **id as usize >= self.stores.len()) {
                    return invalid(format!("actor {:?} prefers undeclared store {id}", a.name));
                }
            }
            if let Some(o) = &a.oracle {
                for (id, text) in &o.expressions {
                    text.parse::<crate::contracts::Expression>()
                        .map_err(|e| ScenarioError::Invalid(format!("oracle {:?} expression {id:?}: {e}", a.name)))?;
                }
            }
        }
        let mut last = 0.0;
        let mut ids: BTreeMap<&str, &'static str> = BTreeMap::new();
        for (i, step) in self.steps.iter().enumerate() {
            let what = format!("step {i} ({})", step.action.name());
            if !(step.at >= 0.0 && step.at.is_finite()) || step.at < last {
                return invalid(format!("{what}: step times must be non-negative and non-decreasing"));
            }
            last = step.at;
            self.check_action(step, &what, &ids)?;
            if let Some(id) = &step.id {
                if ids.insert(id, step.action.name()).is_some() {
                    return invalid(format!("{what}: id {id:?} used twice"));
                }
            }
        }
        for (i, a) in self.assertions.iter().enumerate() {
            let is_row = ROW_SECTIONS.contains(&a.check.as_str());
            if !is_row && !OBJECT_SECTIONS.contains(&a.check.as_str()) {
                return invalid(format!("assertion {i}: unknown check {:?}", a.check));
            }
            if is_row != a.id.is_some() {
                return invalid(format!(
                    "assertion {i}: check {:?} {} an id",
                    a.check,
                    if is_row { "needs" } else { "takes no" }
                ));
            }
        }
        Ok(())
    }

    fn check_action(&self, step: &Step, what: &str, ids: &BTreeMap<&str, &'static str>) -> Result<(), ScenarioError> {
        let entity = |id: &str, kind: &str| match ids.get(id) {
            Some(k) if *k == kind => Ok(()),
            _ => Err(ScenarioError::Invalid(format!("{what}: no earlier {kind} step with id {id:?}"))),
        };
        let sensor = |name: &str| match self.actor(name, what)?.sensor {
            Some(_) => Ok(()),
            None => Err(ScenarioError::Invalid(format!("{what}: actor {name:?} has no sensor section"))),
        };
        let needs_id = || match &step.id {
            Some(_) => Ok(()),
            None => Err(ScenarioError::Invalid(format!("{what}: needs an id"))),
        };
        match &step.action {
            Action::Register { actor, .. } => sensor(actor)?,
            Action::UpdateRecord { actor, .. } => {
                self.actor(actor, what)?;
            }
            Action::Purchase { requester, sensor: direct, name, .. } => {
                self.actor(requester, what)?;
                match (direct, name) {
                    (Some(s), None) => sensor(s)?,
                    (None, Some(_)) => {}
                    _ => return Err(ScenarioError::Invalid(format!("{what}: give exactly one of sensor or name"))),
                }
            }
            Action::OpenChannel { requester, sensor, .. } => {
                needs_id()?;
                self.actor(requester, what)?;
                self.actor(sensor, what)?;
            }
            Action::Subscribe { channel, interval_s, .. } => {
                entity(channel, "open_channel")?;
                if !(*interval_s > 0.0 && interval_s.is_finite()) {
                    return Err(ScenarioError::Invalid(format!("{what}: interval_s must be positive")));
                }
            }
            Action::CloseChannel { channel }
            | Action::SettleStale { channel, .. }
            | Action::RefundChannel { channel } => entity(channel, "open_channel")?,
            Action::FundEscrow { buyer, seller, mediator, .. } => {
                needs_id()?;
                for n in [buyer, seller, mediator] {
                    self.actor(n, what)?;
                }
            }
            Action::EscrowRelease { escrow, signers, to } => {
                entity(escrow, "fund_escrow")?;
                for n in signers.iter().chain([to]) {
                    self.actor(n, what)?;
                }
            }
            Action::EscrowMediate { escrow, purchase, datum, valid } => {
                entity(escrow, "fund_escrow")?;
                match (purchase, datum) {
                    (Some(p), None) => entity(p, "purchase")?,
                    (None, Some(_)) => {}
                    _ => return Err(ScenarioError::Invalid(format!("{what}: give exactly one of purchase or datum"))),
                }
                if valid[0] > valid[1] {
                    return Err(ScenarioError::Invalid(format!("{what}: empty valid range")));
                }
            }
            Action::Campaign { entrepreneur, .. } => {
                needs_id()?;
                self.actor(entrepreneur, what)?;
            }
            Action::Pledge { campaign, contributor, .. } | Action::DoubleSpendPledge { campaign, contributor } => {
                entity(campaign, "campaign")?;
                self.actor(contributor, what)?;
            }
            Action::Assemble { campaign } => entity(campaign, "campaign")?,
            Action::WeatherBet { parties, oracle, expressions, .. } => {
                needs_id()?;
                for p in parties {
                    self.actor(p, what)?;
                }
                let Some(o) = &self.actor(oracle, what)?.oracle else {
                    return Err(ScenarioError::Invalid(format!("{what}: actor {oracle:?} is not an oracle")));
                };
                if let Some(e) = expressions.iter().find(|e| !o.expressions.contains_key(*e)) {
                    return Err(ScenarioError::Invalid(format!("{what}: oracle {oracle:?} has no expression {e:?}")));
                }
            }
            Action::Observe { oracle, purchase, value, .. } => {
                if self.actor(oracle, what)?.oracle.is_none() {
                    return Err(ScenarioError::Invalid(format!("{what}: actor {oracle:?} is not an oracle")));
                }
                match (purchase, value) {
                    (Some(p), None) => entity(p, "purchase")?,
                    (None, Some(_)) => {}
                    _ => return Err(ScenarioError::Invalid(format!("{what}: give exactly one of purchase or value"))),
                }
            }
            Action::SettleBet { bet, claimant } => {
                entity(bet, "weather_bet")?;
                self.actor(claimant, what)?;
            }
        }
        Ok(())
    }

    fn genesis(&self) -> Vec<TxOutput> {
        self.actors
            .iter()
            .flat_map(|a| {
                let pk = KeyPair::from_label(&a.name).public_key();
                a.funds.iter().map(move |v| TxOutput::new(*v, Predicate::pay_to(&pk)))
            })
            .collect()
    }
}

/// A finished run: the report plus the final network and actor state.
pub struct RunOutcome {
    pub report: Report,
    pub network: Network,
    pub world: World,
}

impl RunOutcome {
    pub fn exit_code(&self) -> i32 {
        if self.report.passed {
            EXIT_PASS
        } else {
            EXIT_ASSERTION_FAILED
        }
    }

    /// Blocks of the producer's chain.
    pub fn blocks(&self) -> &[Block] {
        self.network.producer().chain.blocks()
    }

    pub fn datastores(&self) -> &Datastores {
        &self.world.stores
    }
}

/// Runs `scenario` to its horizon. `seed_override` replaces the file's seed.
pub fn run(scenario: &Scenario, seed_override: Option<u64>) -> Result<RunOutcome, ScenarioError> {
    let seed = seed_override.unwrap_or(scenario.seed);
    let config = SimConfig { rng_seed: seed, ..scenario.config.clone() };
    let producer = KeyPair::from_label("block-producer").key_digest();
    let mut network = Network::new(config, scenario.genesis(), producer)?;
    let stores =
        Datastores::new(scenario.stores.iter().enumerate().map(|(i, s)| Store::new(i as StoreId, s.byzantine)));
    let mut world = World::new(scenario, seed, stores);
    world.schedule_steps(&mut network);
    network.run_until(&mut world, SimTime::from_secs_f64(scenario.horizon_s))?;
    let report = report::build(scenario, seed, &network, &world);
    Ok(RunOutcome { report, network, world })
}

/// Loads `source` (a path or bundled name) and runs it.
pub fn run_scenario(source: &str, seed_override: Option<u64>) -> Result<RunOutcome, ScenarioError> {
    run(&load_scenario(source)?, seed_override)
}

#[cfg(test)]
mod tests;
