use std::collections::BTreeMap;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::channels::{ChannelStatus, SpendKind};
use crate::contracts::oracle::BetStatus;
use crate::contracts::EscrowStatus;
use crate::crypto::{digest, Hash};
use crate::datastore::TamperEvent;
use crate::ledger::{audit_chain, Chain, ChainAudit, OutPoint, Predicate};
use crate::simnet::{Network, SimTime};

use super::world::{CampaignResult, Outcome, World};
use super::{Assertion, Scenario};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ChainStats {
    pub height: u64,
    pub confirmed_txs: u64,
    pub total_fees: u64,
    pub tip_hash: Hash,
    pub events_executed: u64,
    pub node_heights: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BalanceRow {
    pub initial: u64,
    #[serde(rename = "final")]
    pub final_balance: u64,
    pub delta: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExchangeRow {
    /// Purchase step id, or `#<n>` by order.
    pub id: String,
    pub requester: String,
    pub sensor: String,
    pub amount: u64,
    pub request_time_s: f64,
    pub payment_txid: Hash,
    pub payment_height: Option<u64>,
    pub payment_fee: u64,
    pub delivery_txid: Option<Hash>,
    pub delivery_height: Option<u64>,
    pub delivery_fee: Option<u64>,
    pub latency_blocks: Option<u64>,
    pub latency_s: Option<f64>,
    pub anchored: Option<bool>,
    /// `delivered`, `failed`, `underpaid` or `pending`.
    pub outcome: String,
    pub error: Option<String>,
    pub plaintext_matches: bool,
    /// Confirmed transactions belonging to this exchange.
    pub chain_txs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelRow {
    pub id: String,
    pub requester: String,
    pub sensor: String,
    pub funding_txid: Hash,
    pub deposit: u64,
    pub status: String,
    pub sequence: u64,
    pub payments: u64,
    pub balance_requester: u64,
    pub balance_sensor: u64,
    pub settlement_fee: u64,
    pub settled_as: Option<SpendKind>,
    pub settled_requester: Option<u64>,
    pub settled_sensor: Option<u64>,
    /// Confirmed transactions that fund or spend the channel output.
    pub chain_txs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct EscrowRow {
    pub id: String,
    pub buyer: String,
    pub seller: String,
    pub mediator: String,
    pub amount: u64,
    pub status: String,
    pub paid_to: Option<String>,
    pub paid_amount: Option<u64>,
    pub confirmed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CampaignRow {
    pub id: String,
    pub entrepreneur: String,
    pub goal: u64,
    pub pledges: usize,
    pub pledged: u64,
    pub dropped_pledges: usize,
    pub status: String,
    pub fee: Option<u64>,
    pub shortfall: Option<u64>,
    pub confirmed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct BetRow {
    pub id: String,
    pub parties: [String; 2],
    pub stakes: [u64; 2],
    pub pot: u64,
    pub status: String,
    pub winner: Option<String>,
    pub paid_amount: Option<u64>,
    pub refusals: u64,
    pub confirmed: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RegistryRow {
    pub name: String,
    pub owner: String,
    pub pays_to: String,
    pub data_type: String,
    pub price: u64,
    pub endpoint: String,
    pub registration_txid: Hash,
    pub last_update_height: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct IgnoredRow {
    pub name: String,
    pub reason: String,
    pub height: u64,
    pub txid: Hash,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StepRow {
    pub index: usize,
    pub id: Option<String>,
    pub action: String,
    pub at_s: f64,
    /// `ok`, `error` or `pending`.
    pub outcome: String,
    pub error: Option<String>,
    pub message: Option<String>,
    pub executed_at_s: Option<f64>,
    pub attempts: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AuditRow {
    pub clean: bool,
    #[serde(flatten)]
    pub detail: ChainAudit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub index: usize,
    pub check: String,
    pub id: Option<String>,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub seed: u64,
    pub horizon_s: f64,
    pub chain: ChainStats,
    pub balances: BTreeMap<String, BalanceRow>,
    pub exchanges: Vec<ExchangeRow>,
    pub channels: Vec<ChannelRow>,
    pub escrows: Vec<EscrowRow>,
    pub campaigns: Vec<CampaignRow>,
    pub bets: Vec<BetRow>,
    pub registry: Vec<RegistryRow>,
    pub registry_ignored: Vec<IgnoredRow>,
    pub flags: BTreeMap<String, u64>,
    pub tamper_events: Vec<TamperEvent>,
    pub audit: AuditRow,
    pub steps: Vec<StepRow>,
    pub assertions: Vec<AssertionResult>,
    pub passed: bool,
    pub trace_digest: Hash,
    /// SHA-256 of this report serialized with `digest` null.
    pub digest: Option<Hash>,
}

impl Report {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn compute_digest(&self) -> Hash {
        let mut bare = self.clone();
        bare.digest = None;
        digest(&serde_json::to_vec(&bare).expect("report serializes"))
    }

    pub fn failed_assertions(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.passed)
    }
}

fn secs(t: SimTime) -> f64 {
    t.as_secs_f64()
}

fn status_name<T: Serialize>(s: &T) -> String {
    serde_json::to_value(s).ok().and_then(|v| v["status"].as_str().map(str::to_string)).unwrap_or_default()
}

/// Value the confirmed spender of `outpoint` pays to `to`.
fn paid_by_spender(chain: &Chain, outpoint: &OutPoint, to: &Predicate) -> Option<u64> {
    let (_, tx) = chain.spender_of(outpoint)?;
    Some(tx.outputs.iter().filter(|o| o.predicate == *to).map(|o| o.value).sum())
}

pub(crate) fn build(scenario: &Scenario, seed: u64, net: &Network, world: &World) -> Report {
    let chain = &net.producer().chain;
    let sim = net.report(world);
    let confirmed = |txid: &Hash| chain.locate(txid).is_some();
    let height_of = |txid: &Hash| chain.locate(txid).map(|(h, _)| h);

    let balances = world
        .actors
        .iter()
        .map(|a| {
            let fin = chain.utxo().balance(&a.keypair.key_digest());
            (
                a.name.clone(),
                BalanceRow { initial: a.initial, final_balance: fin, delta: fin as i64 - a.initial as i64 },
            )
        })
        .collect();

    let mut flags = world.flags.clone();
    let mut exchanges = Vec::new();
    for (n, p) in world.purchases.iter().enumerate() {
        let requester = &world.actors[p.requester];
        let sensor = p.sensor.map(|s| &world.actors[s]);
        let fulfilled = sensor
            .and_then(|s| s.sensor.as_ref())
            .and_then(|s| s.fulfilled.iter().find(|f| f.payment_txid == p.payment_txid));
        let delivered = requester.requester.delivered.iter().find(|d| d.payment_txid == p.payment_txid);
        let failure = requester.requester.failures.iter().rev().find(|f| f.payment_txid == p.payment_txid);
        let underpaid = sensor
            .and_then(|s| s.sensor.as_ref())
            .is_some_and(|s| s.underpaid.iter().any(|u| u.payment_txid == p.payment_txid));
        let fulfill_error = world.fulfill_failures.get(&p.payment_txid);
        let (outcome, error) = if delivered.is_some() {
            ("delivered", None)
        } else if let Some(f) = failure {
            ("failed", Some(f.error.name().to_string()))
        } else if underpaid {
            ("underpaid", None)
        } else if let Some(e) = fulfill_error {
            ("failed", Some(e.clone()))
        } else {
            ("pending", None)
        };
        let payment_height = height_of(&p.payment_txid);
        let delivery_txid = fulfilled.map(|f| f.delivery_txid);
        let delivery_height = delivery_txid.and_then(|t| height_of(&t));
        let delivery_time = delivery_height.and_then(|h| chain.block(h)).map(|b| b.timestamp_us);
        exchanges.push(ExchangeRow {
            id: p.id.clone().unwrap_or_else(|| format!("#{n}")),
            requester: requester.name.clone(),
            sensor: sensor.map_or_else(|| "?".to_string(), |s| s.name.clone()),
            amount: p.amount,
            request_time_s: secs(p.requested_at),
            payment_txid: p.payment_txid,
            payment_height,
            payment_fee: p.payment_fee,
            delivery_txid,
            delivery_height,
            delivery_fee: fulfilled.map(|f| f.fee),
            latency_blocks: delivery_height.zip(payment_height).map(|(d, p)| d - p),
            latency_s: delivery_time.map(|t| (t - p.requested_at.0) as f64 / 1e6),
            anchored: fulfilled.map(|f| f.anchored),
            outcome: outcome.to_string(),
            error,
            plaintext_matches: matches!((delivered, fulfilled), (Some(d), Some(f)) if d.plaintext == f.datum),
            chain_txs: confirmed(&p.payment_txid) as u64 + delivery_txid.is_some_and(|t| confirmed(&t)) as u64,
        });
    }

    let mut channels = Vec::new();
    for (id, e) in &world.channels {
        let ch = &e.channel;
        let spender = chain.spender_of(&ch.id());
        let settled_as = spender.map(|(_, tx)| ch.classify_spend(tx));
        if settled_as == Some(SpendKind::Stale) {
            *flags.entry("stale_settlement_confirmed".into()).or_default() += 1;
        }
        let s = &ch.state;
        channels.push(ChannelRow {
            id: id.clone(),
            requester: world.actor_name(e.requester),
            sensor: world.actor_name(e.sensor),
            funding_txid: ch.funding_txid,
            deposit: s.deposit,
            status: match ch.status {
                ChannelStatus::Open => "open",
                ChannelStatus::Closed { .. } => "closed",
                ChannelStatus::Refunded { .. } => "refunded",
            }
            .to_string(),
            sequence: s.sequence,
            payments: ch.payments,
            balance_requester: s.balance_requester,
            balance_sensor: s.balance_sensor,
            settlement_fee: s.settlement_fee,
            settled_as,
            settled_requester: paid_by_spender(chain, &ch.id(), &Predicate::pay_to(&s.requester)),
            settled_sensor: paid_by_spender(chain, &ch.id(), &Predicate::pay_to(&s.sensor)),
            chain_txs: confirmed(&ch.funding_txid) as u64 + spender.is_some() as u64,
        });
    }

    let escrows = world
        .escrows
        .iter()
        .map(|(id, e)| {
            let a = &e.agreement;
            let txid = match a.status {
                EscrowStatus::Funded => None,
                EscrowStatus::Released { txid } | EscrowStatus::Refunded { txid } => Some(txid),
            };
            EscrowRow {
                id: id.clone(),
                buyer: world.actor_name(e.parties[0]),
                seller: world.actor_name(e.parties[1]),
                mediator: world.actor_name(e.parties[2]),
                amount: a.amount,
                status: status_name(&a.status),
                paid_to: e.paid_to.map(|i| world.actor_name(i)),
                paid_amount: e.paid_to.and_then(|i| {
                    paid_by_spender(chain, &a.outpoint, &Predicate::pay_to(&world.actors[i].keypair.public_key()))
                }),
                confirmed: txid.is_some_and(|t| confirmed(&t)),
            }
        })
        .collect();

    let campaigns = world
        .campaigns
        .iter()
        .map(|(id, c)| {
            let (status, fee, shortfall, txid) = match c.result {
                None => ("open", None, None, None),
                Some(CampaignResult::Funded { txid, fee }) => ("funded", Some(fee), None, Some(txid)),
                Some(CampaignResult::Failed { shortfall }) => ("failed", None, Some(shortfall), None),
            };
            CampaignRow {
                id: id.clone(),
                entrepreneur: world.actor_name(c.entrepreneur),
                goal: c.campaign.goal,
                pledges: c.pledges.len(),
                pledged: c.pledges.iter().map(|(_, p)| p.amount).sum(),
                dropped_pledges: c.dropped.len(),
                status: status.to_string(),
                fee,
                shortfall,
                confirmed: txid.is_some_and(|t| confirmed(&t)),
            }
        })
        .collect();

    let bets = world
        .bets
        .iter()
        .map(|(id, b)| {
            let (winner, txid) = match &b.bet.status {
                BetStatus::Funded => (None, None),
                BetStatus::Settled { winner, txid } => (Some(*winner), Some(*txid)),
            };
            BetRow {
                id: id.clone(),
                parties: [world.actor_name(b.parties[0]), world.actor_name(b.parties[1])],
                stakes: b.stakes,
                pot: b.bet.amount,
                status: status_name(&b.bet.status),
                winner: winner.map(|w| world.name_of_key(&w)),
                paid_amount: winner.and_then(|w| paid_by_spender(chain, &b.bet.pot, &Predicate::pay_to(&w))),
                refusals: b.refusals,
                confirmed: txid.is_some_and(|t| confirmed(&t)),
            }
        })
        .collect();

    let index = &net.producer().registry;
    let registry = index
        .entries()
        .map(|e| RegistryRow {
            name: e.record.name.clone(),
            owner: world.name_of(&e.record.owner_key_digest),
            pays_to: world.name_of(&e.record.payment_address.key_digest),
            data_type: e.record.data_type.clone(),
            price: e.record.price_per_datum,
            endpoint: e.record.endpoint.clone(),
            registration_txid: e.registration_txid,
            last_update_height: e.last_update_height,
        })
        .collect();
    let registry_ignored: Vec<IgnoredRow> = index
        .ignored
        .iter()
        .map(|c| IgnoredRow { name: c.name.clone(), reason: c.reason.to_string(), height: c.height, txid: c.txid })
        .collect();

    let sensors = world.actors.iter().filter_map(|a| a.sensor.as_ref());
    let underpaid: usize = sensors.map(|s| s.underpaid.len()).sum();
    let delivery_failed: usize = world.actors.iter().map(|a| a.requester.failures.len()).sum();
    for (name, count) in [
        ("underpaid", underpaid),
        ("fulfill_failed", world.fulfill_failures.len()),
        ("delivery_failed", delivery_failed),
        ("tamper_events", world.stores.tamper_log.len()),
        ("registry_ignored", registry_ignored.len()),
    ] {
        if count > 0 {
            flags.insert(name.to_string(), count as u64);
        }
    }

    let steps = world
        .steps()
        .iter()
        .zip(&world.step_state)
        .enumerate()
        .map(|(index, (step, st))| StepRow {
            index,
            id: step.id.clone(),
            action: step.action.name().to_string(),
            at_s: step.at,
            outcome: match st.outcome {
                Outcome::Ok => "ok",
                Outcome::Error => "error",
                Outcome::Pending => "pending",
            }
            .to_string(),
            error: st.error.clone(),
            message: st.message.clone(),
            executed_at_s: st.executed_at.map(secs),
            attempts: st.attempts,
        })
        .collect();

    let audit = audit_chain(chain.blocks());
    let mut report = Report {
        scenario: scenario.name.clone(),
        seed,
        horizon_s: scenario.horizon_s,
        chain: ChainStats {
            height: sim.height,
            confirmed_txs: sim.confirmed_txs,
            total_fees: sim.total_fees,
            tip_hash: sim.tip_hash,
            events_executed: sim.events_executed,
            node_heights: net.nodes().iter().map(|n| n.chain.height()).collect(),
        },
        balances,
        exchanges,
        channels,
        escrows,
        campaigns,
        bets,
        registry,
        registry_ignored,
        flags,
        tamper_events: world.stores.tamper_log.clone(),
        audit: AuditRow { clean: audit.is_clean(), detail: audit },
        steps,
        assertions: Vec::new(),
        passed: false,
        trace_digest: sim.trace_digest,
        digest: None,
    };
    let value = serde_json::to_value(&report).expect("report serializes");
    report.assertions = scenario.assertions.iter().enumerate().map(|(i, a)| evaluate(i, a, &value)).collect();
    report.passed = report.assertions.iter().all(|a| a.passed);
    report.digest = Some(report.compute_digest());
    report
}

/// The object an assertion inspects.
fn target<'a>(a: &Assertion, report: &'a Value) -> Result<&'a Value, String> {
    let id = a.id.as_deref().unwrap_or_default();
    let rows = |section: &str, key: &str| {
        report[section]
            .as_array()
            .and_then(|rows| rows.iter().find(|r| r[key].as_str() == Some(id)))
            .ok_or_else(|| format!("no {} row {id:?}", a.check))
    };
    match a.check.as_str() {
        "balance" => report["balances"].get(id).ok_or_else(|| format!("no balance for {id:?}")),
        "exchange" => rows("exchanges", "id"),
        "channel" => rows("channels", "id"),
        "escrow" => rows("escrows", "id"),
        "campaign" => rows("campaigns", "id"),
        "bet" => rows("bets", "id"),
        "registry" => rows("registry", "name"),
        "step" => rows("steps", "id"),
        "chain" | "audit" | "flags" => Ok(&report[a.check.as_str()]),
        other => Err(format!("unknown check {other:?}")),
    }
}

/// Equality, except that numbers compare by value and `{"min", "max"}`
/// objects bound a number.
fn matches(expected: &Value, actual: &Value) -> bool {
    if let Value::Object(m) = expected {
        if !m.is_empty() && m.keys().all(|k| k == "min" || k == "max") {
            let Some(x) = actual.as_f64() else { return false };
            return m.get("min").and_then(Value::as_f64).is_none_or(|lo| x >= lo)
                && m.get("max").and_then(Value::as_f64).is_none_or(|hi| x <= hi);
        }
    }
    match (expected.as_f64(), actual.as_f64()) {
        (Some(e), Some(x)) => e == x,
        _ => expected == actual,
    }
}

fn evaluate(index: usize, a: &Assertion, report: &Value) -> AssertionResult {
    let result = |passed, detail| AssertionResult { index, check: a.check.clone(), id: a.id.clone(), passed, detail };
    let obj = match target(a, report) {
        Ok(v) => v,
        Err(e) => return result(false, e),
    };
    let mut mismatches = Vec::new();
    let mut seen = Map::new();
    for (field, expected) in &a.expect {
        // flags absent from the report are zero
        let actual = match obj.get(field) {
            Some(v) => v.clone(),
            None if a.check == "flags" => Value::from(0),
            None => Value::Null,
        };
        if !matches(expected, &actual) {
            mismatches.push(format!("{field}: expected {expected}, got {actual}"));
        }
        seen.insert(field.clone(), actual);
    }
    if mismatches.is_empty() {
        result(true, Value::Object(seen).to_string())
    } else {
        result(false, mismatches.join("; "))
    }
}
