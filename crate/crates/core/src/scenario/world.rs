use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;

use crate::channels::{
    close_channel, open_channel, refund_after_expiry, settle_state, Channel, ChannelError, ChannelState,
};
use crate::contracts::oracle::{fund_bet, settle_bet, WeatherBet};
use crate::contracts::{
    assemble_assurance, escrow_release, fund_escrow, make_pledge, mediate, Campaign, ContractError, EscrowAgreement,
    OracleService, Pledge,
};
use crate::crypto::{Hash, KeyDigest, KeyPair, PublicKey};
use crate::datastore::Datastores;
use crate::exchange::{
    detect_payment, fulfill, initiate_purchase, receive_datum, ExchangeError, RequesterActor, SensorActor,
};
use crate::ledger::{Predicate, Transaction, TxInput, TxOutput};
use crate::payload::Payload;
use crate::registry::{register_sensor, submit_claim, update_record, RegistryError, SensorRecord};
use crate::simnet::{subsystem_rng, ActorId, Application, Network, NodeId, SimTime};
use crate::wallet::FeePolicy;

use super::{Action, Scenario, SensorSpec, Step};

const STEP_DRIVER: ActorId = 0;
const SUBSCRIPTIONS: ActorId = 1;

pub(crate) enum StepError {
    /// Waiting on chain state; retried at the next block.
    NotReady(String),
    Failed {
        name: String,
        message: String,
    },
}

impl StepError {
    fn failed(name: &str, message: impl ToString) -> StepError {
        StepError::Failed { name: name.to_string(), message: message.to_string() }
    }
}

impl From<ExchangeError> for StepError {
    fn from(e: ExchangeError) -> Self {
        StepError::failed(e.name(), &e)
    }
}

impl From<ChannelError> for StepError {
    fn from(e: ChannelError) -> Self {
        match e {
            ChannelError::FundingUnconfirmed => StepError::NotReady(e.to_string()),
            ChannelError::Ledger(ref v) if v.name() == "TimelockNotExpired" => StepError::NotReady(e.to_string()),
            _ => StepError::failed(e.name(), &e),
        }
    }
}

impl From<ContractError> for StepError {
    fn from(e: ContractError) -> Self {
        match e {
            ContractError::Unconfirmed(_) => StepError::NotReady(e.to_string()),
            _ => StepError::failed(e.name(), &e),
        }
    }
}

impl From<RegistryError> for StepError {
    fn from(e: RegistryError) -> Self {
        match e {
            RegistryError::UnknownName(_) => StepError::NotReady(e.to_string()),
            _ => StepError::failed(e.name(), &e),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Outcome {
    Pending,
    Ok,
    Error,
}

#[derive(Clone, Debug)]
pub(crate) struct StepState {
    pub outcome: Outcome,
    pub error: Option<String>,
    pub message: Option<String>,
    pub executed_at: Option<SimTime>,
    pub attempts: u64,
}

pub(crate) struct ActorState {
    pub name: String,
    pub keypair: KeyPair,
    pub node: NodeId,
    pub unresponsive: bool,
    pub initial: u64,
    pub requester: RequesterActor,
    pub sensor: Option<SensorActor>,
    pub sensor_spec: Option<SensorSpec>,
    pub oracle: Option<OracleService>,
}

pub(crate) struct Purchase {
    pub id: Option<String>,
    pub requester: usize,
    pub sensor: Option<usize>,
    pub amount: u64,
    pub payment_txid: Hash,
    pub payment_fee: u64,
    pub requested_at: SimTime,
}

pub(crate) struct ChannelEntry {
    pub channel: Channel,
    pub requester: usize,
    pub sensor: usize,
    /// Every signed state, indexed by sequence.
    pub history: Vec<ChannelState>,
}

struct Subscription {
    channel: String,
    amount: u64,
    interval: SimTime,
    remaining: u64,
}

pub(crate) struct EscrowEntry {
    pub agreement: EscrowAgreement,
    pub parties: [usize; 3],
    pub paid_to: Option<usize>,
}

pub(crate) enum CampaignResult {
    Funded { txid: Hash, fee: u64 },
    Failed { shortfall: u64 },
}

pub(crate) struct CampaignEntry {
    pub campaign: Campaign,
    pub entrepreneur: usize,
    pub pledges: Vec<(usize, Pledge)>,
    pub dropped: Vec<(usize, Pledge)>,
    pub result: Option<CampaignResult>,
}

pub(crate) struct BetEntry {
    pub bet: WeatherBet,
    pub parties: [usize; 2],
    pub stakes: [u64; 2],
    pub oracle: usize,
    pub refusals: u64,
}

/// Actor and contract state of a scenario run; drives steps from the event loop.
pub struct World {
    pub(crate) actors: Vec<ActorState>,
    by_name: BTreeMap<String, usize>,
    pub(crate) stores: Datastores,
    fee: FeePolicy,
    rng: ChaCha20Rng,
    steps: Vec<Step>,
    pub(crate) step_state: Vec<StepState>,
    waiting: BTreeSet<usize>,
    pub(crate) purchases: Vec<Purchase>,
    pub(crate) channels: BTreeMap<String, ChannelEntry>,
    subscriptions: Vec<Subscription>,
    pub(crate) escrows: BTreeMap<String, EscrowEntry>,
    pub(crate) campaigns: BTreeMap<String, CampaignEntry>,
    pub(crate) bets: BTreeMap<String, BetEntry>,
    pub(crate) flags: BTreeMap<String, u64>,
    pub(crate) fulfill_failures: BTreeMap<Hash, String>,
}

impl World {
    pub(crate) fn new(scenario: &Scenario, seed: u64, stores: Datastores) -> World {
        let actors: Vec<ActorState> = scenario
            .actors
            .iter()
            .map(|a| {
                let keypair = KeyPair::from_label(&a.name);
                let mut requester = RequesterActor::new(keypair.clone(), a.node);
                requester.confirmations = a.confirmations;
                requester.fee = scenario.fee;
                let sensor = a.sensor.as_ref().map(|s| {
                    let mut actor = SensorActor::new(keypair.clone(), a.node, s.price, s.source.clone());
                    actor.confirmations = s.confirmations;
                    actor.fee = scenario.fee;
                    if let Some(oc) = &s.off_chain {
                        actor.off_chain = oc.clone();
                    }
                    actor
                });
                let oracle = a.oracle.as_ref().map(|o| {
                    let mut svc = OracleService::new(keypair.clone());
                    for (id, text) in &o.expressions {
                        svc.add_expression(id, text).expect("checked at load");
                    }
                    svc
                });
                ActorState {
                    name: a.name.clone(),
                    keypair,
                    node: a.node,
                    unresponsive: a.unresponsive,
                    initial: a.funds.iter().sum(),
                    requester,
                    sensor,
                    sensor_spec: a.sensor.clone(),
                    oracle,
                }
            })
            .collect();
        let by_name = actors.iter().enumerate().map(|(i, a)| (a.name.clone(), i)).collect();
        World {
            actors,
            by_name,
            stores,
            fee: scenario.fee,
            rng: subsystem_rng(seed, "encryption"),
            steps: scenario.steps.clone(),
            step_state: vec![
                StepState {
                    outcome: Outcome::Pending,
                    error: None,
                    message: None,
                    executed_at: None,
                    attempts: 0
                };
                scenario.steps.len()
            ],
            waiting: BTreeSet::new(),
            purchases: Vec::new(),
            channels: BTreeMap::new(),
            subscriptions: Vec::new(),
            escrows: BTreeMap::new(),
            campaigns: BTreeMap::new(),
            bets: BTreeMap::new(),
            flags: BTreeMap::new(),
            fulfill_failures: BTreeMap::new(),
        }
    }

    pub(crate) fn schedule_steps(&self, net: &mut Network) {
        for (i, s) in self.steps.iter().enumerate() {
            net.schedule_timer(SimTime::from_secs_f64(s.at), STEP_DRIVER, i as u64);
        }
    }

    pub(crate) fn steps(&self) -> &[Step] {
        &self.steps
    }

    pub(crate) fn actor_name(&self, i: usize) -> String {
        self.actors[i].name.clone()
    }

    /// Actor name for a key digest, or its hex form.
    pub(crate) fn name_of(&self, kd: &KeyDigest) -> String {
        self.actors.iter().find(|a| a.keypair.key_digest() == *kd).map_or_else(|| hex::encode(kd.0), |a| a.name.clone())
    }

    pub(crate) fn name_of_key(&self, pk: &PublicKey) -> String {
        self.name_of(&pk.key_digest())
    }

    fn idx(&self, name: &str) -> usize {
        self.by_name[name]
    }

    fn flag(&mut self, name: &str) {
        *self.flags.entry(name.to_string()).or_default() += 1;
    }

    fn run_step(&mut self, net: &mut Network, i: usize) {
        if self.step_state[i].outcome != Outcome::Pending {
            return;
        }
        self.step_state[i].attempts += 1;
        let result = self.execute(net, i);
        let st = &mut self.step_state[i];
        match result {
            Ok(()) => {
                st.outcome = Outcome::Ok;
                st.error = None;
                st.message = None;
                st.executed_at = Some(net.now());
                self.waiting.remove(&i);
            }
            Err(StepError::NotReady(m)) => {
                st.message = Some(m);
                self.waiting.insert(i);
            }
            Err(StepError::Failed { name, message }) => {
                st.outcome = Outcome::Error;
                st.error = Some(name);
                st.message = Some(message);
                st.executed_at = Some(net.now());
                self.waiting.remove(&i);
            }
        }
    }

    fn sensor_record(&self, a: usize, name: Option<&str>, price: Option<u64>) -> SensorRecord {
        let actor = &self.actors[a];
        let spec = actor.sensor_spec.as_ref().expect("checked at load");
        SensorRecord::new(
            &actor.keypair,
            name.unwrap_or(&spec.name),
            &spec.data_type,
            price.unwrap_or(spec.price),
            &spec.endpoint,
        )
    }

    /// Plaintext delivered for purchase `id`.
    fn delivered(&self, id: &str) -> Result<Vec<u8>, StepError> {
        let p = self.purchases.iter().find(|p| p.id.as_deref() == Some(id));
        let Some(p) = p else { return Err(StepError::NotReady(format!("purchase {id:?} not made yet"))) };
        self.actors[p.requester]
            .requester
            .delivered
            .iter()
            .find(|d| d.payment_txid == p.payment_txid)
            .map(|d| d.plaintext.clone())
            .ok_or_else(|| StepError::NotReady(format!("purchase {id:?} not delivered yet")))
    }

    fn execute(&mut self, net: &mut Network, i: usize) -> Result<(), StepError> {
        let step = self.steps[i].clone();
        let fee = self.fee;
        let awaiting = |what: &str, id: &str| StepError::NotReady(format!("{what} {id:?} not created yet"));
        match &step.action {
            Action::Register { actor, name, price } => {
                let a = self.idx(actor);
                let record = self.sensor_record(a, name.as_deref(), *price);
                register_sensor(net, self.actors[a].node, &self.actors[a].keypair, &record, fee)?;
            }
            Action::UpdateRecord { actor, name, price, endpoint, force } => {
                let a = self.idx(actor);
                let (kp, node) = (&self.actors[a].keypair, self.actors[a].node);
                let current = net.node(node).registry.lookup(name).cloned();
                let base = match (current, &self.actors[a].sensor_spec) {
                    (Ok(r), _) => r,
                    (Err(_), Some(_)) => self.sensor_record(a, Some(name), None),
                    (Err(e), None) => return Err(e.into()),
                };
                let record = SensorRecord::new(
                    kp,
                    name,
                    &base.data_type,
                    price.unwrap_or(base.price_per_datum),
                    endpoint.as_deref().unwrap_or(&base.endpoint),
                );
                if *force {
                    submit_claim(net, node, kp, Payload::Update(record), fee)?;
                } else {
                    update_record(net, node, kp, &record, fee)?;
                }
            }
            Action::Purchase { requester, sensor, name, amount } => {
                let r = self.idx(requester);
                let record = match (sensor, name) {
                    (Some(s), _) => self.sensor_record(self.idx(s), None, None),
                    (None, Some(n)) => net.node(self.actors[r].node).registry.lookup(n).cloned()?,
                    (None, None) => unreachable!("checked at load"),
                };
                let sensor =
                    self.actors.iter().position(|a| a.keypair.key_digest() == record.payment_address.key_digest);
                let amount = amount.unwrap_or(record.price_per_datum);
                let tx = initiate_purchase(&mut self.actors[r].requester, &record, amount, net)?;
                let payment_fee = self.actors[r].requester.outstanding.last().map_or(0, |o| o.fee);
                self.purchases.push(Purchase {
                    id: step.id.clone(),
                    requester: r,
                    sensor,
                    amount,
                    payment_txid: tx.txid(),
                    payment_fee,
                    requested_at: net.now(),
                });
            }
            Action::OpenChannel { requester, sensor, deposit, expiry_blocks } => {
                let (r, s) = (self.idx(requester), self.idx(sensor));
                let node = self.actors[r].node;
                let expiry = net.node(node).chain.height() + expiry_blocks;
                let signer = (!self.actors[s].unresponsive).then_some(&self.actors[s].keypair);
                let channel = open_channel(
                    net,
                    node,
                    &self.actors[r].keypair,
                    &self.actors[s].keypair.public_key(),
                    signer,
                    *deposit,
                    expiry,
                    fee,
                )?;
                let history = vec![channel.state.clone()];
                self.channels
                    .insert(step.id.clone().unwrap(), ChannelEntry { channel, requester: r, sensor: s, history });
            }
            Action::Subscribe { channel, amount, interval_s, count } => {
                let entry = self.channels.get(channel).ok_or_else(|| awaiting("channel", channel))?;
                entry.channel.require_funded(net.node(self.actors[entry.requester].node))?;
                let interval = SimTime::from_secs_f64(*interval_s);
                if *count > 0 {
                    net.schedule_timer(
                        SimTime(net.now().0 + interval.0),
                        SUBSCRIPTIONS,
                        self.subscriptions.len() as u64,
                    );
                }
                self.subscriptions.push(Subscription {
                    channel: channel.clone(),
                    amount: *amount,
                    interval,
                    remaining: *count,
                });
            }
            Action::CloseChannel { channel } => {
                let entry = self.channels.get_mut(channel).ok_or_else(|| awaiting("channel", channel))?;
                close_channel(&mut entry.channel, net, self.actors[entry.requester].node)?;
            }
            Action::SettleStale { channel, sequence } => {
                let entry = self.channels.get_mut(channel).ok_or_else(|| awaiting("channel", channel))?;
                let Some(state) = entry.history.get(*sequence as usize).cloned() else {
                    return Err(StepError::failed("UnknownState", format!("no state with sequence {sequence}")));
                };
                let result = settle_state(&mut entry.channel, &state, net, self.actors[entry.sensor].node);
                if let Err(ChannelError::StaleState { .. }) = result {
                    self.flag("stale_settlement_refused");
                }
                result?;
            }
            Action::RefundChannel { channel } => {
                let entry = self.channels.get_mut(channel).ok_or_else(|| awaiting("channel", channel))?;
                let r = &self.actors[entry.requester];
                refund_after_expiry(&mut entry.channel, &r.keypair, net, r.node, fee)?;
            }
            Action::FundEscrow { buyer, seller, mediator, amount } => {
                let parties = [self.idx(buyer), self.idx(seller), self.idx(mediator)];
                let b = &self.actors[parties[0]];
                let agreement = fund_escrow(
                    net,
                    b.node,
                    &b.keypair,
                    &self.actors[parties[1]].keypair.public_key(),
                    &self.actors[parties[2]].keypair.public_key(),
                    *amount,
                    fee,
                )?;
                self.escrows.insert(step.id.clone().unwrap(), EscrowEntry { agreement, parties, paid_to: None });
            }
            Action::EscrowRelease { escrow, signers, to } => {
                let signers: Vec<usize> = signers.iter().map(|n| self.idx(n)).collect();
                let to = self.idx(to);
                self.release(net, escrow, &signers, to)?;
            }
            Action::EscrowMediate { escrow, purchase, datum, valid } => {
                let datum = match (purchase, datum) {
                    (Some(p), _) => self.delivered(p)?,
                    (None, Some(d)) => d.as_bytes().to_vec(),
                    (None, None) => unreachable!("checked at load"),
                };
                let entry = self.escrows.get(escrow).ok_or_else(|| awaiting("escrow", escrow))?;
                let winner = mediate(&entry.agreement, &datum, &(valid[0]..=valid[1]));
                let to = if winner == entry.agreement.seller { entry.parties[1] } else { entry.parties[0] };
                let mediator = entry.parties[2];
                self.release(net, escrow, &[mediator, to], to)?;
            }
            Action::Campaign { entrepreneur, goal } => {
                let e = self.idx(entrepreneur);
                let campaign = Campaign { entrepreneur: self.actors[e].keypair.key_digest(), goal: *goal };
                self.campaigns.insert(
                    step.id.clone().unwrap(),
                    CampaignEntry { campaign, entrepreneur: e, pledges: Vec::new(), dropped: Vec::new(), result: None },
                );
            }
            Action::Pledge { campaign, contributor, amount } => {
                let c = self.idx(contributor);
                let exclude: Vec<_> = self
                    .campaigns
                    .values()
                    .flat_map(|e| e.pledges.iter().chain(&e.dropped))
                    .filter(|(who, _)| *who == c)
                    .map(|(_, p)| p.outpoint())
                    .collect();
                let entry = self.campaigns.get_mut(campaign).ok_or_else(|| awaiting("campaign", campaign))?;
                let a = &self.actors[c];
                let pledge = make_pledge(net.node(a.node), &a.keypair, &entry.campaign, *amount, &exclude)?;
                entry.pledges.push((c, pledge));
            }
            Action::DoubleSpendPledge { campaign, contributor } => {
                let c = self.idx(contributor);
                let entry = self.campaigns.get(campaign).ok_or_else(|| awaiting("campaign", campaign))?;
                let Some((_, pledge)) = entry.pledges.iter().find(|(who, _)| *who == c) else {
                    return Err(StepError::failed("NoPledge", format!("{contributor} has no pledge in {campaign}")));
                };
                let a = &self.actors[c];
                let value = net
                    .node(a.node)
                    .chain
                    .utxo()
                    .get(&pledge.outpoint())
                    .map(|e| e.output.value)
                    .ok_or_else(|| StepError::failed("MissingUtxo", "pledged output already spent"))?;
                let build = |f: u64| {
                    let mut tx = Transaction {
                        inputs: vec![TxInput::spending(pledge.outpoint())],
                        outputs: vec![TxOutput::new(
                            value.saturating_sub(f),
                            Predicate::pay_to(&a.keypair.public_key()),
                        )],
                        lock_height: None,
                    };
                    tx.add_signature(0, &a.keypair);
                    tx
                };
                let tx = build(fee.fee_for(build(0).serialized_size()));
                net.submit(a.node, tx).map_err(|e| StepError::failed(e.name(), &e))?;
            }
            Action::Assemble { campaign } => {
                let entry = self.campaigns.get_mut(campaign).ok_or_else(|| awaiting("campaign", campaign))?;
                let node = self.actors[entry.entrepreneur].node;
                let mut dropped = 0;
                let result = loop {
                    let pledges: Vec<Pledge> = entry.pledges.iter().map(|(_, p)| p.clone()).collect();
                    match assemble_assurance(&pledges, &entry.campaign, net.node(node)) {
                        Err(ContractError::DoubleSpentPledge { outpoint }) => {
                            let pos = entry.pledges.iter().position(|(_, p)| p.outpoint() == outpoint).unwrap();
                            entry.dropped.push(entry.pledges.remove(pos));
                            dropped += 1;
                        }
                        other => break other,
                    }
                };
                let outcome = match result {
                    Ok((tx, fee_paid)) => match net.submit(node, tx) {
                        Ok(txid) => {
                            entry.result = Some(CampaignResult::Funded { txid, fee: fee_paid });
                            Ok(())
                        }
                        Err(e) => Err(ContractError::from(e)),
                    },
                    Err(e) => {
                        if let ContractError::InsufficientPledges { shortfall } = e {
                            entry.result = Some(CampaignResult::Failed { shortfall });
                        }
                        Err(e)
                    }
                };
                for _ in 0..dropped {
                    self.flag("double_spent_pledge");
                }
                outcome?;
            }
            Action::WeatherBet { parties, stakes, oracle, expressions } => {
                let p = [self.idx(&parties[0]), self.idx(&parties[1])];
                let o = self.idx(oracle);
                let bet = fund_bet(
                    net,
                    self.actors[p[0]].node,
                    [&self.actors[p[0]].keypair, &self.actors[p[1]].keypair],
                    *stakes,
                    &self.actors[o].keypair.public_key(),
                    expressions.clone(),
                    fee,
                )?;
                self.bets.insert(
                    step.id.clone().unwrap(),
                    BetEntry { bet, parties: p, stakes: *stakes, oracle: o, refusals: 0 },
                );
            }
            Action::Observe { oracle, fact, purchase, value } => {
                let o = self.idx(oracle);
                let datum = match (purchase, value) {
                    (Some(p), _) => Some(self.delivered(p)?),
                    _ => None,
                };
                let svc = self.actors[o].oracle.as_mut().expect("checked at load");
                match (datum, value) {
                    (Some(d), _) => {
                        svc.observe(fact, &d).ok_or_else(|| StepError::failed("NoReading", "datum holds no number"))?;
                    }
                    (None, Some(v)) => svc.set_fact(fact, *v),
                    (None, None) => unreachable!("checked at load"),
                }
            }
            Action::SettleBet { bet, claimant } => {
                let c = self.idx(claimant);
                let entry = self.bets.get_mut(bet).ok_or_else(|| awaiting("bet", bet))?;
                let Some(index) = entry.parties.iter().position(|p| *p == c) else {
                    return Err(StepError::failed("NotAParty", format!("{claimant} is not a party to {bet}")));
                };
                let svc = self.actors[entry.oracle].oracle.as_ref().expect("checked at load");
                let a = &self.actors[c];
                let settled = settle_bet(&mut entry.bet, index, &a.keypair, svc, net, a.node, fee)?;
                if settled.is_none() {
                    entry.refusals += 1;
                    self.flag("oracle_refused");
                    return Err(StepError::failed("OracleRefused", "oracle expression is false"));
                }
            }
        }
        Ok(())
    }

    fn release(&mut self, net: &mut Network, escrow: &str, signers: &[usize], to: usize) -> Result<(), StepError> {
        let entry = self
            .escrows
            .get_mut(escrow)
            .ok_or_else(|| StepError::NotReady(format!("escrow {escrow:?} not created yet")))?;
        let kps: Vec<&KeyPair> = signers.iter().map(|s| &self.actors[*s].keypair).collect();
        let node = self.actors[signers.first().copied().unwrap_or(to)].node;
        let dest = self.actors[to].keypair.public_key();
        escrow_release(&mut entry.agreement, &kps, &dest, net, node, self.fee)?;
        entry.paid_to = Some(to);
        Ok(())
    }

    fn tick(&mut self, net: &mut Network, i: usize) {
        let sub = &mut self.subscriptions[i];
        let entry = self.channels.get_mut(&sub.channel).expect("subscriptions follow channels");
        let (r, s) = (&self.actors[entry.requester], &self.actors[entry.sensor]);
        let paid = if s.unresponsive {
            false
        } else {
            match entry.channel.pay(net.node(r.node), sub.amount, &r.keypair, &s.keypair) {
                Ok(state) => {
                    entry.history.push(state.clone());
                    true
                }
                Err(_) => false,
            }
        };
        sub.remaining -= 1;
        if sub.remaining > 0 {
            net.schedule_timer(SimTime(net.now().0 + sub.interval.0), SUBSCRIPTIONS, i as u64);
        }
        if !paid {
            self.flag("channel_payment_failed");
        }
    }

    fn serve_actors(&mut self, net: &mut Network, node: NodeId) {
        for a in 0..self.actors.len() {
            if self.actors[a].node != node {
                continue;
            }
            let actor = &mut self.actors[a];
            if let (Some(sensor), false) = (actor.sensor.as_mut(), actor.unresponsive) {
                detect_payment(sensor, net.node(node));
                for notice in sensor.pending.clone() {
                    if let Err(e) = fulfill(sensor, &notice, net, &mut self.stores, &mut self.rng) {
                        self.fulfill_failures.entry(notice.payment_txid).or_insert_with(|| e.name().to_string());
                    }
                }
            }
            receive_datum(&mut actor.requester, net.node(node), &mut self.stores);
        }
    }
}

impl Application for World {
    fn on_timer(&mut self, net: &mut Network, actor: ActorId, tag: u64) {
        match actor {
            STEP_DRIVER => self.run_step(net, tag as usize),
            SUBSCRIPTIONS => self.tick(net, tag as usize),
            _ => {}
        }
    }

    fn on_block(&mut self, net: &mut Network, node: NodeId, _height: u64) {
        self.serve_actors(net, node);
        for i in self.waiting.clone() {
            self.run_step(net, i);
        }
    }

    fn accounts(&self) -> Vec<(String, KeyDigest)> {
        self.actors.iter().map(|a| (a.name.clone(), a.keypair.key_digest())).collect()
    }
}
