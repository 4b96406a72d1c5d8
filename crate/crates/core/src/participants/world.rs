//! Round-based driver for one listing and one buyer.
//!
//! One round is one block. Messages queued at the start of a round are
//! delivered during it, recipients ordered by the [`Scheduler`]; anything sent
//! while handling them waits for the next round. Timers due at the current
//! height fire after the deliveries, then the block advances and expired
//! dispute windows settle.

use std::collections::{BTreeMap, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::behavior::{Action, Behavior};
use super::messages::{Envelope, Message, ParticipantId};
use super::{Consumer, Ctx, Device, ExchangeParams, Node, Server, Timer, TimerTag};
use crate::config::{ConfigError, ScenarioConfig};
use crate::crypto::{self, Digest32};
use crate::ledger::{Account, Cid, CallRecord, Ledger, LedgerError, SessionStatus};
use crate::tee_sim::{measure, AttestationRegistry, AttestationReport, ProgramDescriptor, TeeHost};

/// Hard cap on simulated blocks.
pub const MAX_BLOCKS: u64 = 200;

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("device {0} failed remote attestation")]
    Attestation(u32),
    #[error("deployment failed: {0}")]
    Ledger(#[from] LedgerError),
}

/// One line of the run trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub block: u64,
    pub from: String,
    pub to: String,
    pub kind: String,
    pub payload_hash: Digest32,
}

impl Event {
    pub fn line(&self) -> String {
        format!(
            "{} {} {} {} {} {}",
            self.seq,
            self.block,
            self.from,
            self.to,
            self.kind,
            hex::encode(self.payload_hash)
        )
    }
}

/// Picks the delivery order of recipients with pending messages.
pub trait Scheduler {
    fn order(&mut self, block: u64, ready: &[ParticipantId]) -> Vec<ParticipantId>;
}

/// Fixed participant order.
#[derive(Debug, Default, Clone, Copy)]
pub struct RoundRobin;

impl Scheduler for RoundRobin {
    fn order(&mut self, _block: u64, ready: &[ParticipantId]) -> Vec<ParticipantId> {
        ready.to_vec()
    }
}

pub trait Observer {
    fn on_event(&mut self, _world: &World, _event: &Event) {}
    fn on_round_end(&mut self, _world: &World) {}
}

impl Observer for () {}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeOutcome {
    /// Ledger calls excluding contract creation.
    pub contract_calls: usize,
    /// Sessions the consumer paid into.
    pub key_sessions: usize,
    pub total_gas: u64,
    pub reconstructed: usize,
    pub gave_up: bool,
    pub blocks: u64,
    pub stalled: bool,
}

enum Input {
    Start,
    Msg(ParticipantId, Message),
    Timer(TimerTag),
}

pub struct World {
    pub config: ScenarioConfig,
    pub params: ExchangeParams,
    pub cid: Cid,
    pub ledger: Ledger,
    pub tee: TeeHost,
    pub registry: AttestationRegistry,
    pub server: Server,
    pub devices: Vec<Device>,
    pub nodes: Vec<Node>,
    pub consumer: Consumer,
    pub events: Vec<Event>,
    pub stalled: bool,
    inboxes: BTreeMap<ParticipantId, VecDeque<Envelope>>,
    timers: Vec<Timer>,
    next_msg: u64,
    calls_seen: usize,
    started: bool,
}

fn call_hash(c: &CallRecord) -> Digest32 {
    let cid = c.cid.map_or(0, |c| c.0);
    crypto::hash(&[
        c.function.as_bytes(),
        &[c.ok as u8],
        c.error.as_deref().unwrap_or("").as_bytes(),
        &cid.to_be_bytes(),
    ])
}

impl World {
    /// Stage 0: installs the TA on every device, attests them, and deploys
    /// the listing contract.
    pub fn setup(config: &ScenarioConfig, behaviors: &BTreeMap<ParticipantId, Behavior>) -> Result<Self, SetupError> {
        config.validate()?;
        let behavior = |p: ParticipantId| behaviors.get(&p).cloned().unwrap_or_default();
        let (n, t, f, m) = (config.n, config.t, config.f, config.m);
        let group: Vec<u32> = if config.shared_key { (1..=(t - f) as u32).collect() } else { Vec::new() };
        let params = ExchangeParams {
            n,
            t,
            f,
            m,
            merged_query: config.merged_query,
            shared_key: config.shared_key,
            price_per_node: config.price_per_node(),
            timeout_blocks: config.timeout_blocks,
            datum_len: config.datum_size_bytes,
            rule: config.rule(),
            group,
        };

        let mut genesis = BTreeMap::new();
        genesis.insert(Account::consumer(), 2 * config.price());
        genesis.insert(Account::server(), 0);
        for i in 1..=m as u32 {
            genesis.insert(Account::provider(i), 0);
        }
        for j in 1..=n as u32 {
            genesis.insert(Account::node(j), 0);
        }
        let mut ledger = Ledger::new(genesis);

        let mut tee = TeeHost::new(config.seed ^ 0x7465_655f_686f_7374);
        let mut registry = AttestationRegistry::new(measure(&ProgramDescriptor::dexo_ta(), false));
        let raw = config.raw_data();
        let mut devices = Vec::with_capacity(m);
        for (k, raw_i) in raw.into_iter().enumerate() {
            let i = k as u32 + 1;
            let eid = tee.install(ProgramDescriptor::dexo_ta()).map_err(|_| SetupError::Attestation(i))?;
            registry.register(tee.instance(eid).expect("just installed").mpk());
            devices.push(Device::new(i, eid, raw_i, behavior(ParticipantId::Device(i))));
        }
        for d in &devices {
            let quote = tee.resume_attest(d.eid).map_err(|_| SetupError::Attestation(d.index))?;
            if !registry.verify_quote(&quote) {
                return Err(SetupError::Attestation(d.index));
            }
        }

        let server = Server::new(behavior(ParticipantId::Server));
        let mut desc = config.description();
        for action in server.behavior.on("Setup") {
            if let Action::Misdescribe { value_min, value_max } = *action {
                desc.value_min = value_min;
                desc.value_max = value_max;
            }
        }
        let cid = ledger.create_contract(
            &Account::server(),
            (1..=n as u32).map(Account::node).collect(),
            (1..=m as u32).map(Account::provider).collect(),
            config.price(),
            desc,
        )?;
        if config.node_fee_bps > 0 {
            ledger.set_node_fee(&Account::server(), cid, config.node_fee_bps)?;
        }

        let nodes = (1..=n as u32)
            .map(|j| {
                let rng = ChaCha20Rng::seed_from_u64(config.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ u64::from(j));
                Node::new(j, behavior(ParticipantId::Node(j)), params.role_of(j), rng)
            })
            .collect();
        let consumer = Consumer::new(behavior(ParticipantId::Consumer));

        let mut world = Self {
            config: config.clone(),
            params,
            cid,
            ledger,
            tee,
            registry,
            server,
            devices,
            nodes,
            consumer,
            events: Vec::new(),
            stalled: false,
            inboxes: BTreeMap::new(),
            timers: Vec::new(),
            next_msg: 0,
            calls_seen: 0,
            started: false,
        };
        world.log_calls(&mut ());
        Ok(world)
    }

    pub fn block(&self) -> u64 {
        self.ledger.block_height()
    }

    pub fn node(&self, j: u32) -> &Node {
        &self.nodes[j as usize - 1]
    }

    pub fn in_flight(&self) -> impl Iterator<Item = &Envelope> {
        self.inboxes.values().flatten()
    }

    pub fn pending_timers(&self) -> &[Timer] {
        &self.timers
    }

    pub fn finished(&self) -> bool {
        self.started
            && self.inboxes.values().all(VecDeque::is_empty)
            && self.timers.is_empty()
            && self.ledger.total_escrow() == 0
    }

    fn push_event(&mut self, from: String, to: String, kind: String, payload_hash: Digest32, observer: &mut dyn Observer) {
        let event = Event { seq: self.events.len() as u64, block: self.block(), from, to, kind, payload_hash };
        self.events.push(event.clone());
        observer.on_event(self, &event);
    }

    fn log_calls(&mut self, observer: &mut dyn Observer) {
        while self.calls_seen < self.ledger.calls().len() {
            let c = self.ledger.calls()[self.calls_seen].clone();
            self.calls_seen += 1;
            let kind = if c.ok { c.function.clone() } else { format!("{}!", c.function) };
            self.push_event(c.caller.to_string(), "ledger".into(), kind, call_hash(&c), observer);
        }
    }

    fn dispatch(&mut self, to: ParticipantId, input: Input, observer: &mut dyn Observer) {
        let mut outbox = Vec::new();
        let mut timers = Vec::new();
        {
            let mut ctx = Ctx {
                me: to,
                block: self.ledger.block_height(),
                cid: self.cid,
                params: &self.params,
                ledger: &mut self.ledger,
                registry: &self.registry,
                tee: &mut self.tee,
                outbox: &mut outbox,
                timers: &mut timers,
            };
            match (to, input) {
                (ParticipantId::Server, Input::Start) => self.server.start(&mut ctx),
                (ParticipantId::Consumer, Input::Start) => self.consumer.start(&mut ctx),
                (ParticipantId::Server, Input::Msg(from, msg)) => self.server.handle(&mut ctx, from, msg),
                (ParticipantId::Consumer, Input::Msg(from, msg)) => self.consumer.handle(&mut ctx, from, msg),
                (ParticipantId::Consumer, Input::Timer(tag)) => self.consumer.on_timer(&mut ctx, tag),
                (ParticipantId::Device(i), Input::Msg(from, msg)) => {
                    if let Some(d) = self.devices.get_mut(i as usize - 1) {
                        d.handle(&mut ctx, from, msg);
                    }
                }
                (ParticipantId::Node(j), Input::Msg(from, msg)) => {
                    if let Some(node) = self.nodes.get_mut(j as usize - 1) {
                        node.handle(&mut ctx, from, msg);
                    }
                }
                (ParticipantId::Node(j), Input::Timer(tag)) => {
                    if let Some(node) = self.nodes.get_mut(j as usize - 1) {
                        node.on_timer(&mut ctx, tag);
                    }
                }
                _ => {}
            }
        }
        self.log_calls(observer);
        for (from, to, msg) in outbox {
            let env = Envelope { seq: self.next_msg, sent_block: self.block(), from, to, msg };
            self.next_msg += 1;
            self.inboxes.entry(to).or_default().push_back(env);
        }
        self.timers.extend(timers);
    }

    fn start(&mut self, observer: &mut dyn Observer) {
        if !self.started {
            self.started = true;
            self.dispatch(ParticipantId::Server, Input::Start, observer);
            self.dispatch(ParticipantId::Consumer, Input::Start, observer);
        }
    }

    /// Runs one block.
    pub fn round(&mut self, scheduler: &mut dyn Scheduler, observer: &mut dyn Observer) {
        self.start(observer);
        let block = self.block();
        let snapshot: BTreeMap<ParticipantId, usize> =
            self.inboxes.iter().filter(|(_, q)| !q.is_empty()).map(|(&p, q)| (p, q.len())).collect();
        let ready: Vec<ParticipantId> = snapshot.keys().copied().collect();
        for p in scheduler.order(block, &ready) {
            for _ in 0..snapshot.get(&p).copied().unwrap_or(0) {
                let Some(env) = self.inboxes.get_mut(&p).and_then(VecDeque::pop_front) else {
                    break;
                };
                let kind = env.msg.kind().to_string();
                self.push_event(env.from.to_string(), p.to_string(), kind, env.msg.payload_hash(), observer);
                self.dispatch(p, Input::Msg(env.from, env.msg), observer);
            }
        }
        let (due, later): (Vec<Timer>, Vec<Timer>) = std::mem::take(&mut self.timers).into_iter().partition(|t| t.due <= block);
        self.timers = later;
        for timer in due {
            let tag = timer.tag.to_string();
            let hash = crypto::hash(&[tag.as_bytes()]);
            self.push_event(timer.owner.to_string(), timer.owner.to_string(), format!("timer:{tag}"), hash, observer);
            self.dispatch(timer.owner, Input::Timer(timer.tag), observer);
        }
        self.ledger.advance_block(1);
        self.ledger.settle_timeouts(self.cid);
        observer.on_round_end(self);
    }

    /// Runs rounds while `keep_going` holds, up to the block cap.
    pub fn run_while(
        &mut self,
        scheduler: &mut dyn Scheduler,
        observer: &mut dyn Observer,
        mut keep_going: impl FnMut(&World) -> bool,
    ) {
        self.start(observer);
        while !self.finished() && keep_going(self) {
            if self.block() >= MAX_BLOCKS {
                self.stalled = true;
                return;
            }
            self.round(scheduler, observer);
        }
    }

    pub fn run(&mut self, scheduler: &mut dyn Scheduler, observer: &mut dyn Observer) {
        self.run_while(scheduler, observer, |_| true);
    }

    pub fn outcome(&self) -> ExchangeOutcome {
        ExchangeOutcome {
            contract_calls: self.ledger.contract_call_count(),
            key_sessions: self.consumer.accepted.len(),
            total_gas: self.ledger.total_gas(),
            reconstructed: self.consumer.reconstructed.len(),
            gave_up: self.consumer.gave_up,
            blocks: self.block(),
            stalled: self.stalled,
        }
    }

    /// Amount the providers received from the buyer.
    pub fn provider_income(&self) -> u64 {
        self.ledger
            .transfers()
            .iter()
            .filter(|t| !t.refund && t.to.0.starts_with("provider:"))
            .map(|t| t.amount)
            .sum()
    }

    /// Number of the buyer's sessions in `status` at the end of the run.
    pub fn sessions_in(&self, status: SessionStatus) -> usize {
        self.ledger
            .contract(self.cid)
            .and_then(|c| c.buyers.get(&self.consumer.account))
            .map_or(0, |b| b.sessions.values().filter(|s| s.status == status).count())
    }
}

fn in_flight_kind(world: &World, kinds: &[&str]) -> bool {
    world.in_flight().any(|e| kinds.contains(&e.msg.kind()))
}

/// Stage 0.
pub fn stage0_setup(config: &ScenarioConfig, behaviors: &BTreeMap<ParticipantId, Behavior>) -> Result<World, SetupError> {
    World::setup(config, behaviors)
}

/// Stage 1: devices produce attested shares and the server relays them.
/// Returns what each node holds, keyed by `(provider, node)`.
pub fn stage1_produce(
    world: &mut World,
    scheduler: &mut dyn Scheduler,
    observer: &mut dyn Observer,
) -> BTreeMap<(u32, u32), AttestationReport> {
    world.run_while(scheduler, observer, |w| in_flight_kind(w, &["Solicit", "DeviceOutput", "DataShares"]));
    let mut out = BTreeMap::new();
    for node in &world.nodes {
        for r in node.received.iter().flatten() {
            out.insert((r.share.provider_index, node.index), r.clone());
        }
    }
    out
}

/// Stage 2: nodes register `(delta, com)` on the contract.
pub fn stage2_register(world: &mut World, scheduler: &mut dyn Scheduler, observer: &mut dyn Observer) -> usize {
    world.run_while(scheduler, observer, |w| {
        in_flight_kind(w, &["Solicit", "DeviceOutput", "DataShares", "GroupKey"])
    });
    world.nodes.iter().filter(|n| n.initialized).count()
}

/// Stage 3: the consumer's exchange, run to termination.
pub fn stage3_exchange(world: &mut World, scheduler: &mut dyn Scheduler, observer: &mut dyn Observer) -> ExchangeOutcome {
    world.run(scheduler, observer);
    world.outcome()
}
