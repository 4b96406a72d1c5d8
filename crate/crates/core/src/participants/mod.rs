//! Participant state machines and the world that drives them.
//!
//! Every participant reacts to one delivered message or timer at a time and
//! touches shared state only through [`Ctx`]: outgoing messages, timers, the
//! ledger and the TEE host.

pub mod behavior;
pub mod consumer;
pub mod device;
pub mod messages;
pub mod node;
pub mod server;
pub mod world;

use serde::{Deserialize, Serialize};

pub use behavior::{Action, Behavior, Rule};
pub use consumer::Consumer;
pub use device::Device;
pub use messages::{Envelope, Message, ParticipantId};
pub use node::{GroupRole, Node};
pub use server::Server;
pub use world::{Event, ExchangeOutcome, Observer, RoundRobin, Scheduler, World};

use crate::ledger::{Cid, ContractState, Ledger};
use crate::tee_sim::{AttestationRegistry, PreprocessRule, TeeHost};

/// Protocol parameters every participant can see.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeParams {
    pub n: usize,
    pub t: usize,
    pub f: usize,
    pub m: usize,
    pub merged_query: bool,
    pub shared_key: bool,
    pub price_per_node: u64,
    pub timeout_blocks: u64,
    pub datum_len: usize,
    pub rule: PreprocessRule,
    /// Priority group, leader first. Empty without the shared key.
    pub group: Vec<u32>,
}

impl ExchangeParams {
    pub fn group_leader(&self) -> Option<u32> {
        self.group.first().copied()
    }

    pub fn role_of(&self, node: u32) -> GroupRole {
        match self.group.iter().position(|&g| g == node) {
            Some(0) => GroupRole::Leader,
            Some(_) => GroupRole::Member { leader: self.group[0] },
            None => GroupRole::None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TimerTag {
    Poll,
    DeliveryWait,
    KeyWait(u32),
    Finalize,
}

impl std::fmt::Display for TimerTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Poll => f.write_str("poll"),
            Self::DeliveryWait => f.write_str("delivery_wait"),
            Self::KeyWait(r) => write!(f, "key_wait.{r}"),
            Self::Finalize => f.write_str("finalize"),
        }
    }
}

/// Timer request: fire `tag` for `owner` once the block height reaches `due`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Timer {
    pub due: u64,
    pub owner: ParticipantId,
    pub tag: TimerTag,
}

pub struct Ctx<'a> {
    pub me: ParticipantId,
    pub block: u64,
    pub cid: Cid,
    pub params: &'a ExchangeParams,
    pub ledger: &'a mut Ledger,
    pub registry: &'a AttestationRegistry,
    pub tee: &'a mut TeeHost,
    pub outbox: &'a mut Vec<(ParticipantId, ParticipantId, Message)>,
    pub timers: &'a mut Vec<Timer>,
}

impl Ctx<'_> {
    pub fn send(&mut self, to: ParticipantId, msg: Message) {
        self.outbox.push((self.me, to, msg));
    }

    pub fn set_timer(&mut self, delay: u64, tag: TimerTag) {
        self.timers.push(Timer { due: self.block + delay.max(1), owner: self.me, tag });
    }

    /// Unmetered view of the public contract storage.
    pub fn contract(&self) -> &ContractState {
        self.ledger.contract(self.cid).expect("contract deployed at setup")
    }
}
