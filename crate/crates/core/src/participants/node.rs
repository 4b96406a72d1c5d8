//! Oracle node: verifies attested shares, registers its encrypted blob and
//! runs one fair-exchange session per buyer.

use rand_chacha::ChaCha20Rng;

use super::behavior::{Action, Behavior};
use super::messages::{Message, ParticipantId};
use super::{Ctx, TimerTag};
use crate::crypto::{self, merkle, Commitment, KeyMaterial, MerkleRoot};
use crate::encoding;
use crate::ledger::{Account, ReadValue, SessionStatus};
use crate::tee_sim::{attest_reports, AttestationReport};

/// Blocks a priority-group member waits for the group key before falling
/// back to a key of its own.
pub const GROUP_KEY_WAIT: u64 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GroupRole {
    None,
    Leader,
    Member { leader: u32 },
}

#[derive(Debug)]
pub struct Node {
    pub index: u32,
    pub account: Account,
    pub behavior: Behavior,
    pub group: GroupRole,
    rng: ChaCha20Rng,
    /// Attested shares as received, in provider order.
    pub received: Option<Vec<AttestationReport>>,
    pub attestation_failed: bool,
    pub key: Option<KeyMaterial>,
    /// Plaintext blob the node committed to.
    pub blob: Vec<u8>,
    pub z: Vec<u8>,
    delivered_z: Option<Vec<u8>>,
    pub delta: Option<MerkleRoot>,
    pub com: Option<Commitment>,
    pub initialized: bool,
    pub revealed: bool,
}

impl Node {
    pub fn new(index: u32, behavior: Behavior, group: GroupRole, rng: ChaCha20Rng) -> Self {
        Self {
            index,
            account: Account::node(index),
            behavior,
            group,
            rng,
            received: None,
            attestation_failed: false,
            key: None,
            blob: Vec::new(),
            z: Vec::new(),
            delivered_z: None,
            delta: None,
            com: None,
            initialized: false,
            revealed: false,
        }
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_>, from: ParticipantId, msg: Message) {
        let kind = msg.kind();
        if self.behavior.has(kind, |a| *a == Action::Drop) {
            return;
        }
        match msg {
            Message::DataShares { reports } if from == ParticipantId::Server => self.on_data_shares(ctx, reports),
            Message::GroupKey { key } => {
                if let GroupRole::Member { leader } = self.group {
                    if from == ParticipantId::Node(leader) && self.key.is_none() {
                        self.key = Some(key);
                        self.register(ctx);
                    }
                }
            }
            Message::NoticeBuy { buyer } if from == ParticipantId::Consumer => self.on_notice_buy(ctx, buyer),
            Message::NoticeAccept { buyer } if from == ParticipantId::Consumer => self.on_notice_accept(ctx, buyer),
            _ => {}
        }
    }

    fn on_data_shares(&mut self, ctx: &mut Ctx<'_>, mut reports: Vec<AttestationReport>) {
        if self.received.is_some() || self.attestation_failed {
            return;
        }
        let m = ctx.params.m;
        reports.sort_by_key(|r| r.share.provider_index);
        let providers_ok = reports.len() == m
            && reports.iter().enumerate().all(|(i, r)| r.share.provider_index as usize == i + 1);
        if !providers_ok || !attest_reports(ctx.registry, &reports) {
            self.attestation_failed = true;
            return;
        }
        self.received = Some(reports);
        match self.group {
            GroupRole::Leader => {
                let kp = KeyMaterial::random(&mut self.rng);
                self.key = Some(kp);
                for &member in ctx.params.group.iter().filter(|&&g| g != self.index) {
                    ctx.send(ParticipantId::Node(member), Message::GroupKey { key: kp });
                }
            }
            GroupRole::None => self.key = Some(KeyMaterial::random(&mut self.rng)),
            GroupRole::Member { .. } => {
                if self.key.is_none() {
                    ctx.set_timer(GROUP_KEY_WAIT, TimerTag::Poll);
                }
            }
        }
        self.register(ctx);
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx<'_>, tag: TimerTag) {
        if tag == TimerTag::Poll && self.key.is_none() && self.received.is_some() {
            self.key = Some(KeyMaterial::random(&mut self.rng));
            self.register(ctx);
        }
    }

    fn register(&mut self, ctx: &mut Ctx<'_>) {
        let (Some(received), Some(key)) = (self.received.as_ref(), self.key) else {
            return;
        };
        if self.initialized || self.behavior.has("DataShares", |a| *a == Action::Refuse) {
            return;
        }
        let mut committed = received.clone();
        for action in self.behavior.on("DataShares") {
            if let Action::SubstituteShare { provider } = *action {
                for r in committed.iter_mut().filter(|r| provider == 0 || r.share.provider_index == provider) {
                    r.share.y.iter_mut().for_each(|b| *b ^= 0xa5);
                }
            }
        }
        let tid = ctx.contract().tid;
        self.blob = encoding::encode_blob(&committed);
        self.z = crypto::encrypt(&key, &self.blob, &tid);
        if self.behavior.has("DataShares", |a| *a == Action::Equivocate) {
            let mut other = committed.clone();
            other.iter_mut().for_each(|r| r.share.y.iter_mut().for_each(|b| *b = b.wrapping_add(1)));
            self.delivered_z = Some(crypto::encrypt(&key, &encoding::encode_blob(&other), &tid));
        }
        let delta = merkle::merkle_root(&merkle::chunk_bytes(&self.z)).expect("blob has at least one chunk");
        let com = crypto::commit(&key);
        self.delta = Some(delta);
        self.com = Some(com);
        for action in self.behavior.on("DataShares") {
            if let Action::LeakTo { to } = action {
                ctx.send(*to, Message::Leak { node: self.index, reports: received.clone(), key: Some(key) });
            }
        }
        self.initialized = ctx.ledger.initialize(&self.account, ctx.cid, delta, com).is_ok();
    }

    fn buyer_status(&self, ctx: &mut Ctx<'_>, buyer: &Account) -> Option<SessionStatus> {
        match ctx.ledger.read(&self.account, ctx.cid, &format!("buyer_status.{buyer}.{}", self.index)) {
            Ok(ReadValue::Status(s)) => s,
            _ => None,
        }
    }

    fn on_notice_buy(&mut self, ctx: &mut Ctx<'_>, buyer: Account) {
        if !self.initialized {
            return;
        }
        if self.buyer_status(ctx, &buyer) != Some(SessionStatus::Queried) {
            return;
        }
        let mut z = self.delivered_z.clone().unwrap_or_else(|| self.z.clone());
        for action in self.behavior.on("NoticeBuy") {
            if let Action::CorruptBytes { offset } = *action {
                if !z.is_empty() {
                    let at = offset % z.len();
                    z[at] ^= 0x01;
                }
            }
        }
        ctx.send(ParticipantId::Consumer, Message::EncryptedShares { node: self.index, z });
    }

    fn on_notice_accept(&mut self, ctx: &mut Ctx<'_>, buyer: Account) {
        let Some(key) = self.key else {
            return;
        };
        if !self.initialized || self.behavior.has("NoticeAccept", |a| *a == Action::Refuse) {
            return;
        }
        if self.buyer_status(ctx, &buyer) != Some(SessionStatus::Accepted) {
            return;
        }
        if self.behavior.has("NoticeAccept", |a| *a == Action::WithholdKey) {
            return;
        }
        if self.behavior.has("NoticeAccept", |a| *a == Action::WrongKey) {
            let wrong = KeyMaterial::random(&mut self.rng);
            let _ = ctx.ledger.reveal_key(&self.account, ctx.cid, wrong);
            return;
        }
        if ctx.ledger.reveal_key(&self.account, ctx.cid, key).is_ok() {
            self.revealed = true;
            ctx.send(ParticipantId::Consumer, Message::NoticeKey { node: self.index });
        }
    }
}
