//! Data consumer: query, verify deliveries, pay, collect keys, reconstruct,
//! and settle or dispute.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::behavior::{Action, Behavior};
use super::messages::{Message, ParticipantId};
use super::{Ctx, TimerTag};
use crate::crypto::{self, merkle, FormattedDatum, KeyMaterial, SecretShare};
use crate::encoding::{self, RecordSpan};
use crate::ledger::{Account, ChallengeOutcome, ReadValue, SessionStatus, ShareEvidence};
use crate::tee_sim::{attest_report, attest_reports, AttestationReport};

/// Blocks to wait for deliveries after querying.
pub const DELIVERY_WAIT: u64 = 3;
/// Blocks to wait for keys after paying.
pub const KEY_WAIT: u64 = 4;
/// Block after which the consumer stops waiting for node registration.
pub const SETUP_DEADLINE: u64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    WaitSetup,
    WaitDelivery,
    WaitKeys,
    Finalizing,
    Done,
}

/// A delivered ciphertext after decryption.
#[derive(Debug, Clone)]
pub struct OpenedBlob {
    pub plaintext: Vec<u8>,
    pub records: Vec<(AttestationReport, RecordSpan)>,
    /// Per record: attests and sits at its provider's position.
    pub good: Vec<bool>,
    /// Every provider's record is present and good.
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChallengeRecord {
    pub case: u8,
    pub block: u64,
    pub accused: Vec<u32>,
    pub outcome: Result<ChallengeOutcome, String>,
}

#[derive(Debug)]
pub struct Consumer {
    pub account: Account,
    pub behavior: Behavior,
    pub phase: Phase,
    pub queried: Vec<u32>,
    pub ciphertexts: BTreeMap<u32, Vec<u8>>,
    pub verified: BTreeSet<u32>,
    pub bad_delivery: BTreeSet<u32>,
    pub accepted: BTreeSet<u32>,
    pub keys: BTreeMap<u32, KeyMaterial>,
    pub opened: BTreeMap<u32, OpenedBlob>,
    pub known_bad: BTreeSet<u32>,
    /// Data that reconstructed and passed the description check.
    pub reconstructed: BTreeMap<u32, FormattedDatum>,
    /// Providers whose data reconstructed but failed the description check.
    pub misdescribed: BTreeSet<u32>,
    pub leaked_reports: Vec<AttestationReport>,
    pub leaked_keys: BTreeMap<u32, KeyMaterial>,
    pub challenges: Vec<ChallengeRecord>,
    pub gave_up: bool,
    pub round: u32,
    notice_accept_sent: bool,
}

impl Consumer {
    pub fn new(behavior: Behavior) -> Self {
        Self {
            account: Account::consumer(),
            behavior,
            phase: Phase::WaitSetup,
            queried: Vec::new(),
            ciphertexts: BTreeMap::new(),
            verified: BTreeSet::new(),
            bad_delivery: BTreeSet::new(),
            accepted: BTreeSet::new(),
            keys: BTreeMap::new(),
            opened: BTreeMap::new(),
            known_bad: BTreeSet::new(),
            reconstructed: BTreeMap::new(),
            misdescribed: BTreeSet::new(),
            leaked_reports: Vec::new(),
            leaked_keys: BTreeMap::new(),
            challenges: Vec::new(),
            gave_up: false,
            round: 0,
            notice_accept_sent: false,
        }
    }

    fn freeloads(&self) -> bool {
        self.behavior.has_action(|a| *a == Action::Freeload)
    }

    fn accuses(&self) -> bool {
        self.behavior.has_action(|a| *a == Action::FalseAccuse)
    }

    pub fn start(&mut self, ctx: &mut Ctx<'_>) {
        ctx.set_timer(1, TimerTag::Poll);
    }

    pub fn handle(&mut self, ctx: &mut Ctx<'_>, from: ParticipantId, msg: Message) {
        match msg {
            Message::EncryptedShares { node, z } if from == ParticipantId::Node(node) => {
                if !self.queried.contains(&node) || self.ciphertexts.contains_key(&node) {
                    return;
                }
                let ok = ctx.contract().delta.get(&node).is_some_and(|root| {
                    merkle::merkle_root(&merkle::chunk_bytes(&z)).is_ok_and(|r| r == *root)
                });
                self.ciphertexts.insert(node, z);
                if ok {
                    self.verified.insert(node);
                } else {
                    self.bad_delivery.insert(node);
                }
                if self.phase == Phase::WaitDelivery && self.ciphertexts.len() == self.queried.len() {
                    self.proceed_accept(ctx);
                }
            }
            Message::NoticeKey { node } if from == ParticipantId::Node(node) => self.on_notice_key(ctx, node),
            Message::Leak { node, reports, key } if !self.behavior.is_honest() => {
                self.leaked_reports.extend(reports);
                if let Some(k) = key {
                    self.leaked_keys.insert(node, k);
                }
            }
            _ => {}
        }
    }

    pub fn on_timer(&mut self, ctx: &mut Ctx<'_>, tag: TimerTag) {
        match (tag, self.phase) {
            (TimerTag::Poll, Phase::WaitSetup) => self.try_query(ctx),
            (TimerTag::DeliveryWait, Phase::WaitDelivery) => self.proceed_accept(ctx),
            (TimerTag::KeyWait(r), Phase::WaitKeys) if r == self.round => self.evaluate(ctx),
            (TimerTag::Finalize, Phase::Finalizing) => self.finalize(ctx),
            _ => {}
        }
    }

    fn try_query(&mut self, ctx: &mut Ctx<'_>) {
        let (t, n) = (ctx.params.t, ctx.params.n);
        let st = ctx.contract();
        let initialized: Vec<u32> = st.delta.keys().copied().collect();
        let full = st.fully_initialized();
        let descriptor = "consumer";
        if full && ctx.params.merged_query {
            if ctx.ledger.query(&self.account, ctx.cid, descriptor).is_ok() {
                self.queried = (1..=n as u32).collect();
            }
        } else if full || (ctx.block >= SETUP_DEADLINE && initialized.len() >= t) {
            for j in initialized {
                if ctx.ledger.query_node(&self.account, ctx.cid, descriptor, j).is_ok() {
                    self.queried.push(j);
                }
            }
        } else if ctx.block >= SETUP_DEADLINE {
            self.gave_up = true;
            self.phase = Phase::Done;
            return;
        } else {
            ctx.set_timer(1, TimerTag::Poll);
            return;
        }
        if self.queried.is_empty() {
            self.gave_up = true;
            self.phase = Phase::Done;
            return;
        }
        for &j in &self.queried {
            ctx.send(ParticipantId::Node(j), Message::NoticeBuy { buyer: self.account.clone() });
        }
        self.phase = Phase::WaitDelivery;
        ctx.set_timer(DELIVERY_WAIT, TimerTag::DeliveryWait);
    }

    fn proceed_accept(&mut self, ctx: &mut Ctx<'_>) {
        self.phase = Phase::WaitKeys;
        if self.freeloads() {
            self.freeload(ctx);
            return;
        }
        let p = ctx.params;
        let verified: Vec<u32> = self.verified.iter().copied().collect();
        let mut chosen: Vec<u32> = Vec::new();
        if p.shared_key && !p.group.is_empty() {
            if let Some(&g) = verified.iter().find(|j| p.group.contains(j)) {
                chosen.push(g);
                chosen.extend(verified.iter().filter(|j| !p.group.contains(j)).take(p.f));
            }
        }
        if chosen.is_empty() {
            let want = if self.accuses() { p.t + 2 } else { p.t };
            chosen.extend(verified.iter().take(want));
        }
        if chosen.is_empty() {
            self.phase = Phase::Done;
            return;
        }
        self.pay(ctx, &chosen);
    }

    fn pay(&mut self, ctx: &mut Ctx<'_>, nodes: &[u32]) {
        self.round += 1;
        let price = ctx.params.price_per_node;
        let mut newly = Vec::new();
        for &j in nodes {
            if ctx.ledger.accept(&self.account, ctx.cid, j, price).is_ok() {
                self.accepted.insert(j);
                newly.push(j);
            }
        }
        let targets = if self.notice_accept_sent { newly } else { self.queried.clone() };
        self.notice_accept_sent = true;
        for j in targets {
            ctx.send(ParticipantId::Node(j), Message::NoticeAccept { buyer: self.account.clone() });
        }
        self.phase = Phase::WaitKeys;
        ctx.set_timer(KEY_WAIT, TimerTag::KeyWait(self.round));
    }

    fn on_notice_key(&mut self, ctx: &mut Ctx<'_>, j: u32) {
        if !self.accepted.contains(&j) || self.opened.contains_key(&j) {
            return;
        }
        let key = match ctx.ledger.read(&self.account, ctx.cid, &format!("key_revealed.{j}")) {
            Ok(ReadValue::Key(Some(k))) => k,
            _ => return,
        };
        self.apply_key(ctx, j, key);
        if ctx.params.shared_key {
            let com = ctx.contract().commitment.get(&j).copied();
            let same: Vec<u32> = ctx
                .contract()
                .commitment
                .iter()
                .filter(|(&i, c)| i != j && Some(**c) == com)
                .map(|(&i, _)| i)
                .collect();
            for i in same {
                self.apply_key(ctx, i, key);
            }
        }
        if self.phase == Phase::WaitKeys && self.accepted.iter().all(|a| self.opened.contains_key(a)) {
            self.evaluate(ctx);
        }
    }

    fn apply_key(&mut self, ctx: &mut Ctx<'_>, j: u32, key: KeyMaterial) {
        if self.opened.contains_key(&j) || !self.verified.contains(&j) {
            return;
        }
        let Some(z) = self.ciphertexts.get(&j) else {
            return;
        };
        self.keys.insert(j, key);
        let plaintext = crypto::decrypt(&key, z, &ctx.contract().tid);
        let records = encoding::decode_blob(&plaintext, j).unwrap_or_default();
        let shaped = |idx: usize, r: &AttestationReport| {
            r.share.provider_index == idx as u32 + 1 && r.share.y.len() == ctx.params.datum_len
        };
        let all: Vec<AttestationReport> = records.iter().map(|(r, _)| r.clone()).collect();
        let good: Vec<bool> = if records.iter().enumerate().all(|(i, (r, _))| shaped(i, r)) && attest_reports(ctx.registry, &all)
        {
            vec![true; records.len()]
        } else {
            records.iter().enumerate().map(|(i, (r, _))| shaped(i, r) && attest_report(ctx.registry, r)).collect()
        };
        let ok = records.len() == ctx.params.m && good.iter().all(|&g| g);
        if !ok {
            self.known_bad.insert(j);
        }
        self.opened.insert(j, OpenedBlob { plaintext, records, good, ok });
    }

    /// Attested shares per provider, at most one per x-coordinate, in node order.
    fn good_shares(&self, ctx: &Ctx<'_>) -> BTreeMap<u32, Vec<(u32, SecretShare)>> {
        let mut out: BTreeMap<u32, Vec<(u32, SecretShare)>> = (1..=ctx.params.m as u32).map(|i| (i, Vec::new())).collect();
        for (&j, blob) in &self.opened {
            for (idx, (r, _)) in blob.records.iter().enumerate() {
                let i = idx as u32 + 1;
                if !blob.good[idx] {
                    continue;
                }
                let list = out.entry(i).or_default();
                if !list.iter().any(|(_, s)| s.x == r.share.x) {
                    list.push((j, r.share.clone()));
                }
            }
        }
        out
    }

    fn evaluate(&mut self, ctx: &mut Ctx<'_>) {
        if self.phase != Phase::WaitKeys {
            return;
        }
        for &a in &self.accepted {
            if !self.opened.contains_key(&a) {
                self.known_bad.insert(a);
            }
        }
        let p = ctx.params;
        let (t, n) = (p.t, p.n);
        let goods = self.good_shares(ctx);
        let min_good = goods.values().map(Vec::len).min().unwrap_or(0);
        if min_good < t {
            let extra = p.f.saturating_sub(self.known_bad.len());
            self.fallback(ctx, t - min_good + extra);
            return;
        }
        let desc = ctx.contract().desc.clone();
        self.misdescribed.clear();
        for (&i, list) in &goods {
            let shares: Vec<SecretShare> = list.iter().map(|(_, s)| s.clone()).collect();
            if let Ok(d) = crypto::reconstruct(t, n, &shares) {
                if desc.phi2(d.as_bytes()) {
                    self.reconstructed.insert(i, d);
                } else {
                    self.misdescribed.insert(i);
                }
            }
        }
        if let Some(&i) = self.misdescribed.iter().next() {
            if goods[&i].len() >= t + 2 {
                self.case1(ctx, &goods[&i]);
                self.finalize(ctx);
            } else if !self.fallback(ctx, t + 2 - goods[&i].len()) {
                self.phase = Phase::Done;
            }
            return;
        }
        if self.reconstructed.len() < p.m {
            self.phase = Phase::Done;
            return;
        }
        self.case2_sweep(ctx, &goods);
        if self.accuses() {
            self.false_accuse(ctx, &goods);
            self.phase = Phase::Done;
            return;
        }
        self.finalize(ctx);
    }

    /// Pays up to `count` more verified nodes. Returns false when none remain.
    fn fallback(&mut self, ctx: &mut Ctx<'_>, count: usize) -> bool {
        let candidates: Vec<u32> = self
            .verified
            .iter()
            .copied()
            .filter(|j| !self.accepted.contains(j) && !self.known_bad.contains(j) && !self.opened.contains_key(j))
            .take(count.max(1))
            .collect();
        if candidates.is_empty() {
            self.phase = Phase::Done;
            return false;
        }
        self.pay(ctx, &candidates);
        true
    }

    fn evidence(&self, node: u32, provider: u32) -> Option<ShareEvidence> {
        let blob = self.opened.get(&node)?;
        let (_, span) = blob.records.get(provider as usize - 1)?;
        ShareEvidence::build(node, &blob.plaintext, self.ciphertexts.get(&node)?, *span).ok()
    }

    fn evidence_set(&self, list: &[(u32, SecretShare)]) -> Option<Vec<ShareEvidence>> {
        list.iter().map(|(j, s)| self.evidence(*j, s.provider_index)).collect()
    }

    fn case1(&mut self, ctx: &mut Ctx<'_>, list: &[(u32, SecretShare)]) {
        let t = ctx.params.t;
        let s1 = &list[..t + 1];
        let mut s2: Vec<(u32, SecretShare)> = list[..t].to_vec();
        s2.push(list[t + 1].clone());
        let (Some(e1), Some(e2)) = (self.evidence_set(s1), self.evidence_set(&s2)) else {
            return;
        };
        let outcome = ctx.ledger.challenge_case1(&self.account, ctx.cid, &e1, &e2).map_err(|e| e.to_string());
        self.challenges.push(ChallengeRecord { case: 1, block: ctx.block, accused: Vec::new(), outcome });
    }

    /// Files case-2 challenges against paid nodes whose committed records
    /// fail attestation, wherever enough good shares pin the datum down.
    fn case2_sweep(&mut self, ctx: &mut Ctx<'_>, goods: &BTreeMap<u32, Vec<(u32, SecretShare)>>) {
        let t = ctx.params.t;
        for (&i, list) in goods {
            if list.len() < t + 1 {
                continue;
            }
            let open_bad: Vec<u32> = self
                .opened
                .iter()
                .filter(|(j, blob)| {
                    blob.good.get(i as usize - 1).is_some_and(|g| !g)
                        && ctx.contract().buyers.get(&self.account).and_then(|b| b.sessions.get(j)).is_some_and(|s| {
                            s.status == SessionStatus::KeyOut && ctx.contract().window_open(s, ctx.ledger.block_height())
                        })
                })
                .map(|(&j, _)| j)
                .collect();
            if open_bad.is_empty() {
                continue;
            }
            let bad: Option<Vec<ShareEvidence>> = open_bad.iter().map(|&j| self.evidence(j, i)).collect();
            let (Some(bad), Some(refs), Some(wit)) =
                (bad, self.evidence_set(&list[..t - 1]), self.evidence_set(&list[t - 1..t + 1]))
            else {
                continue;
            };
            let outcome = ctx.ledger.challenge_case2(&self.account, ctx.cid, &bad, &refs, &wit).map_err(|e| e.to_string());
            self.challenges.push(ChallengeRecord { case: 2, block: ctx.block, accused: open_bad, outcome });
        }
    }

    /// Challenges against nodes that delivered correct data.
    fn false_accuse(&mut self, ctx: &mut Ctx<'_>, goods: &BTreeMap<u32, Vec<(u32, SecretShare)>>) {
        let t = ctx.params.t;
        let Some(list) = goods.get(&1) else {
            return;
        };
        if list.len() >= t + 2 {
            let accused = vec![list[0].0];
            if let (Some(bad), Some(refs), Some(wit)) = (
                self.evidence_set(&list[..1]),
                self.evidence_set(&list[1..t]),
                self.evidence_set(&list[t..t + 2]),
            ) {
                let outcome =
                    ctx.ledger.challenge_case2(&self.account, ctx.cid, &bad, &refs, &wit).map_err(|e| e.to_string());
                self.challenges.push(ChallengeRecord { case: 2, block: ctx.block, accused, outcome });
            }
            self.case1(ctx, list);
        } else {
            let ev = self.evidence_set(list).unwrap_or_default();
            let outcome = ctx.ledger.challenge_case1(&self.account, ctx.cid, &ev, &ev).map_err(|e| e.to_string());
            self.challenges.push(ChallengeRecord { case: 1, block: ctx.block, accused: Vec::new(), outcome });
        }
    }

    /// Collects leaked material instead of paying.
    fn freeload(&mut self, ctx: &mut Ctx<'_>) {
        let keys: Vec<KeyMaterial> = self.leaked_keys.values().copied().collect();
        let commitments = ctx.contract().commitment.clone();
        for key in keys {
            let com = crypto::commit(&key);
            for (&j, c) in &commitments {
                if *c == com {
                    self.apply_key(ctx, j, key);
                }
            }
        }
        let mut per: BTreeMap<u32, Vec<SecretShare>> = BTreeMap::new();
        let opened: Vec<AttestationReport> =
            self.opened.values().flat_map(|b| b.records.iter().map(|(r, _)| r.clone())).collect();
        for r in self.leaked_reports.iter().chain(&opened) {
            let list = per.entry(r.share.provider_index).or_default();
            if !list.iter().any(|s| s.x == r.share.x) {
                list.push(r.share.clone());
            }
        }
        for (i, shares) in per {
            if let Ok(d) = crypto::reconstruct(ctx.params.t, ctx.params.n, &shares) {
                self.reconstructed.insert(i, d);
            }
        }
        if self.accuses() {
            let outcome = ctx.ledger.challenge_case2(&self.account, ctx.cid, &[], &[], &[]).map_err(|e| e.to_string());
            self.challenges.push(ChallengeRecord { case: 2, block: ctx.block, accused: Vec::new(), outcome });
        }
        self.phase = Phase::Done;
    }

    fn finalize(&mut self, ctx: &mut Ctx<'_>) {
        self.phase = Phase::Finalizing;
        let Some(rec) = ctx.contract().buyers.get(&self.account) else {
            self.phase = Phase::Done;
            return;
        };
        if rec.sessions.values().any(|s| s.status == SessionStatus::Accepted) {
            ctx.set_timer(1, TimerTag::Finalize);
            return;
        }
        let settle = !rec.no_complain_called && rec.sessions.values().any(|s| s.status == SessionStatus::KeyOut);
        if settle {
            let _ = ctx.ledger.no_complain(&self.account, ctx.cid);
        }
        self.phase = Phase::Done;
    }
}
