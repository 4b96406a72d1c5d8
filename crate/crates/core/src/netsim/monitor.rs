//! Run-time and terminal safety checks.
//!
//! The coalition monitor tracks, after every event, how many distinct genuine
//! shares per provider the corrupted participants hold between them. The
//! terminal checks cover fair-exchange atomicity, escrow, currency
//! conservation, key-reveal soundness, gas exactness and dispute
//! accountability.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::adversary::AdversaryScript;
use crate::crypto::{self, KeyMaterial};
use crate::encoding;
use crate::ledger::{gas, ChallengeOutcome};
use crate::participants::{Event, Observer, World};
use crate::tee_sim::preprocess::preprocess;
use crate::tee_sim::AttestationReport;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub check: String,
    pub detail: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MonitorReport {
    /// Largest coalition share count seen per provider.
    pub max_coalition: BTreeMap<u32, usize>,
    pub violations: Vec<Violation>,
    /// All providers reconstructed to the true, described data.
    pub correct_all: bool,
    pub provider_income: u64,
    pub consumer_refunds: u64,
    pub challenge_refunds: Vec<u32>,
}

impl MonitorReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn coalition_peak(&self) -> usize {
        self.max_coalition.values().copied().max().unwrap_or(0)
    }
}

#[derive(Debug)]
pub struct Monitor {
    corrupted_nodes: BTreeSet<u32>,
    consumer: bool,
    server: bool,
    decrypted: BTreeMap<u32, Vec<AttestationReport>>,
    report: MonitorReport,
}

impl Monitor {
    pub fn new(script: &AdversaryScript) -> Self {
        Self {
            corrupted_nodes: script.corrupted_nodes.clone(),
            consumer: script.consumer_corrupted(),
            server: script.server_corrupted(),
            decrypted: BTreeMap::new(),
            report: MonitorReport::default(),
        }
    }

    fn watching(&self) -> bool {
        !self.corrupted_nodes.is_empty() || self.consumer || self.server
    }

    fn violation(&mut self, check: &str, detail: String) {
        let v = Violation { check: check.to_string(), detail };
        if !self.report.violations.contains(&v) {
            self.report.violations.push(v);
        }
    }

    /// Keys the corrupted consumer knows, from leaks and from the chain.
    fn consumer_keys(world: &World) -> Vec<KeyMaterial> {
        let mut keys: Vec<KeyMaterial> = world.consumer.leaked_keys.values().copied().collect();
        keys.extend(world.consumer.keys.values().copied());
        if let Some(st) = world.ledger.contract(world.cid) {
            keys.extend(st.key_revealed.values().copied());
        }
        keys.sort();
        keys.dedup();
        keys
    }

    fn coalition_counts(&mut self, world: &World) -> BTreeMap<u32, usize> {
        let truth = truth(world);
        let mut held: BTreeSet<(u32, u8)> = BTreeSet::new();
        let mut add = |r: &AttestationReport| {
            let key = (r.share.provider_index, r.share.x);
            if truth.get(&key) == Some(&r.share.y) {
                held.insert(key);
            }
        };
        for &j in &self.corrupted_nodes {
            for r in world.node(j).received.iter().flatten() {
                add(r);
            }
        }
        if self.server {
            world.server.retained.iter().for_each(&mut add);
        }
        if self.consumer {
            world.consumer.leaked_reports.iter().for_each(&mut add);
            let keys = Self::consumer_keys(world);
            if let Some(st) = world.ledger.contract(world.cid) {
                for (&j, z) in &world.consumer.ciphertexts {
                    if self.decrypted.contains_key(&j) {
                        continue;
                    }
                    let Some(com) = st.commitment.get(&j) else {
                        continue;
                    };
                    if let Some(k) = keys.iter().find(|k| crypto::open(k, com)) {
                        let plain = crypto::decrypt(k, z, &st.tid);
                        let records = encoding::decode_blob(&plain, j).unwrap_or_default();
                        self.decrypted.insert(j, records.into_iter().map(|(r, _)| r).collect());
                    }
                }
            }
            self.decrypted.values().flatten().for_each(&mut add);
        }
        let mut counts: BTreeMap<u32, usize> = (1..=world.params.m as u32).map(|i| (i, 0)).collect();
        for (i, _) in held {
            *counts.entry(i).or_default() += 1;
        }
        counts
    }

    fn check_coalition(&mut self, world: &World) {
        if !self.watching() {
            return;
        }
        let counts = self.coalition_counts(world);
        let t = world.params.t;
        let required = if world.params.shared_key { world.params.f + 1 } else { t };
        let paid_in_full = self.consumer && world.consumer.accepted.len() >= required;
        for (i, c) in counts {
            let peak = self.report.max_coalition.entry(i).or_default();
            *peak = (*peak).max(c);
            if c >= t && !paid_in_full {
                self.violation(
                    "confidentiality",
                    format!("coalition holds {c} shares of provider {i} at block {}", world.block()),
                );
            }
        }
    }

    /// Terminal checks. Call once the run has ended.
    pub fn finish(mut self, world: &World) -> MonitorReport {
        self.check_coalition(world);
        let st = world.ledger.contract(world.cid).expect("contract exists").clone();
        let p = &world.params;

        if world.stalled {
            self.violation("liveness", format!("no termination within {} blocks", world.block()));
        }
        if world.ledger.total_escrow() != 0 {
            self.violation("escrow", format!("{} left in escrow", world.ledger.total_escrow()));
        }
        if world.ledger.total_currency() != world.ledger.genesis_supply() {
            self.violation(
                "conservation",
                format!("currency {} != genesis {}", world.ledger.total_currency(), world.ledger.genesis_supply()),
            );
        }
        for (j, k) in &st.key_revealed {
            if !st.commitment.get(j).is_some_and(|c| crypto::open(k, c)) {
                self.violation("key_soundness", format!("key of node {j} does not open its commitment"));
            }
        }
        let sched = world.ledger.schedule();
        for e in world.ledger.gas_log() {
            let expected = match e.function.as_str() {
                gas::FN_DEPLOY => Some(sched.deployment),
                gas::FN_INITIALIZE => Some(sched.initialize),
                gas::FN_ACCEPT => Some(sched.accept),
                gas::FN_REVEAL_KEY => Some(sched.reveal_key),
                gas::FN_CHECK_KEY => Some(sched.check_key),
                gas::FN_NO_COMPLAIN => Some(sched.no_complain(p.m)),
                _ => None,
            };
            if expected.is_some_and(|g| g != e.gas_units) {
                self.violation("gas", format!("{} charged {}", e.function, e.gas_units));
            }
        }

        let truth = truth(world);
        let expected: BTreeMap<u32, Vec<u8>> = world
            .devices
            .iter()
            .filter_map(|d| preprocess(&d.raw, &p.rule).ok().map(|v| (d.index, v)))
            .collect();
        let correct_all = (1..=p.m as u32).all(|i| {
            let got = world.consumer.reconstructed.get(&i);
            got.is_some_and(|g| expected.get(&i) == Some(&g.as_bytes().to_vec()) && st.desc.phi2(g.as_bytes()))
        });
        let income = world.provider_income();
        self.report.correct_all = correct_all;
        self.report.provider_income = income;
        self.report.consumer_refunds =
            world.ledger.transfers().iter().filter(|t| t.refund).map(|t| t.amount).sum();
        if correct_all && income == 0 && !self.consumer {
            self.violation("atomicity", "buyer reconstructed but providers were not paid".into());
        }
        if !correct_all && income > 0 {
            self.violation("atomicity", format!("providers paid {income} without correct delivery"));
        }

        let misdescribed = expected.values().any(|d| !st.desc.phi2(d));
        let mut accused: BTreeSet<u32> = st.flagged_nodes.clone();
        for c in &world.consumer.challenges {
            match (&c.outcome, c.case) {
                (Ok(ChallengeOutcome::Refunded { nodes, .. }), 2) => accused.extend(nodes.iter().copied()),
                (Ok(ChallengeOutcome::Refunded { .. }), _) if !misdescribed => {
                    self.violation("accountability", "case-1 refund against a correctly described listing".into())
                }
                _ => {}
            }
        }
        for &j in &accused {
            let node = world.node(j);
            let records = encoding::decode_blob(&node.blob, j).unwrap_or_default();
            let committed_bad = records.is_empty()
                || records
                    .iter()
                    .any(|(r, _)| truth.get(&(r.share.provider_index, r.share.x)) != Some(&r.share.y));
            if !committed_bad {
                self.violation("accountability", format!("node {j} refunded against despite committing genuine shares"));
            }
        }
        self.report.challenge_refunds = accused.into_iter().collect();
        self.report
    }
}

impl Observer for Monitor {
    fn on_event(&mut self, world: &World, event: &Event) {
        let touches = event.to == "ledger"
            || event.to == "consumer"
            || event.to == "server"
            || event.to.strip_prefix("node:").is_some_and(|j| j.parse().is_ok_and(|j: u32| self.corrupted_nodes.contains(&j)));
        if touches {
            self.check_coalition(world);
        }
    }
}

/// Shares as the TEEs issued them, keyed by `(provider, x)`.
fn truth(world: &World) -> BTreeMap<(u32, u8), Vec<u8>> {
    world
        .devices
        .iter()
        .flat_map(|d| d.issued.iter().map(|s| ((s.provider_index, s.x), s.y.clone())))
        .collect()
}
