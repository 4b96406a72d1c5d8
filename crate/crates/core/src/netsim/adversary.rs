//! Static Byzantine adversary: which participants are corrupted and the rules
//! they follow.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::config::{max_faults, ConfigError, ScenarioConfig};
use crate::participants::{Action, Behavior, ParticipantId, Rule};
use crate::tee_sim::preprocess::width_max;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetedRule {
    pub target: ParticipantId,
    pub trigger: String,
    #[serde(flatten)]
    pub action: Action,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdversaryScript {
    pub name: String,
    #[serde(default)]
    pub corrupted_nodes: BTreeSet<u32>,
    /// Corrupted non-node participants: consumer, server or devices.
    #[serde(default)]
    pub corrupted_roles: BTreeSet<ParticipantId>,
    #[serde(default)]
    pub rules: Vec<TargetedRule>,
    /// Overrides the scenario's shared-key setting.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shared_key: Option<bool>,
}

pub const STANDARD_NAMES: [&str; 8] = [
    "HONEST",
    "WITHHOLD_KEYS",
    "TAMPER_SHARES",
    "SOURCE_NODE_COLLUSION",
    "CONSUMER_NODE_COLLUSION",
    "SHARED_KEY_LEAK",
    "SERVER_PERMUTE",
    "TAMPERED_TEE_PROVIDER",
];

pub const EXTRA_NAMES: [&str; 4] = ["FALSE_ACCUSATION", "WRONG_KEYS", "CORRUPT_DELIVERY", "EQUIVOCATE"];

impl AdversaryScript {
    pub fn honest() -> Self {
        Self::named("HONEST")
    }

    fn named(name: &str) -> Self {
        Self {
            name: name.to_string(),
            corrupted_nodes: BTreeSet::new(),
            corrupted_roles: BTreeSet::new(),
            rules: Vec::new(),
            shared_key: None,
        }
    }

    fn rule(&mut self, target: ParticipantId, trigger: &str, action: Action) {
        match target {
            ParticipantId::Node(j) => {
                self.corrupted_nodes.insert(j);
            }
            other => {
                self.corrupted_roles.insert(other);
            }
        }
        self.rules.push(TargetedRule { target, trigger: trigger.to_string(), action });
    }

    fn each_node(&mut self, nodes: impl IntoIterator<Item = u32>, trigger: &str, action: Action) {
        for j in nodes {
            self.rule(ParticipantId::Node(j), trigger, action.clone());
        }
    }

    pub fn is_corrupted(&self, p: ParticipantId) -> bool {
        match p {
            ParticipantId::Node(j) => self.corrupted_nodes.contains(&j),
            other => self.corrupted_roles.contains(&other),
        }
    }

    pub fn consumer_corrupted(&self) -> bool {
        self.corrupted_roles.contains(&ParticipantId::Consumer)
    }

    pub fn server_corrupted(&self) -> bool {
        self.corrupted_roles.contains(&ParticipantId::Server)
    }

    pub fn validate(&self, config: &ScenarioConfig) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError::Invalid(format!("script {}: {m}", self.name)));
        if self.corrupted_nodes.len() > config.f {
            return bad(format!("{} corrupted nodes exceed f = {}", self.corrupted_nodes.len(), config.f));
        }
        if let Some(&j) = self.corrupted_nodes.iter().find(|&&j| j == 0 || j as usize > config.n) {
            return bad(format!("node {j} out of range"));
        }
        for role in &self.corrupted_roles {
            match *role {
                ParticipantId::Node(_) => return bad("nodes belong in corrupted_nodes".into()),
                ParticipantId::Device(i) if i == 0 || i as usize > config.m => {
                    return bad(format!("device {i} out of range"))
                }
                _ => {}
            }
        }
        if let Some(r) = self.rules.iter().find(|r| !self.is_corrupted(r.target)) {
            return bad(format!("rule targets honest participant {}", r.target));
        }
        Ok(())
    }

    /// Behavior of every corrupted participant.
    pub fn behaviors(&self) -> BTreeMap<ParticipantId, Behavior> {
        let mut out: BTreeMap<ParticipantId, Behavior> = BTreeMap::new();
        for r in &self.rules {
            out.entry(r.target)
                .or_default()
                .rules
                .push(Rule { trigger: r.trigger.clone(), action: r.action.clone() });
        }
        out
    }

    /// Scenario with the script's overrides applied and its name recorded.
    pub fn effective_config(&self, config: &ScenarioConfig) -> ScenarioConfig {
        let mut cfg = config.clone();
        if let Some(sk) = self.shared_key {
            cfg.shared_key = sk;
        }
        cfg.adversary = crate::config::AdversarySpec::Named(self.name.clone());
        cfg
    }
}

fn faulty(f: usize) -> std::ops::RangeInclusive<u32> {
    1..=f as u32
}

/// Builds a named script for the given scenario shape.
pub fn script_by_name(name: &str, config: &ScenarioConfig) -> Option<AdversaryScript> {
    let (n, t, f) = (config.n as u32, config.t as u32, config.f);
    let mut s = AdversaryScript::named(name);
    match name {
        "HONEST" => {}
        "WITHHOLD_KEYS" => s.each_node(faulty(f), "NoticeAccept", Action::WithholdKey),
        "TAMPER_SHARES" => s.each_node(faulty(f), "DataShares", Action::SubstituteShare { provider: 0 }),
        "SOURCE_NODE_COLLUSION" => {
            let top = width_max(config.value_width);
            let (lo, hi) = if config.value_max < top { (config.value_max + 1, top) } else { (top, top) };
            s.rule(ParticipantId::Server, "Setup", Action::Misdescribe { value_min: lo, value_max: hi });
            s.each_node(faulty(f), "DataShares", Action::LeakTo { to: ParticipantId::Server });
        }
        "CONSUMER_NODE_COLLUSION" => {
            s.rule(ParticipantId::Consumer, "Start", Action::Freeload);
            s.rule(ParticipantId::Consumer, "Start", Action::FalseAccuse);
            s.each_node(faulty(f), "DataShares", Action::LeakTo { to: ParticipantId::Consumer });
        }
        "SHARED_KEY_LEAK" => {
            s.shared_key = Some(true);
            s.rule(ParticipantId::Consumer, "Start", Action::Freeload);
            if f > 0 {
                let group = t - f as u32;
                let leak = Action::LeakTo { to: ParticipantId::Consumer };
                s.each_node(std::iter::once(1), "DataShares", leak.clone());
                s.each_node(group + 1..=group + f as u32 - 1, "DataShares", leak);
            }
        }
        "SERVER_PERMUTE" => {
            let (a, b) = if n >= 3 { (2, 3) } else { (1, 2) };
            s.rule(ParticipantId::Server, "DeviceOutput", Action::PermuteShares { provider: 1, a, b });
        }
        "TAMPERED_TEE_PROVIDER" => s.rule(ParticipantId::Device(1), "Solicit", Action::TamperTee),
        "FALSE_ACCUSATION" => s.rule(ParticipantId::Consumer, "Start", Action::FalseAccuse),
        "WRONG_KEYS" => s.each_node(faulty(f), "NoticeAccept", Action::WrongKey),
        "CORRUPT_DELIVERY" => s.each_node(faulty(f), "NoticeBuy", Action::CorruptBytes { offset: 0 }),
        "EQUIVOCATE" => s.each_node(faulty(f), "DataShares", Action::Equivocate),
        _ => return None,
    }
    Some(s)
}

/// The named catalog for one scenario shape.
pub fn standard_scripts(config: &ScenarioConfig) -> Vec<AdversaryScript> {
    STANDARD_NAMES
        .iter()
        .chain(EXTRA_NAMES.iter())
        .filter_map(|name| script_by_name(name, config))
        .collect()
}

fn node_action(rng: &mut ChaCha20Rng, m: usize) -> (&'static str, Action) {
    match rng.gen_range(0..9) {
        0 => ("NoticeAccept", Action::WithholdKey),
        1 => ("NoticeAccept", Action::WrongKey),
        2 => ("DataShares", Action::SubstituteShare { provider: rng.gen_range(0..=m as u32) }),
        3 => ("DataShares", Action::Equivocate),
        4 => ("NoticeBuy", Action::CorruptBytes { offset: rng.gen_range(0..512) }),
        5 => ("NoticeBuy", Action::Drop),
        6 => ("NoticeAccept", Action::Drop),
        7 => ("DataShares", Action::Refuse),
        _ => ("DataShares", Action::LeakTo { to: ParticipantId::Consumer }),
    }
}

/// A random valid scenario and script derived from `seed`.
///
/// Source-node collusion is only drawn when `t + 2 <= n` and the colluding
/// nodes stay passive, since the buyer needs two distinct `(t + 1)`-sets of
/// good shares to prove a bad description.
pub fn random_case(seed: u64) -> (ScenarioConfig, AdversaryScript) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x6164_7665_7273_6172);
    let n = rng.gen_range(3..=9usize);
    let t = rng.gen_range(n.div_ceil(2)..=n.saturating_sub(1).max(1)).max(2).min(n);
    let f = rng.gen_range(0..=max_faults(n, t));
    let m = rng.gen_range(1..=3usize);
    let mut cfg = ScenarioConfig::new(n, t, f, m);
    cfg.seed = seed;
    cfg.datum_size_bytes = [4, 10, 33][rng.gen_range(0..3)];
    cfg.shared_key = f > 0 && t > f && rng.gen_bool(0.3);
    cfg.merged_query = rng.gen_bool(0.85);

    let mut s = AdversaryScript::named(&format!("RANDOM_{seed}"));
    let mut nodes: Vec<u32> = (1..=n as u32).collect();
    nodes.shuffle(&mut rng);
    let corrupted: Vec<u32> = nodes.into_iter().take(rng.gen_range(0..=f)).collect();
    let consumer_corrupt = rng.gen_bool(0.25);
    let collusion = !consumer_corrupt && t + 2 <= n && rng.gen_bool(0.15);
    if collusion {
        let top = width_max(cfg.value_width);
        s.rule(ParticipantId::Server, "Setup", Action::Misdescribe { value_min: cfg.value_max + 1, value_max: top });
        s.each_node(corrupted.iter().copied(), "DataShares", Action::LeakTo { to: ParticipantId::Server });
    } else {
        for &j in &corrupted {
            let (trigger, action) = node_action(&mut rng, m);
            let action = match action {
                Action::LeakTo { .. } if !consumer_corrupt => Action::WithholdKey,
                a => a,
            };
            let trigger = if action == Action::WithholdKey { "NoticeAccept" } else { trigger };
            s.rule(ParticipantId::Node(j), trigger, action);
        }
        if !consumer_corrupt && rng.gen_bool(0.15) {
            s.rule(ParticipantId::Server, "DeviceOutput", Action::PermuteShares { provider: 1, a: 1, b: n as u32 });
        }
    }
    if consumer_corrupt {
        if rng.gen_bool(0.5) {
            s.rule(ParticipantId::Consumer, "Start", Action::Freeload);
        }
        if rng.gen_bool(0.6) {
            s.rule(ParticipantId::Consumer, "Start", Action::FalseAccuse);
        }
        s.corrupted_roles.insert(ParticipantId::Consumer);
    }
    (cfg, s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ScenarioConfig {
        ScenarioConfig::new(7, 4, 3, 3)
    }

    #[test]
    fn catalog_has_the_standard_scripts() {
        let all = standard_scripts(&cfg());
        assert!(all.len() >= 8);
        for name in STANDARD_NAMES {
            assert!(all.iter().any(|s| s.name == name), "{name}");
        }
        for s in &all {
            assert!(s.corrupted_nodes.len() <= 3, "{}", s.name);
            s.validate(&cfg()).unwrap();
        }
    }

    #[test]
    fn collusion_scripts_corrupt_the_right_roles() {
        let c = script_by_name("CONSUMER_NODE_COLLUSION", &cfg()).unwrap();
        assert!(c.consumer_corrupted());
        assert_eq!(c.corrupted_nodes, [1, 2, 3].into());
        let s = script_by_name("SOURCE_NODE_COLLUSION", &cfg()).unwrap();
        assert!(s.server_corrupted());
        let k = script_by_name("SHARED_KEY_LEAK", &cfg()).unwrap();
        // group is node 1 alone at t - f = 1; the others sit outside it
        assert_eq!(k.corrupted_nodes, [1, 2, 3].into());
        assert_eq!(k.shared_key, Some(true));
        let k = script_by_name("SHARED_KEY_LEAK", &ScenarioConfig::new(10, 6, 4, 1)).unwrap();
        assert_eq!(k.corrupted_nodes, [1, 3, 4, 5].into());
    }

    #[test]
    fn validation_rejects_oversized_sets() {
        let mut s = script_by_name("WITHHOLD_KEYS", &cfg()).unwrap();
        s.rule(ParticipantId::Node(4), "NoticeAccept", Action::WithholdKey);
        assert!(s.validate(&cfg()).is_err());
        let mut s = AdversaryScript::honest();
        s.rules.push(TargetedRule { target: ParticipantId::Node(1), trigger: "NoticeBuy".into(), action: Action::Drop });
        assert!(s.validate(&cfg()).is_err());
    }

    #[test]
    fn script_round_trips_through_json() {
        let s = script_by_name("SOURCE_NODE_COLLUSION", &cfg()).unwrap();
        let text = serde_json::to_string(&s).unwrap();
        assert!(text.contains("\"target\":\"server\""));
        assert_eq!(serde_json::from_str::<AdversaryScript>(&text).unwrap(), s);
        let scripts = standard_scripts(&ScenarioConfig::new(7, 4, 3, 3)).into_iter().chain((0..50).map(|i| random_case(i).1));
        for s in scripts {
            let text = serde_json::to_string(&s).unwrap();
            assert_eq!(serde_json::from_str::<AdversaryScript>(&text).unwrap(), s, "{text}");
        }
    }

    #[test]
    fn random_cases_are_valid_and_seeded() {
        for seed in 0..200 {
            let (c, s) = random_case(seed);
            c.validate().unwrap();
            s.validate(&c).unwrap();
            assert_eq!(random_case(seed), (c, s));
        }
    }
}
