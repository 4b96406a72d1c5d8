//! Scenario configuration.
//!
//! A scenario is a flat TOML document with a versioned `schema` key. Unknown
//! keys are rejected.
//!
//! ```toml
//! schema = "dexo-scenario/1"
//! n = 5
//! t = 3
//! f = 2
//! m = 2
//! datum_size_bytes = 10
//! adversary = "WITHHOLD_KEYS"
//! seed = 7
//! ```

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::shamir::MAX_DATUM_BYTES;
use crate::ledger::DataDescription;
use crate::netsim::adversary::AdversaryScript;
use crate::tee_sim::preprocess::{encode_readings, width_max};
use crate::tee_sim::PreprocessRule;

pub const SCHEMA: &str = "dexo-scenario/1";

/// Shortest dispute window that leaves room for delivery, key retrieval and a
/// fallback round.
pub const MIN_TIMEOUT_BLOCKS: u64 = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("unsupported schema {0:?}")]
    Schema(String),
    #[error("config invalid: {0}")]
    Invalid(String),
    #[error("unknown adversary script {0:?}")]
    UnknownScript(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    Clamp,
    MovingAverage,
    FixedWidth,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AdversarySpec {
    Named(String),
    Inline(AdversaryScript),
}

impl Default for AdversarySpec {
    fn default() -> Self {
        Self::Named("HONEST".into())
    }
}

fn default_datum() -> usize {
    10
}
fn default_one() -> usize {
    1
}
fn default_true() -> bool {
    true
}
fn default_timeout() -> u64 {
    10
}
fn default_max() -> u64 {
    200
}
fn default_window() -> usize {
    4
}
fn default_bytes_per_call() -> usize {
    10
}
fn default_schema() -> String {
    SCHEMA.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema")]
    pub schema: String,
    pub n: usize,
    pub t: usize,
    pub f: usize,
    pub m: usize,
    #[serde(default = "default_datum")]
    pub datum_size_bytes: usize,
    #[serde(default = "default_one")]
    pub value_width: usize,
    /// Total listing price; defaults to 100 units per node.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub price: Option<u64>,
    #[serde(default = "default_rule")]
    pub preprocess: RuleKind,
    #[serde(default)]
    pub value_min: u64,
    #[serde(default = "default_max")]
    pub value_max: u64,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_true")]
    pub merged_query: bool,
    #[serde(default)]
    pub shared_key: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_timeout")]
    pub timeout_blocks: u64,
    #[serde(default)]
    pub node_fee_bps: u32,
    #[serde(default = "default_bytes_per_call")]
    pub chainlink_bytes_per_call: usize,
    #[serde(default)]
    pub adversary: AdversarySpec,
}

fn default_rule() -> RuleKind {
    RuleKind::Clamp
}

impl ScenarioConfig {
    /// Honest defaults for the given sharing parameters.
    pub fn new(n: usize, t: usize, f: usize, m: usize) -> Self {
        Self {
            schema: SCHEMA.to_string(),
            n,
            t,
            f,
            m,
            datum_size_bytes: default_datum(),
            value_width: 1,
            price: None,
            preprocess: RuleKind::Clamp,
            value_min: 0,
            value_max: default_max(),
            window: default_window(),
            merged_query: true,
            shared_key: false,
            seed: 0,
            timeout_blocks: default_timeout(),
            node_fee_bps: 0,
            chainlink_bytes_per_call: default_bytes_per_call(),
            adversary: AdversarySpec::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn price(&self) -> u64 {
        self.price.unwrap_or(100 * self.n as u64)
    }

    pub fn price_per_node(&self) -> u64 {
        self.price() / self.n as u64
    }

    pub fn rule(&self) -> PreprocessRule {
        let (min, max, width) = (self.value_min, self.value_max, self.value_width);
        match self.preprocess {
            RuleKind::Clamp => PreprocessRule::ClampToRange { min, max, width },
            RuleKind::MovingAverage => PreprocessRule::MovingAverage { window: self.window, min, max, width },
            RuleKind::FixedWidth => PreprocessRule::FixedWidthEncode { width },
        }
    }

    /// Readings each device produces per instance.
    pub fn readings_per_device(&self) -> usize {
        match self.preprocess {
            RuleKind::MovingAverage => self.window,
            _ => self.datum_size_bytes / self.value_width,
        }
    }

    pub fn description(&self) -> DataDescription {
        let (value_min, value_max) = self.rule().range();
        DataDescription {
            format_width: self.datum_size_bytes,
            value_width: self.value_width,
            value_min,
            value_max,
            m: self.m,
            n: self.n,
            t: self.t,
            timeout_blocks: self.timeout_blocks,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.schema != SCHEMA {
            return Err(ConfigError::Schema(self.schema.clone()));
        }
        let (n, t, f) = (self.n, self.t, self.f);
        if n == 0 || n > 255 {
            return bad(format!("n = {n} must be between 1 and 255"));
        }
        if 2 * f >= n {
            return bad(format!("F < N/2 violated: f = {f}, n = {n}"));
        }
        if t <= f || t + f > n {
            return bad(format!("F < t <= N - F violated: f = {f}, t = {t}, n = {n}"));
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        if !(1..=4).contains(&self.value_width) {
            return bad(format!("value_width {} must be between 1 and 4", self.value_width));
        }
        if self.datum_size_bytes == 0 || self.datum_size_bytes > MAX_DATUM_BYTES {
            return bad(format!("datum_size_bytes {} out of range", self.datum_size_bytes));
        }
        if !self.datum_size_bytes.is_multiple_of(self.value_width) {
            return bad("datum_size_bytes must be a multiple of value_width".into());
        }
        if self.preprocess == RuleKind::MovingAverage && self.datum_size_bytes != self.value_width {
            return bad("moving_average emits one value: datum_size_bytes must equal value_width".into());
        }
        if self.preprocess != RuleKind::FixedWidth
            && (self.value_min > self.value_max || self.value_max > width_max(self.value_width))
        {
            return bad(format!("value range [{}, {}] does not fit the value width", self.value_min, self.value_max));
        }
        if self.window == 0 {
            return bad("window must be at least 1".into());
        }
        if self.timeout_blocks < MIN_TIMEOUT_BLOCKS {
            return bad(format!("timeout_blocks must be at least {MIN_TIMEOUT_BLOCKS}"));
        }
        let price = self.price();
        if price < n as u64 || !price.is_multiple_of(n as u64) {
            return bad(format!("price {price} must be a positive multiple of n"));
        }
        if self.node_fee_bps > 10_000 {
            return bad("node_fee_bps above 10000".into());
        }
        if self.chainlink_bytes_per_call == 0 {
            return bad("chainlink_bytes_per_call must be positive".into());
        }
        Ok(())
    }

    /// Raw device readings, one byte string per provider, derived from the seed.
    /// About one reading in five lies above `value_max` so clamping matters.
    pub fn raw_data(&self) -> Vec<Vec<u8>> {
        let mut rng = ChaCha20Rng::seed_from_u64(self.seed ^ 0x7261_775f_6461_7461);
        let hi = match self.preprocess {
            RuleKind::FixedWidth => width_max(self.value_width).min(u32::MAX as u64),
            _ => {
                let span = self.value_max - self.value_min;
                (self.value_max + span / 4 + 1).min(u32::MAX as u64)
            }
        };
        let lo = if self.preprocess == RuleKind::FixedWidth { 0 } else { self.value_min };
        (0..self.m)
            .map(|_| {
                let readings: Vec<u32> =
                    (0..self.readings_per_device()).map(|_| rng.gen_range(lo..=hi) as u32).collect();
                encode_readings(&readings)
            })
            .collect()
    }
}

/// Largest admissible fault count for `n` nodes and threshold `t`.
pub fn max_faults(n: usize, t: usize) -> usize {
    (t.saturating_sub(1)).min(n.saturating_sub(t)).min(n.saturating_sub(1) / 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdRule {
    Half,
    TwoThirds,
}

impl ThresholdRule {
    pub fn threshold(&self, n: usize) -> usize {
        match self {
            Self::Half => n.div_ceil(2),
            Self::TwoThirds => (2 * n).div_ceil(3),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse_and_validate() {
        let cfg = ScenarioConfig::from_toml("n = 5\nt = 3\nf = 2\nm = 2\n").unwrap();
        assert_eq!(cfg.price(), 500);
        assert!(cfg.merged_query);
        assert_eq!(cfg.adversary, AdversarySpec::Named("HONEST".into()));
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn threshold_constraints() {
        assert!(ScenarioConfig::new(5, 3, 2, 2).validate().is_ok());
        assert!(matches!(ScenarioConfig::new(4, 3, 2, 1).validate(), Err(ConfigError::Invalid(_))));
        assert!(matches!(ScenarioConfig::new(5, 2, 2, 1).validate(), Err(ConfigError::Invalid(_))));
        assert!(matches!(ScenarioConfig::new(5, 5, 1, 1).validate(), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn unknown_keys_and_schema() {
        assert!(matches!(
            ScenarioConfig::from_toml("n = 5\nt = 3\nf = 2\nm = 2\nbogus = 1\n"),
            Err(ConfigError::Parse(_))
        ));
        assert!(matches!(
            ScenarioConfig::from_toml("schema = \"other/2\"\nn = 5\nt = 3\nf = 2\nm = 2\n"),
            Err(ConfigError::Schema(_))
        ));
    }

    #[test]
    fn raw_data_is_seeded() {
        let mut cfg = ScenarioConfig::new(5, 3, 2, 3);
        let a = cfg.raw_data();
        assert_eq!(a, cfg.raw_data());
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|r| r.len() == 4 * cfg.readings_per_device()));
        cfg.seed = 1;
        assert_ne!(a, cfg.raw_data());
    }

    #[test]
    fn fault_and_threshold_rules() {
        assert_eq!(max_faults(7, 4), 3);
        assert_eq!(max_faults(21, 11), 10);
        assert_eq!(max_faults(5, 3), 2);
        assert_eq!(ThresholdRule::Half.threshold(25), 13);
        assert_eq!(ThresholdRule::TwoThirds.threshold(50), 34);
    }
}
