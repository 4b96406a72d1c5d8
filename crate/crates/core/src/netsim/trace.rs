//! Text trace of a run.
//!
//! ```text
//! dexo-trace v1
//! [config]
//! <scenario TOML>
//! [script]
//! <adversary script JSON, one line>
//! [events]
//! <seq> <block> <from> <to> <kind> <payload_hash>
//! [final]
//! <contract dump and balances>
//! [coalition]
//! provider <i> max <count>
//! ```

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use super::adversary::AdversaryScript;
use crate::config::ScenarioConfig;
use crate::participants::Event;

pub const HEADER: &str = "dexo-trace v1";

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("not a trace: {0}")]
    Format(String),
    #[error("trace config: {0}")]
    Config(String),
    #[error("trace script: {0}")]
    Script(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trace {
    pub config: ScenarioConfig,
    pub script: AdversaryScript,
    pub events: Vec<Event>,
    /// Terminal contract storage and balances.
    pub final_state: String,
    pub coalition: BTreeMap<u32, usize>,
}

impl Trace {
    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(HEADER);
        s.push('\n');
        s.push_str("[config]\n");
        s.push_str(&self.config.to_toml());
        s.push_str("[script]\n");
        s.push_str(&serde_json::to_string(&self.script).expect("script serializes"));
        s.push('\n');
        s.push_str("[events]\n");
        for e in &self.events {
            s.push_str(&e.line());
            s.push('\n');
        }
        s.push_str("[final]\n");
        s.push_str(&self.final_state);
        s.push_str("[coalition]\n");
        for (i, c) in &self.coalition {
            let _ = writeln!(s, "provider {i} max {c}");
        }
        s
    }

    /// Recovers the inputs of a rendered trace.
    pub fn parse_inputs(text: &str) -> Result<(ScenarioConfig, AdversaryScript), TraceError> {
        let mut lines = text.lines();
        if lines.next() != Some(HEADER) {
            return Err(TraceError::Format("missing header".into()));
        }
        if lines.next() != Some("[config]") {
            return Err(TraceError::Format("missing [config]".into()));
        }
        let mut toml_text = String::new();
        let mut script_line = None;
        for line in lines.by_ref() {
            if line == "[script]" {
                script_line = lines.next();
                break;
            }
            toml_text.push_str(line);
            toml_text.push('\n');
        }
        let script_line = script_line.ok_or_else(|| TraceError::Format("missing [script]".into()))?;
        let config = ScenarioConfig::from_toml(&toml_text).map_err(|e| TraceError::Config(e.to_string()))?;
        let script = serde_json::from_str(script_line).map_err(|e| TraceError::Script(e.to_string()))?;
        Ok((config, script))
    }

    pub fn event_lines(text: &str) -> Vec<&str> {
        text.lines().skip_while(|l| *l != "[events]").skip(1).take_while(|l| !l.starts_with('[')).collect()
    }
}
