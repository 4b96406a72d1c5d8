//! Deviations a corrupted participant may be scripted to perform.
//!
//! Honest participants carry an empty [`Behavior`] and never consult it.

use serde::{Deserialize, Serialize};

use super::ParticipantId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    /// Ignore the triggering message.
    Drop,
    /// Flip one byte of the delivered ciphertext.
    CorruptBytes { offset: usize },
    /// Alter a share after attestation and commit to the altered blob.
    /// `provider = 0` alters every provider's share.
    SubstituteShare { provider: u32 },
    /// Commit to the honest blob but deliver a different one.
    Equivocate,
    /// Copy plaintext shares, and the node key if any, to a coalition member.
    LeakTo { to: ParticipantId },
    WithholdKey,
    /// Submit a key that does not open the commitment, and nothing else.
    WrongKey,
    /// Never register on the contract.
    Refuse,
    /// Server swaps the destinations of two nodes' shares of one provider.
    PermuteShares { provider: u32, a: u32, b: u32 },
    /// Server publishes a value range the data does not satisfy.
    Misdescribe { value_min: u64, value_max: u64 },
    /// Device runs modified code from the trigger onward.
    TamperTee,
    /// Consumer collects what it can without paying.
    Freeload,
    /// Consumer files challenges against nodes that behaved correctly.
    FalseAccuse,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    /// Message kind, or `Setup` / `Start` for the stage hooks.
    pub trigger: String,
    pub action: Action,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Behavior {
    pub rules: Vec<Rule>,
}

impl Behavior {
    pub fn honest() -> Self {
        Self::default()
    }

    pub fn is_honest(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn on<'a>(&'a self, trigger: &'a str) -> impl Iterator<Item = &'a Action> + 'a {
        self.rules.iter().filter(move |r| r.trigger == trigger).map(|r| &r.action)
    }

    pub fn has(&self, trigger: &str, pred: impl Fn(&Action) -> bool) -> bool {
        self.on(trigger).any(pred)
    }

    pub fn has_action(&self, pred: impl Fn(&Action) -> bool) -> bool {
        self.rules.iter().any(|r| pred(&r.action))
    }
}
