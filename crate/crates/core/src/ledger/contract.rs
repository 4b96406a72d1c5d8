//! On-chain state of one data-exchange contract.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::Account;
use crate::crypto::{Commitment, KeyMaterial, MerkleRoot};
use crate::tee_sim::preprocess::decode_values;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cid(pub u64);

impl std::fmt::Display for Cid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cid:{}", self.0)
    }
}

/// Advertised shape of every provider's formatted datum.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DataDescription {
    /// Bytes per datum.
    pub format_width: usize,
    /// Bytes per big-endian value inside a datum.
    pub value_width: usize,
    pub value_min: u64,
    pub value_max: u64,
    pub m: usize,
    pub n: usize,
    pub t: usize,
    pub timeout_blocks: u64,
}

impl DataDescription {
    /// Width and range check of a reconstructed datum.
    pub fn phi2(&self, datum: &[u8]) -> bool {
        self.value_width >= 1
            && datum.len() == self.format_width
            && datum.len().is_multiple_of(self.value_width)
            && decode_values(datum, self.value_width)
                .into_iter()
                .all(|v| (self.value_min..=self.value_max).contains(&v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SessionStatus {
    Queried,
    Accepted,
    KeyOut,
    Settled,
    /// Only held while a challenge is being evaluated.
    Disputed,
    Refunded,
}

impl SessionStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Queried => "QUERIED",
            Self::Accepted => "ACCEPTED",
            Self::KeyOut => "KEY_OUT",
            Self::Settled => "SETTLED",
            Self::Disputed => "DISPUTED",
            Self::Refunded => "REFUNDED",
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Self::Settled | Self::Refunded)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub status: SessionStatus,
    pub deposit: u64,
    pub accepted_at: Option<u64>,
    pub key_out_at: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyerRecord {
    pub account: Account,
    pub descriptor: String,
    pub sessions: BTreeMap<u32, Session>,
    pub no_complain_called: bool,
}

impl BuyerRecord {
    pub fn status(&self, node: u32) -> Option<SessionStatus> {
        self.sessions.get(&node).map(|s| s.status)
    }

    pub fn deposits(&self) -> BTreeMap<u32, u64> {
        self.sessions.iter().filter(|(_, s)| s.deposit > 0).map(|(&j, s)| (j, s.deposit)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractState {
    pub cid: Cid,
    pub deployer: Account,
    pub seller_nodes: Vec<Account>,
    pub data_sources: Vec<Account>,
    pub price: u64,
    pub desc: DataDescription,
    pub tid: [u8; 32],
    pub delta: BTreeMap<u32, MerkleRoot>,
    pub commitment: BTreeMap<u32, Commitment>,
    pub buyers: BTreeMap<Account, BuyerRecord>,
    pub key_revealed: BTreeMap<u32, KeyMaterial>,
    pub flagged_nodes: BTreeSet<u32>,
    pub escrow: u64,
    pub node_fee_bps: u32,
}

impl ContractState {
    pub fn n(&self) -> usize {
        self.seller_nodes.len()
    }

    pub fn price_per_node(&self) -> u64 {
        self.price / self.seller_nodes.len() as u64
    }

    /// 1-based index of `account` among the seller nodes.
    pub fn node_index(&self, account: &Account) -> Option<u32> {
        self.seller_nodes.iter().position(|a| a == account).map(|p| p as u32 + 1)
    }

    pub fn fully_initialized(&self) -> bool {
        self.delta.len() == self.n()
    }

    pub fn window_open(&self, session: &Session, height: u64) -> bool {
        session.status == SessionStatus::KeyOut
            && session.key_out_at.is_some_and(|at| height < at + self.desc.timeout_blocks)
    }

    /// Splits a settled deposit: the node fee goes to `node`, the rest is split
    /// equally over the data sources with the remainder going to the first
    /// sources.
    pub fn settlement_split(&self, node: u32, deposit: u64) -> Vec<(Account, u64)> {
        let fee = deposit * self.node_fee_bps as u64 / 10_000;
        let rest = deposit - fee;
        let m = self.data_sources.len() as u64;
        let mut out = Vec::with_capacity(self.data_sources.len() + 1);
        if fee > 0 {
            out.push((self.seller_nodes[node as usize - 1].clone(), fee));
        }
        for (i, src) in self.data_sources.iter().enumerate() {
            let share = rest / m + u64::from((i as u64) < rest % m);
            if share > 0 {
                out.push((src.clone(), share));
            }
        }
        out
    }

    /// Deterministic text dump, stable across runs.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "contract {}", self.cid);
        let _ = writeln!(s, "deployer {}", self.deployer);
        let _ = writeln!(s, "tid {}", hex::encode(self.tid));
        let _ = writeln!(s, "price {} per_node {}", self.price, self.price_per_node());
        let d = &self.desc;
        let _ = writeln!(
            s,
            "desc format_width={} value_width={} range=[{},{}] m={} n={} t={} timeout={}",
            d.format_width, d.value_width, d.value_min, d.value_max, d.m, d.n, d.t, d.timeout_blocks
        );
        let _ = writeln!(s, "sources {}", self.data_sources.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","));
        for (j, node) in self.seller_nodes.iter().enumerate() {
            let j = j as u32 + 1;
            let delta = self.delta.get(&j).map_or("-".to_string(), |r| format!("{}/{}", hex::encode(r.digest), r.leaf_count));
            let com = self.commitment.get(&j).map_or("-".to_string(), |c| hex::encode(c.0));
            let key = self.key_revealed.get(&j).map_or("-".to_string(), |k| hex::encode(k.0));
            let flag = if self.flagged_nodes.contains(&j) { " flagged" } else { "" };
            let _ = writeln!(s, "node {j} {node} delta={delta} com={com} key={key}{flag}");
        }
        for (acct, rec) in &self.buyers {
            let _ = writeln!(s, "buyer {acct} no_complain={}", rec.no_complain_called);
            for (j, sess) in &rec.sessions {
                let _ = writeln!(
                    s,
                    "  session {j} {} deposit={} accepted_at={} key_out_at={}",
                    sess.status.as_str(),
                    sess.deposit,
                    sess.accepted_at.map_or("-".into(), |b| b.to_string()),
                    sess.key_out_at.map_or("-".into(), |b| b.to_string()),
                );
            }
        }
        let _ = writeln!(s, "escrow {}", self.escrow);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn desc() -> DataDescription {
        DataDescription { format_width: 4, value_width: 2, value_min: 10, value_max: 500, m: 1, n: 3, t: 2, timeout_blocks: 10 }
    }

    #[test]
    fn phi2_checks_width_and_range() {
        let d = desc();
        assert!(d.phi2(&[0, 10, 1, 244]));
        assert!(!d.phi2(&[0, 9, 0, 10]));
        assert!(!d.phi2(&[1, 245, 0, 10]));
        assert!(!d.phi2(&[0, 10]));
    }

    #[test]
    fn split_gives_remainder_to_first_sources() {
        let c = ContractState {
            cid: Cid(1),
            deployer: Account::server(),
            seller_nodes: vec![Account::node(1), Account::node(2)],
            data_sources: (1..=3).map(Account::provider).collect(),
            price: 100,
            desc: desc(),
            tid: [0; 32],
            delta: BTreeMap::new(),
            commitment: BTreeMap::new(),
            buyers: BTreeMap::new(),
            key_revealed: BTreeMap::new(),
            flagged_nodes: BTreeSet::new(),
            escrow: 0,
            node_fee_bps: 1_000,
        };
        let split = c.settlement_split(2, 50);
        assert_eq!(
            split,
            vec![(Account::node(2), 5), (Account::provider(1), 15), (Account::provider(2), 15), (Account::provider(3), 15)]
        );
        let sum: u64 = c.settlement_split(1, 51).iter().map(|(_, v)| v).sum();
        assert_eq!(sum, 51);
    }
}
