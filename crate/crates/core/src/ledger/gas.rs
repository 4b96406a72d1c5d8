//! Gas schedule and the append-only gas log.

use serde::{Deserialize, Serialize};

use super::Account;

pub const FN_DEPLOY: &str = "deploy";
pub const FN_INITIALIZE: &str = "initialize";
pub const FN_QUERY: &str = "query";
pub const FN_ACCEPT: &str = "accept";
pub const FN_REVEAL_KEY: &str = "revealKey";
pub const FN_CHECK_KEY: &str = "checkKey";
pub const FN_READ: &str = "read";
pub const FN_CHALLENGE: &str = "challenge";
pub const FN_NO_COMPLAIN: &str = "noComplain";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasSchedule {
    pub deployment: u64,
    pub initialize: u64,
    pub no_complain_base: u64,
    pub no_complain_per_source: u64,
    pub accept: u64,
    pub reveal_key: u64,
    pub check_key: u64,
    /// Not measured; modeled on `accept`.
    pub query: u64,
    /// Not measured.
    pub challenge_base: u64,
    /// Not measured.
    pub challenge_per_share: u64,
}

impl Default for GasSchedule {
    fn default() -> Self {
        Self {
            deployment: 2_325_998,
            initialize: 74_248,
            no_complain_base: 37_194,
            no_complain_per_source: 5_735,
            accept: 74_843,
            reveal_key: 84_334,
            check_key: 3_457,
            query: 74_843,
            challenge_base: 120_000,
            challenge_per_share: 8_000,
        }
    }
}

impl GasSchedule {
    pub fn no_complain(&self, sources: usize) -> u64 {
        self.no_complain_base + self.no_complain_per_source * sources as u64
    }

    pub fn challenge(&self, shares: usize) -> u64 {
        self.challenge_base + self.challenge_per_share * shares as u64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GasEntry {
    pub block: u64,
    pub caller: Account,
    pub function: String,
    pub gas_units: u64,
    /// Model estimate rather than a measured constant.
    pub estimated: bool,
}

pub fn gas_csv(entries: &[GasEntry]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["block", "caller", "function", "gas_units", "cumulative_gas"]).expect("in-memory write");
    let mut total = 0u64;
    for e in entries {
        total += e.gas_units;
        w.write_record([
            e.block.to_string(),
            e.caller.to_string(),
            e.function.clone(),
            e.gas_units.to_string(),
            total.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn no_complain_line() {
        let g = GasSchedule::default();
        assert_eq!(g.no_complain(1), 42_929);
        assert_eq!(g.no_complain(10), 94_544);
    }

    #[test]
    fn csv_accumulates() {
        let e = |gas| GasEntry { block: 1, caller: Account::node(1), function: "x".into(), gas_units: gas, estimated: false };
        let out = gas_csv(&[e(5), e(7)]);
        assert_eq!(out, "block,caller,function,gas_units,cumulative_gas\n1,node:1,x,5,5\n1,node:1,x,7,12\n");
    }
}
