//! Cost reports and the Chainlink comparison.

use serde::{Deserialize, Serialize};

use crate::participants::World;

pub const PRICE_FEED_GAS: u64 = 216_844;
pub const API_CALL_GAS: u64 = 1_470_295;

/// Fixed reference prices, May-2024 snapshot.
pub const REFERENCE_GAS_PRICE_GWEI: f64 = 10.96;
pub const REFERENCE_ETH_USD: f64 = 3_510.0;

pub fn gas_to_usd(gas: u64) -> f64 {
    gas as f64 * REFERENCE_GAS_PRICE_GWEI * 1e-9 * REFERENCE_ETH_USD
}

/// Chainlink calls needed to deliver `total_bytes`.
pub fn chainlink_calls(total_bytes: u64, bytes_per_call: u64) -> u64 {
    total_bytes.div_ceil(bytes_per_call)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub configuration: String,
    pub n: usize,
    pub t: usize,
    pub f: usize,
    pub m: usize,
    pub datum_size_bytes: usize,
    /// Data volume delivered to the consumer, `m * datum_size_bytes`.
    pub total_bytes: u64,
    pub bytes_per_chainlink_call: u64,
    pub total_gas_dexo: u64,
    pub total_calls: usize,
    pub sessions: usize,
    pub no_complain_gas: u64,
    pub gas_chainlink_pricefeed: u64,
    pub gas_chainlink_apicall: u64,
    pub violations: usize,
}

impl CostRow {
    pub fn from_world(configuration: String, world: &World, violations: usize) -> Self {
        let c = &world.config;
        let total_bytes = (c.m * c.datum_size_bytes) as u64;
        let bytes_per_call = c.chainlink_bytes_per_call as u64;
        let calls = chainlink_calls(total_bytes, bytes_per_call);
        let no_complain_gas = world
            .ledger
            .gas_log()
            .iter()
            .filter(|e| e.function == crate::ledger::gas::FN_NO_COMPLAIN)
            .map(|e| e.gas_units)
            .sum();
        Self {
            configuration,
            n: c.n,
            t: c.t,
            f: c.f,
            m: c.m,
            datum_size_bytes: c.datum_size_bytes,
            total_bytes,
            bytes_per_chainlink_call: bytes_per_call,
            total_gas_dexo: world.ledger.total_gas(),
            total_calls: world.ledger.contract_call_count(),
            sessions: world.outcome().key_sessions,
            no_complain_gas,
            gas_chainlink_pricefeed: calls * PRICE_FEED_GAS,
            gas_chainlink_apicall: calls * API_CALL_GAS,
            violations,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostReport {
    pub rows: Vec<CostRow>,
}

impl CostReport {
    pub fn to_csv(&self) -> String {
        write_csv(&self.rows)
    }

    pub fn from_csv(text: &str) -> Result<Self, csv::Error> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        let rows = r.deserialize().collect::<Result<Vec<CostRow>, _>>()?;
        Ok(Self { rows })
    }

    pub fn violations(&self) -> usize {
        self.rows.iter().map(|r| r.violations).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub configuration: String,
    pub n: usize,
    pub t: usize,
    pub m: usize,
    pub total_bytes: u64,
    pub total_gas_dexo: u64,
    pub gas_chainlink_pricefeed: u64,
    pub gas_chainlink_apicall: u64,
    /// DEXO gas over Price Feed gas; empty when the feed costs nothing.
    pub ratio_pricefeed: Option<f64>,
    pub dexo_below_pricefeed: bool,
    pub dexo_below_apicall: bool,
    /// The Price Feed ordering flips relative to the previous row.
    pub crossover: bool,
    pub usd_dexo: f64,
    pub usd_pricefeed: f64,
    pub usd_apicall: f64,
}

/// Recomputes the Chainlink columns from each row's volume and payload
/// assumption and flags crossover points.
pub fn compare_chainlink(report: &CostReport) -> Vec<ComparisonRow> {
    let mut out: Vec<ComparisonRow> = Vec::with_capacity(report.rows.len());
    for r in &report.rows {
        let calls = chainlink_calls(r.total_bytes, r.bytes_per_chainlink_call.max(1));
        let pf = calls * PRICE_FEED_GAS;
        let api = calls * API_CALL_GAS;
        let below = r.total_gas_dexo < pf;
        let crossover = out.last().is_some_and(|p| p.dexo_below_pricefeed != below);
        out.push(ComparisonRow {
            configuration: r.configuration.clone(),
            n: r.n,
            t: r.t,
            m: r.m,
            total_bytes: r.total_bytes,
            total_gas_dexo: r.total_gas_dexo,
            gas_chainlink_pricefeed: pf,
            gas_chainlink_apicall: api,
            ratio_pricefeed: (pf > 0).then(|| r.total_gas_dexo as f64 / pf as f64),
            dexo_below_pricefeed: below,
            dexo_below_apicall: r.total_gas_dexo < api,
            crossover,
            usd_dexo: gas_to_usd(r.total_gas_dexo),
            usd_pricefeed: gas_to_usd(pf),
            usd_apicall: gas_to_usd(api),
        });
    }
    out
}

pub fn comparison_csv(rows: &[ComparisonRow]) -> String {
    write_csv(rows)
}

fn write_csv<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row).expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("csv is utf-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(gas: u64, bytes: u64) -> CostRow {
        CostRow {
            configuration: "x, \"quoted\"".into(),
            n: 5,
            t: 3,
            f: 2,
            m: 1,
            datum_size_bytes: bytes as usize,
            total_bytes: bytes,
            bytes_per_chainlink_call: 10,
            total_gas_dexo: gas,
            total_calls: 26,
            sessions: 3,
            no_complain_gas: 42_929,
            gas_chainlink_pricefeed: 0,
            gas_chainlink_apicall: 0,
            violations: 0,
        }
    }

    #[test]
    fn chainlink_columns_round_up() {
        let cmp = compare_chainlink(&CostReport { rows: vec![row(1, 25)] });
        assert_eq!(cmp[0].gas_chainlink_pricefeed, 3 * PRICE_FEED_GAS);
        assert_eq!(cmp[0].gas_chainlink_apicall, 3 * API_CALL_GAS);
    }

    #[test]
    fn zero_volume_gives_zero_chainlink_cost() {
        let cmp = compare_chainlink(&CostReport { rows: vec![row(5, 0)] });
        assert_eq!(cmp[0].gas_chainlink_pricefeed, 0);
        assert_eq!(cmp[0].gas_chainlink_apicall, 0);
        assert_eq!(cmp[0].ratio_pricefeed, None);
    }

    #[test]
    fn crossover_flags_sign_changes() {
        let rows = vec![row(100, 10), row(10_000_000, 10), row(20_000_000, 10), row(1, 10)];
        let flags: Vec<bool> = compare_chainlink(&CostReport { rows }).iter().map(|r| r.crossover).collect();
        assert_eq!(flags, [false, true, false, true]);
    }

    #[test]
    fn csv_round_trip_with_quoting() {
        let report = CostReport { rows: vec![row(7, 10), row(9, 20)] };
        let text = report.to_csv();
        assert!(text.contains("\"x, \"\"quoted\"\"\""));
        assert_eq!(CostReport::from_csv(&text).unwrap(), report);
    }

    #[test]
    fn usd_uses_reference_prices() {
        let usd = gas_to_usd(1_000_000_000);
        assert!((usd - 10.96 * 3_510.0).abs() < 1e-6);
    }
}
