//! Acceptance suite. Runs without the libtest harness so every criterion
//! prints its verdict line even when it passes.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use dexo::config::{max_faults, ScenarioConfig, ThresholdRule};
use dexo::crypto::{create_shares, reconstruct, FormattedDatum, SecretShare};
use dexo::harness::{self, Axis, CostReport};
use dexo::ledger::{gas, Account};
use dexo::netsim::adversary::STANDARD_NAMES;
use dexo::netsim::{random_case, replay, run_scenario, script_by_name, AdversaryScript, RunResult};

type Verdict = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn run(config: &ScenarioConfig, script: &AdversaryScript) -> Result<RunResult, String> {
    run_scenario(config, script).map_err(|e| format!("{} seed {}: {e}", script.name, config.seed))
}

fn no_violations(r: &RunResult) -> Result<(), String> {
    check(r.monitor.ok(), || {
        format!("{} seed {}: {:?}", r.trace.script.name, r.trace.config.seed, r.monitor.violations)
    })
}

fn criterion_1() -> Verdict {
    let mut slowest = Duration::ZERO;
    for (n, t) in [(5, 3), (10, 6), (20, 10)] {
        let expected = 3 * n + 3 * t + 2;
        for m in [1, 5, 20] {
            let c = ScenarioConfig::new(n, t, max_faults(n, t), m);
            let start = Instant::now();
            let r = run(&c, &AdversaryScript::honest())?;
            slowest = slowest.max(start.elapsed());
            no_violations(&r)?;
            check(r.outcome.contract_calls == expected, || {
                format!("n={n} t={t} m={m}: {} calls, expected {expected}", r.outcome.contract_calls)
            })?;
            check(r.outcome.reconstructed == m, || format!("n={n} t={t} m={m}: reconstructed {}", r.outcome.reconstructed))?;
        }
    }
    check(slowest < Duration::from_secs(5), || format!("slowest scenario took {slowest:?}"))?;
    Ok(format!("26/50/92 calls independent of M, slowest scenario {slowest:.1?}"))
}

fn criterion_2() -> Verdict {
    let mut seen = Vec::new();
    for (n, t, f) in [(10, 6, 4), (21, 11, 6)] {
        let mut c = ScenarioConfig::new(n, t, f, 3);
        c.shared_key = true;
        let r = run(&c, &AdversaryScript::honest())?;
        no_violations(&r)?;
        let st = r.world.ledger.contract(r.world.cid).expect("listing");
        let key_bearing = st.buyers.values().flat_map(|b| b.sessions.values()).filter(|s| s.key_out_at.is_some()).count();
        check(r.outcome.key_sessions == f + 1 && key_bearing == f + 1, || {
            format!("n={n}: {} paid sessions, {key_bearing} key-bearing, expected {}", r.outcome.key_sessions, f + 1)
        })?;
        check(r.outcome.reconstructed == 3, || format!("n={n}: reconstructed {}", r.outcome.reconstructed))?;
        seen.push(format!("n={n} -> {key_bearing}"));
    }
    Ok(format!("key-bearing sessions {}", seen.join(", ")))
}

fn criterion_3() -> Verdict {
    let c = ScenarioConfig::new(5, 3, 2, 2);
    let r = run(&c, &AdversaryScript::honest())?;
    let table = [
        (gas::FN_DEPLOY, 2_325_998u64),
        (gas::FN_INITIALIZE, 74_248),
        (gas::FN_ACCEPT, 74_843),
        (gas::FN_REVEAL_KEY, 84_334),
        (gas::FN_CHECK_KEY, 3_457),
    ];
    for (function, expected) in table {
        let charged: Vec<u64> =
            r.world.ledger.gas_log().iter().filter(|e| e.function == function).map(|e| e.gas_units).collect();
        check(!charged.is_empty() && charged.iter().all(|&g| g == expected), || {
            format!("{function}: charged {charged:?}, expected {expected}")
        })?;
    }
    let values: Vec<u64> = (1..=50).collect();
    let report = harness::sweep(&c, Axis::M, &values, None).map_err(|e| e.to_string())?;
    for row in &report.rows {
        let expected = 37_194 + 5_735 * row.m as u64;
        check(row.no_complain_gas == expected, || {
            format!("noComplain at m={}: {} != {expected}", row.m, row.no_complain_gas)
        })?;
    }
    Ok("table constants exact, noComplain = 37194 + 5735*M for M in 1..=50".into())
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut configs = Vec::new();
    for n in 5..=50usize {
        for rule in [ThresholdRule::Half, ThresholdRule::TwoThirds] {
            for m in [10, 30, 50] {
                let t = rule.threshold(n);
                let mut c = ScenarioConfig::new(n, t, max_faults(n, t), m);
                c.datum_size_bytes = 100;
                configs.push(c);
            }
        }
    }
    let big = harness::run_all(&configs).map_err(|e| e.to_string())?;
    let mut small_configs = Vec::new();
    for m in [10, 30, 50] {
        let mut c = ScenarioConfig::new(25, 13, max_faults(25, 13), m);
        c.datum_size_bytes = 10;
        small_configs.push(c);
    }
    let small = harness::run_all(&small_configs).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    check(big.violations() + small.violations() == 0, || "invariant violation inside the sweep".into())?;
    let worst = big
        .rows
        .iter()
        .map(|r| r.total_gas_dexo as f64 / r.gas_chainlink_pricefeed as f64)
        .fold(0.0f64, f64::max);
    if let Some(r) = big.rows.iter().find(|r| r.total_gas_dexo >= r.gas_chainlink_pricefeed) {
        return Err(format!("100B {}: DEXO {} >= Price Feed {}", r.configuration, r.total_gas_dexo, r.gas_chainlink_pricefeed));
    }
    let ratios = ratios(&small);
    let at_30 = ratios[1];
    check((at_30 - 1.0).abs() <= 0.10, || format!("10B n=25 t=13 m=30: DEXO/PriceFeed = {at_30:.3}"))?;
    check(elapsed < Duration::from_secs(30), || format!("sweep took {elapsed:?}"))?;
    Ok(format!(
        "{} rows at 100B all below Price Feed (worst ratio {worst:.3}); 10B n=25 ratio {:.3}/{:.3}/{:.3} at M=10/30/50; {elapsed:.1?}",
        big.rows.len(),
        ratios[0],
        ratios[1],
        ratios[2]
    ))
}

fn ratios(report: &CostReport) -> Vec<f64> {
    report.rows.iter().map(|r| r.total_gas_dexo as f64 / r.gas_chainlink_pricefeed as f64).collect()
}

// Field arithmetic for the oracle, written from the definition rather than tables.
fn slow_mul(mut a: u8, mut b: u8) -> u8 {
    let mut p = 0u8;
    while b != 0 {
        if b & 1 != 0 {
            p ^= a;
        }
        let carry = a & 0x80 != 0;
        a <<= 1;
        if carry {
            a ^= 0x1b;
        }
        b >>= 1;
    }
    p
}

fn slow_inv(a: u8) -> u8 {
    (1..=255u8).find(|&b| slow_mul(a, b) == 1).expect("nonzero element")
}

fn slow_eval(coeffs: &[u8], x: u8) -> u8 {
    let mut acc = 0u8;
    let mut pow = 1u8;
    for &c in coeffs {
        acc ^= slow_mul(c, pow);
        pow = slow_mul(pow, x);
    }
    acc
}

fn lagrange_at_zero(points: &[(u8, u8)]) -> u8 {
    let mut acc = 0u8;
    for (i, &(xi, yi)) in points.iter().enumerate() {
        let mut num = 1u8;
        let mut den = 1u8;
        for (j, &(xj, _)) in points.iter().enumerate() {
            if i != j {
                num = slow_mul(num, xj);
                den = slow_mul(den, xi ^ xj);
            }
        }
        acc ^= slow_mul(yi, slow_mul(num, slow_inv(den)));
    }
    acc
}

fn pick_subset(rng: &mut ChaCha20Rng, n: usize, k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = rng.gen_range(i..n);
        idx.swap(i, j);
    }
    idx.truncate(k);
    idx
}

/// Feeds `create_shares` a fixed coefficient stream.
struct Scripted<'a>(&'a [u8], usize);

impl RngCore for Scripted<'_> {
    fn next_u32(&mut self) -> u32 {
        unimplemented!()
    }
    fn next_u64(&mut self) -> u64 {
        unimplemented!()
    }
    fn fill_bytes(&mut self, dest: &mut [u8]) {
        for b in dest {
            *b = self.0[self.1];
            self.1 += 1;
        }
    }
    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), rand::Error> {
        self.fill_bytes(dest);
        Ok(())
    }
}

fn criterion_5() -> Verdict {
    let mut rng = ChaCha20Rng::seed_from_u64(0x5eed);
    for case in 0..500 {
        let n = rng.gen_range(1..=6usize);
        let t = rng.gen_range(1..=n);
        let len = rng.gen_range(1..=2usize);
        let datum: Vec<u8> = (0..len).map(|_| rng.gen()).collect();
        let d = FormattedDatum::new(datum.clone()).map_err(|e| e.to_string())?;

        // library shares, oracle reconstruction
        let shares = create_shares(t, n, &d, 1, &mut rng).map_err(|e| e.to_string())?;
        let k = rng.gen_range(t..=n);
        let subset: Vec<SecretShare> = pick_subset(&mut rng, n, k).into_iter().map(|i| shares[i].clone()).collect();
        let lib = reconstruct(t, n, &subset).map_err(|e| format!("case {case}: {e}"))?.into_bytes();
        let oracle: Vec<u8> =
            (0..len).map(|b| lagrange_at_zero(&subset[..t].iter().map(|s| (s.x, s.y[b])).collect::<Vec<_>>())).collect();
        check(lib == datum && oracle == datum, || {
            format!("case {case} n={n} t={t}: library {lib:?}, oracle {oracle:?}, datum {datum:?}")
        })?;

        // oracle shares, library reconstruction
        let polys: Vec<Vec<u8>> = datum
            .iter()
            .map(|&s| std::iter::once(s).chain((1..t).map(|_| rng.gen())).collect())
            .collect();
        let oracle_shares: Vec<SecretShare> = pick_subset(&mut rng, n, t)
            .into_iter()
            .map(|i| {
                let x = i as u8 + 1;
                SecretShare { provider_index: 1, node_index: x as u32, x, y: polys.iter().map(|p| slow_eval(p, x)).collect() }
            })
            .collect();
        let lib = reconstruct(t, n, &oracle_shares).map_err(|e| format!("case {case}: {e}"))?.into_bytes();
        check(lib == datum, || format!("case {case} n={n} t={t}: library read oracle shares as {lib:?}"))?;
    }

    // (t-1) shares are uniform and independent of the secret.
    for t in [2usize, 3] {
        let n = t;
        let width = t - 1;
        let space = 1usize << (8 * width);
        let subsets: Vec<Vec<usize>> = (0..n).map(|skip| (0..n).filter(|&i| i != skip).collect()).collect();
        for secret in 0..=255u8 {
            let d = FormattedDatum::new(vec![secret]).map_err(|e| e.to_string())?;
            let mut hits = vec![vec![0u8; space]; subsets.len()];
            for coeffs in 0..space {
                let bytes: Vec<u8> = (0..width).map(|b| (coeffs >> (8 * b)) as u8).collect();
                let shares = create_shares(t, n, &d, 1, &mut Scripted(&bytes, 0)).map_err(|e| e.to_string())?;
                for (s, subset) in subsets.iter().enumerate() {
                    let cell = subset.iter().fold(0usize, |acc, &i| (acc << 8) | shares[i].y[0] as usize);
                    hits[s][cell] += 1;
                }
            }
            for (s, h) in hits.iter().enumerate() {
                check(h.iter().all(|&c| c == 1), || {
                    format!("t={t} secret {secret}: view of nodes {:?} is not uniform", subsets[s])
                })?;
            }
        }
    }
    Ok("500 oracle cases agree; (t-1)-share views uniform for every secret at t=2,3".into())
}

fn criterion_6(runs: &mut Vec<RunResult>) -> Verdict {
    let start = Instant::now();
    let (n, t) = (7usize, 4usize);
    let base = ScenarioConfig::new(n, t, 3, 3);
    let mut scripts: Vec<AdversaryScript> =
        STANDARD_NAMES.iter().map(|name| script_by_name(name, &base).expect("catalog")).collect();
    scripts.push(script_by_name("FALSE_ACCUSATION", &base).expect("catalog"));
    let consumer_funds = 2 * base.price();
    for script in &scripts {
        for seed in 0..20u64 {
            let mut c = base.clone();
            c.seed = seed;
            let r = run(&c, script)?;
            no_violations(&r)?;
            let at = || format!("{} seed {seed}", script.name);
            match script.name.as_str() {
                "HONEST" | "WITHHOLD_KEYS" | "TAMPER_SHARES" | "SERVER_PERMUTE" => {
                    check(r.monitor.correct_all && r.outcome.reconstructed == 3, || format!("{}: data not reconstructed", at()))?
                }
                "SOURCE_NODE_COLLUSION" => check(
                    r.monitor.provider_income == 0
                        && r.world.ledger.balance(&Account::consumer()) == consumer_funds
                        && r.world.consumer.challenges.iter().any(|c| c.case == 1 && c.outcome.as_ref().is_ok_and(|o| o.is_refund())),
                    || format!("{}: no full refund through dispute", at()),
                )?,
                "CONSUMER_NODE_COLLUSION" | "SHARED_KEY_LEAK" => check(r.monitor.coalition_peak() < t, || {
                    format!("{}: coalition reached {:?}", at(), r.monitor.max_coalition)
                })?,
                "TAMPERED_TEE_PROVIDER" => check(r.outcome.contract_calls == 0 && r.monitor.provider_income == 0, || {
                    format!("{}: tampered output was listed", at())
                })?,
                _ => {}
            }
            for j in &r.monitor.challenge_refunds {
                check(script.corrupted_nodes.contains(j), || format!("{}: honest node {j} was refunded against", at()))?;
            }
            runs.push(r);
        }
    }
    let elapsed = start.elapsed();
    check(elapsed < Duration::from_secs(60), || format!("suite took {elapsed:?}"))?;
    Ok(format!("{} scripts x 20 seeds, zero violations, {elapsed:.1?}", scripts.len()))
}

fn criterion_7(runs: &mut Vec<RunResult>) -> Verdict {
    let mut paid = 0;
    let mut refunded = 0;
    for seed in 0..200u64 {
        let (config, script) = random_case(seed);
        let r = run(&config, &script)?;
        no_violations(&r)?;
        let income = r.monitor.provider_income;
        let consumer_funds = 2 * r.trace.config.price();
        let consumer_balance = r.world.ledger.balance(&Account::consumer());
        let honest_buyer = !script.consumer_corrupted();
        if r.monitor.correct_all {
            check(income > 0 || !honest_buyer, || format!("case {seed}: reconstructed without paying providers"))?;
            paid += 1;
        } else {
            check(income == 0 && consumer_balance == consumer_funds, || {
                format!("case {seed}: failed delivery but income {income}, buyer holds {consumer_balance}")
            })?;
            refunded += 1;
        }
        runs.push(r);
    }
    Ok(format!("200 random runs: {paid} delivered and paid, {refunded} undelivered and fully refunded"))
}

fn criterion_8(runs: &[RunResult]) -> Verdict {
    for r in runs {
        let at = || format!("{} seed {}", r.trace.script.name, r.trace.config.seed);
        check(r.world.ledger.total_currency() == r.world.ledger.genesis_supply(), || format!("{}: currency changed", at()))?;
        check(r.world.ledger.total_escrow() == 0, || format!("{}: escrow left over", at()))?;
        check(replay(&r.trace), || format!("{}: replay diverged", at()))?;
    }
    Ok(format!("{} runs conserve currency and replay byte-identically", runs.len()))
}

fn main() {
    let mut runs = Vec::new();
    let results: Vec<(&str, Verdict)> = vec![
        ("1 call-count law", criterion_1()),
        ("2 session reduction", criterion_2()),
        ("3 gas constants", criterion_3()),
        ("4 chainlink trend", criterion_4()),
        ("5 secret-sharing oracle", criterion_5()),
        ("6 adversarial suite", criterion_6(&mut runs)),
        ("7 fair-exchange atomicity", criterion_7(&mut runs)),
        ("8 conservation and replay", criterion_8(&runs)),
    ];
    let mut failed = 0;
    let mut summary = BTreeMap::new();
    for (name, verdict) in &results {
        match verdict {
            Ok(detail) => println!("criterion {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("criterion {name}: FAIL ({detail})");
            }
        }
        summary.insert(*name, verdict.is_ok());
    }
    println!("acceptance: {}/{} criteria passed", summary.values().filter(|&&ok| ok).count(), summary.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
