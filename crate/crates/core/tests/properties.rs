use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use dexo::crypto::cipher::apply_keystream_at;
use dexo::crypto::{
    commit, decrypt, encrypt, merkle, reconstruct, shamir::create_shares, FormattedDatum,
    KeyMaterial, PublicKey, SecretShare, Signature,
};
use dexo::encoding;
use dexo::ledger::{Account, DataDescription, Ledger};
use dexo::tee_sim::{AttestationReport, RuntimeMeasurement};

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    if n < k {
        return vec![];
    }
    let mut out = subsets(n - 1, k);
    for mut s in subsets(n - 1, k - 1) {
        s.push(n - 1);
        out.push(s);
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn any_t_shares_reconstruct(
        n in 1usize..=8,
        t_off in 0usize..8,
        datum in prop::collection::vec(any::<u8>(), 1..24),
        seed in any::<u64>(),
    ) {
        let t = 1 + t_off % n;
        let d = FormattedDatum::new(datum.clone()).unwrap();
        let shares = create_shares(t, n, &d, 1, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        for set in subsets(n, t) {
            let pick: Vec<SecretShare> = set.iter().map(|&i| shares[i].clone()).collect();
            prop_assert_eq!(reconstruct(t, n, &pick).unwrap().into_bytes(), datum.clone());
        }
        prop_assert_eq!(reconstruct(t, n, &shares).unwrap().into_bytes(), datum);
    }

    #[test]
    fn extra_tampered_share_is_detected(
        n in 3usize..=8,
        datum in prop::collection::vec(any::<u8>(), 1..8),
        victim in 0usize..8,
        flip in 1u8..=255,
        seed in any::<u64>(),
    ) {
        let t = n - 1;
        let d = FormattedDatum::new(datum).unwrap();
        let mut shares = create_shares(t, n, &d, 1, &mut ChaCha20Rng::seed_from_u64(seed)).unwrap();
        shares[victim % n].y[0] ^= flip;
        prop_assert!(reconstruct(t, n, &shares).is_err());
    }

    #[test]
    fn every_merkle_proof_verifies(
        data in prop::collection::vec(any::<u8>(), 1..400),
        tamper in any::<u8>(),
    ) {
        let chunks = merkle::chunk_bytes(&data);
        let root = merkle::merkle_root(&chunks).unwrap();
        for (i, c) in chunks.iter().enumerate() {
            let proof = merkle::merkle_prove(&chunks, i).unwrap();
            prop_assert!(merkle::merkle_verify(&root, c, &proof));
            let mut bad = c.to_vec();
            let at = tamper as usize % bad.len();
            bad[at] ^= 0x80;
            prop_assert!(!merkle::merkle_verify(&root, &bad, &proof));
        }
    }

    #[test]
    fn keystream_round_trip_and_offsets(
        data in prop::collection::vec(any::<u8>(), 0..300),
        key in any::<[u8; 32]>(),
        block in 0usize..10,
    ) {
        let k = KeyMaterial(key);
        let c = encrypt(&k, &data, b"tid");
        prop_assert_eq!(decrypt(&k, &c, b"tid"), data.clone());
        let start = (block * 32).min(data.len() / 32 * 32);
        prop_assert_eq!(apply_keystream_at(&k, b"tid", (start / 32) as u64, &data[start..]), c[start..].to_vec());
    }

    #[test]
    fn record_encoding_round_trips(
        provider in 1u32..1000,
        x in 1u8..=255,
        y in prop::collection::vec(any::<u8>(), 1..80),
        meas in any::<[u8; 32]>(),
        pk in any::<[u8; 32]>(),
        sig in prop::collection::vec(any::<u8>(), 64),
        count in 1usize..4,
    ) {
        let report = |p: u32| AttestationReport {
            share: SecretShare { provider_index: p, node_index: x as u32, x, y: y.clone() },
            measurement: RuntimeMeasurement(meas),
            signature: Signature(sig.clone().try_into().unwrap()),
            platform_public_key: PublicKey(pk),
        };
        let rec = encoding::encode_record(&report(provider));
        prop_assert_eq!(rec.len() % 32, 0);
        prop_assert_eq!(rec.len(), encoding::record_len(y.len()));
        prop_assert_eq!(encoding::decode_record(&rec, x as u32).unwrap(), report(provider));

        let reports: Vec<_> = (1..=count as u32).map(report).collect();
        let blob = encoding::encode_blob(&reports);
        let decoded = encoding::decode_blob(&blob, x as u32).unwrap();
        prop_assert_eq!(decoded.len(), count);
        for (i, (r, span)) in decoded.iter().enumerate() {
            prop_assert_eq!(r, &reports[i]);
            prop_assert_eq!(&blob[span.byte_range()], &encoding::encode_record(r)[..]);
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Accept(u32),
    Reveal(u32, bool),
    NoComplain,
    Advance(u64),
    Settle,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (1u32..=5).prop_map(Op::Accept),
        ((1u32..=5), any::<bool>()).prop_map(|(j, ok)| Op::Reveal(j, ok)),
        Just(Op::NoComplain),
        (1u64..6).prop_map(Op::Advance),
        Just(Op::Settle),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ledger_conserves_currency(ops in prop::collection::vec(op(), 1..40), price in 1u64..20) {
        let (n, m) = (5usize, 3usize);
        let price = price * n as u64;
        let mut genesis = BTreeMap::new();
        genesis.insert(Account::consumer(), 3 * price);
        let mut l = Ledger::new(genesis);
        let desc = DataDescription {
            format_width: 2, value_width: 1, value_min: 0, value_max: 255, m, n, t: 3, timeout_blocks: 8,
        };
        let nodes: Vec<Account> = (1..=n as u32).map(Account::node).collect();
        let sources = (1..=m as u32).map(Account::provider).collect();
        let cid = l.create_contract(&Account::server(), nodes, sources, price, desc).unwrap();
        let key = |j: u32| KeyMaterial([j as u8; 32]);
        for j in 1..=n as u32 {
            let root = merkle::merkle_root(&[[j as u8; 32]]).unwrap();
            l.initialize(&Account::node(j), cid, root, commit(&key(j))).unwrap();
        }
        l.query(&Account::consumer(), cid, "buyer").unwrap();
        let supply = l.genesis_supply();
        for op in ops {
            let _ = match op {
                Op::Accept(j) => l.accept(&Account::consumer(), cid, j, price / n as u64).map(drop),
                Op::Reveal(j, ok) => {
                    let k = if ok { key(j) } else { KeyMaterial([0xee; 32]) };
                    l.reveal_key(&Account::node(j), cid, k)
                }
                Op::NoComplain => l.no_complain(&Account::consumer(), cid),
                Op::Advance(b) => {
                    l.advance_block(b);
                    Ok(())
                }
                Op::Settle => {
                    l.settle_timeouts(cid);
                    Ok(())
                }
            };
            prop_assert_eq!(l.total_currency(), supply);
            let st = l.contract(cid).unwrap();
            let deposits: u64 = st.buyers.values().flat_map(|b| b.sessions.values()).map(|s| s.deposit).sum();
            prop_assert_eq!(st.escrow, deposits);
        }
        l.advance_block(100);
        l.settle_timeouts(cid);
        prop_assert_eq!(l.total_escrow(), 0);
        prop_assert_eq!(l.total_currency(), supply);
    }
}
