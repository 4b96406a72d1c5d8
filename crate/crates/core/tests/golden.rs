use std::collections::BTreeMap;

use dexo::crypto::cipher::apply_keystream_at;
use dexo::crypto::{commit, merkle, KeyMaterial};

fn golden() -> BTreeMap<String, Vec<u8>> {
    include_str!("fixtures/golden.txt")
        .lines()
        .filter_map(|l| l.split_once(' '))
        .map(|(k, v)| (k.to_string(), hex::decode(v).expect("fixture hex")))
        .collect()
}

fn expect(name: &str) -> Vec<u8> {
    golden().remove(name).unwrap_or_else(|| panic!("missing fixture {name}"))
}

#[test]
fn commitments_match_fixture() {
    assert_eq!(commit(&KeyMaterial([0; 32])).0.to_vec(), expect("commit_zero_key"));
    assert_eq!(commit(&KeyMaterial([0xff; 32])).0.to_vec(), expect("commit_ff_key"));
}

#[test]
fn merkle_roots_match_fixture() {
    let a: Vec<u8> = (0..32).collect();
    let b: Vec<u8> = (32..64).collect();
    let zero = vec![0u8; 32];
    assert_eq!(merkle::merkle_root(&[&zero]).unwrap().digest.to_vec(), expect("merkle_root_one_zero_chunk"));
    assert_eq!(merkle::merkle_root(&[&a, &a]).unwrap().digest.to_vec(), expect("merkle_root_two_identical_chunks"));
    assert_eq!(merkle::merkle_root(&[&a, &b, &zero]).unwrap().digest.to_vec(), expect("merkle_root_three_chunks"));
}

#[test]
fn keystream_matches_fixture() {
    let zero = KeyMaterial([0; 32]);
    assert_eq!(apply_keystream_at(&zero, b"tid", 0, &[0u8; 70]), expect("keystream_zero_key_tid_70_bytes"));
    let data: Vec<u8> = (0..40).collect();
    assert_eq!(
        apply_keystream_at(&KeyMaterial([7; 32]), b"nonce", 3, &data),
        expect("keystream_07_key_nonce_block_3")
    );
}
