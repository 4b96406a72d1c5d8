//! Deterministic keystream cipher.
//!
//! Block `i` of the keystream is `SHA-256(key || nonce || i)` with `i` as a
//! big-endian u64. Ciphertext is plaintext XOR keystream, so lengths match and
//! any 32-byte aligned span can be re-encrypted on its own.

use super::{hash, KeyMaterial};

pub const BLOCK_SIZE: usize = 32;

fn keystream_block(key: &KeyMaterial, nonce: &[u8], counter: u64) -> [u8; 32] {
    hash(&[&key.0, nonce, &counter.to_be_bytes()])
}

/// XORs `data` with the keystream starting at block `first_block`.
pub fn apply_keystream_at(key: &KeyMaterial, nonce: &[u8], first_block: u64, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(data.len());
    for (i, chunk) in data.chunks(BLOCK_SIZE).enumerate() {
        let ks = keystream_block(key, nonce, first_block + i as u64);
        out.extend(chunk.iter().zip(ks.iter()).map(|(a, b)| a ^ b));
    }
    out
}

pub fn encrypt(key: &KeyMaterial, plaintext: &[u8], nonce: &[u8]) -> Vec<u8> {
    apply_keystream_at(key, nonce, 0, plaintext)
}

pub fn decrypt(key: &KeyMaterial, ciphertext: &[u8], nonce: &[u8]) -> Vec<u8> {
    apply_keystream_at(key, nonce, 0, ciphertext)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_lengths() {
        let k = KeyMaterial([3u8; 32]);
        for len in [0usize, 1, 31, 32, 33, 100] {
            let p: Vec<u8> = (0..len).map(|i| (i * 7) as u8).collect();
            let c = encrypt(&k, &p, b"tid");
            assert_eq!(c.len(), len);
            assert_eq!(decrypt(&k, &c, b"tid"), p);
        }
    }

    #[test]
    fn offset_span_matches_full_encryption() {
        let k = KeyMaterial([9u8; 32]);
        let p: Vec<u8> = (0..200u8).collect();
        let c = encrypt(&k, &p, b"n");
        assert_eq!(apply_keystream_at(&k, b"n", 2, &p[64..130]), c[64..130].to_vec());
    }

    #[test]
    fn nonce_changes_ciphertext() {
        let k = KeyMaterial([1u8; 32]);
        assert_ne!(encrypt(&k, &[0u8; 32], b"a"), encrypt(&k, &[0u8; 32], b"b"));
    }
}
