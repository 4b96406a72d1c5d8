//! Cryptographic primitives used across the protocol.

pub mod cipher;
pub mod commitment;
pub mod gf256;
pub mod merkle;
pub mod shamir;
pub mod signature;

use sha2::{Digest, Sha256};

pub use cipher::{decrypt, encrypt};
pub use commitment::{commit, open, Commitment, KeyMaterial};
pub use merkle::{merkle_prove, merkle_root, merkle_verify, MerkleError, MerkleProof, MerkleRoot, CHUNK_SIZE};
pub use shamir::{create_shares, reconstruct, FormattedDatum, SecretShare, ShareError};
pub use signature::{sign, verify, verify_batch, PublicKey, Signature, SignatureKeyPair};

pub const TAG_COMMIT: u8 = 0x00;
pub const TAG_LEAF: u8 = 0x01;
pub const TAG_NODE: u8 = 0x02;

pub type Digest32 = [u8; 32];

/// SHA-256 over the concatenation of `parts`.
pub fn hash(parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}

/// SHA-256 of a domain tag followed by `parts`.
pub fn tagged_hash(tag: u8, parts: &[&[u8]]) -> Digest32 {
    let mut h = Sha256::new();
    h.update([tag]);
    for p in parts {
        h.update(p);
    }
    h.finalize().into()
}
