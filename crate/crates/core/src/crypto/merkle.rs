//! Merkle trees over 32-byte chunks of a ciphertext.
//!
//! Leaves are `H(0x01 || chunk)`, inner nodes `H(0x02 || left || right)`. A
//! level with an odd number of nodes duplicates its last node.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{tagged_hash, Digest32, TAG_LEAF, TAG_NODE};

pub const CHUNK_SIZE: usize = 32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("no chunks to hash")]
    EmptyInput,
    #[error("leaf index {index} out of range for {count} leaves")]
    IndexOutOfRange { index: usize, count: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MerkleRoot {
    pub digest: Digest32,
    pub leaf_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MerkleProof {
    pub leaf_index: usize,
    pub siblings: Vec<Digest32>,
    pub leaf_count: usize,
}

/// Splits `data` into 32-byte chunks; the last one may be shorter. Empty data
/// yields a single empty chunk.
pub fn chunk_bytes(data: &[u8]) -> Vec<&[u8]> {
    if data.is_empty() {
        return vec![data];
    }
    data.chunks(CHUNK_SIZE).collect()
}

pub fn leaf_hash(chunk: &[u8]) -> Digest32 {
    tagged_hash(TAG_LEAF, &[chunk])
}

pub fn node_hash(left: &Digest32, right: &Digest32) -> Digest32 {
    tagged_hash(TAG_NODE, &[left, right])
}

fn next_level(level: &[Digest32]) -> Vec<Digest32> {
    level
        .chunks(2)
        .map(|pair| node_hash(&pair[0], pair.get(1).unwrap_or(&pair[0])))
        .collect()
}

/// Number of sibling hashes on a path: `ceil(log2(leaf_count))`.
pub fn depth(leaf_count: usize) -> usize {
    let mut d = 0;
    let mut n = leaf_count;
    while n > 1 {
        n = n.div_ceil(2);
        d += 1;
    }
    d
}

pub fn merkle_root<C: AsRef<[u8]>>(chunks: &[C]) -> Result<MerkleRoot, MerkleError> {
    if chunks.is_empty() {
        return Err(MerkleError::EmptyInput);
    }
    let mut level: Vec<Digest32> = chunks.iter().map(|c| leaf_hash(c.as_ref())).collect();
    while level.len() > 1 {
        level = next_level(&level);
    }
    Ok(MerkleRoot { digest: level[0], leaf_count: chunks.len() })
}

pub fn merkle_prove<C: AsRef<[u8]>>(chunks: &[C], leaf_index: usize) -> Result<MerkleProof, MerkleError> {
    if chunks.is_empty() {
        return Err(MerkleError::EmptyInput);
    }
    if leaf_index >= chunks.len() {
        return Err(MerkleError::IndexOutOfRange { index: leaf_index, count: chunks.len() });
    }
    let mut level: Vec<Digest32> = chunks.iter().map(|c| leaf_hash(c.as_ref())).collect();
    let mut idx = leaf_index;
    let mut siblings = Vec::with_capacity(depth(chunks.len()));
    while level.len() > 1 {
        let sib = (idx ^ 1).min(level.len() - 1);
        siblings.push(level[sib]);
        level = next_level(&level);
        idx /= 2;
    }
    Ok(MerkleProof { leaf_index, siblings, leaf_count: chunks.len() })
}

pub fn merkle_verify(root: &MerkleRoot, chunk: &[u8], proof: &MerkleProof) -> bool {
    if proof.leaf_count != root.leaf_count
        || proof.leaf_index >= proof.leaf_count
        || proof.siblings.len() != depth(proof.leaf_count)
    {
        return false;
    }
    let mut acc = leaf_hash(chunk);
    let mut idx = proof.leaf_index;
    for sib in &proof.siblings {
        acc = if idx.is_multiple_of(2) { node_hash(&acc, sib) } else { node_hash(sib, &acc) };
        idx /= 2;
    }
    acc == root.digest
}
