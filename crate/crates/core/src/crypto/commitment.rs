//! Hash commitments to 32-byte keys.

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{tagged_hash, TAG_COMMIT};

/// A 32-byte symmetric key. Its entropy is what hides the commitment.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KeyMaterial(pub [u8; 32]);

impl KeyMaterial {
    pub fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut k = [0u8; 32];
        rng.fill_bytes(&mut k);
        Self(k)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "KeyMaterial({}..)", hex::encode(&self.0[..4]))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Commitment(pub [u8; 32]);

impl Commitment {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl std::fmt::Debug for Commitment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Commitment({})", hex::encode(self.0))
    }
}

pub fn commit(key: &KeyMaterial) -> Commitment {
    Commitment(tagged_hash(TAG_COMMIT, &[&key.0]))
}

pub fn open(key: &KeyMaterial, com: &Commitment) -> bool {
    commit(key) == *com
}
