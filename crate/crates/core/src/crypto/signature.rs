//! Ed25519 signatures for TEE attestation.

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use rand::RngCore;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PublicKey(pub [u8; 32]);

impl std::fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..8]))
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; 64]);

impl std::fmt::Debug for Signature {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..8]))
    }
}

impl Serialize for Signature {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 64] = bytes.try_into().map_err(|_| serde::de::Error::custom("signature length"))?;
        Ok(Signature(arr))
    }
}

/// Signing key pair. The secret half never leaves this struct except through
/// `sign`.
pub struct SignatureKeyPair {
    signing: SigningKey,
}

impl SignatureKeyPair {
    pub fn from_seed(seed: [u8; 32]) -> Self {
        Self { signing: SigningKey::from_bytes(&seed) }
    }

    pub fn generate<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut seed = [0u8; 32];
        rng.fill_bytes(&mut seed);
        Self::from_seed(seed)
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    #[cfg(test)]
    pub(crate) fn secret_bytes(&self) -> [u8; 32] {
        self.signing.to_bytes()
    }
}

impl std::fmt::Debug for SignatureKeyPair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SignatureKeyPair").field("public_key", &self.public_key()).finish_non_exhaustive()
    }
}

pub fn sign(keypair: &SignatureKeyPair, message: &[u8]) -> Signature {
    Signature(keypair.signing.sign(message).to_bytes())
}

pub fn verify(public_key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&public_key.0) else {
        return false;
    };
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    vk.verify(message, &sig).is_ok()
}

/// True iff every `(key, message, signature)` triple verifies.
pub fn verify_batch(items: &[(PublicKey, &[u8], Signature)]) -> bool {
    if items.len() < 2 {
        return items.iter().all(|(pk, msg, sig)| verify(pk, msg, sig));
    }
    let mut keys = Vec::with_capacity(items.len());
    let mut cache: Vec<(PublicKey, VerifyingKey)> = Vec::new();
    for (pk, _, _) in items {
        let vk = match cache.iter().find(|(p, _)| p == pk) {
            Some((_, vk)) => *vk,
            None => {
                let Ok(vk) = VerifyingKey::from_bytes(&pk.0) else {
                    return false;
                };
                cache.push((*pk, vk));
                vk
            }
        };
        keys.push(vk);
    }
    let messages: Vec<&[u8]> = items.iter().map(|(_, m, _)| *m).collect();
    let sigs: Vec<ed25519_dalek::Signature> =
        items.iter().map(|(_, _, s)| ed25519_dalek::Signature::from_bytes(&s.0)).collect();
    ed25519_dalek::verify_batch(&messages, &sigs, &keys).is_ok()
}
