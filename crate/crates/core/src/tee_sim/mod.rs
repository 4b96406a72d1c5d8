//! Simulated attested execution.
//!
//! A [`TeeHost`] plays the role of the secure hardware: it installs trusted
//! application instances, each with its own signing key, and resumes them to
//! attest or to produce signed shares. The [`AttestationRegistry`] is the
//! vendor service that nodes ask whether a report came from genuine hardware
//! running the ratified code.

pub mod preprocess;

use std::collections::{BTreeMap, BTreeSet};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::crypto::{self, FormattedDatum, PublicKey, SecretShare, ShareError, Signature, SignatureKeyPair};
pub use preprocess::{preprocess, PreprocessError, PreprocessRule};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TeeError {
    #[error("unknown TEE instance {0}")]
    UnknownEid(u64),
    #[error("program descriptor is empty")]
    EmptyDescriptor,
    #[error("preprocessing failed: {0}")]
    Preprocessing(#[from] PreprocessError),
    #[error("sharing failed: {0}")]
    Sharing(#[from] ShareError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramDescriptor {
    pub code: Vec<u8>,
    pub version: u32,
}

impl ProgramDescriptor {
    /// The ratified data-provisioning application.
    pub fn dexo_ta() -> Self {
        Self { code: b"dexo-trusted-app:preprocess+share+sign".to_vec(), version: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Eid(pub u64);

#[derive(Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RuntimeMeasurement(pub [u8; 32]);

impl std::fmt::Debug for RuntimeMeasurement {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "RuntimeMeasurement({}..)", hex::encode(&self.0[..8]))
    }
}

pub fn measure(descriptor: &ProgramDescriptor, tampered: bool) -> RuntimeMeasurement {
    RuntimeMeasurement(crypto::hash(&[&descriptor.code, &descriptor.version.to_be_bytes(), &[tampered as u8]]))
}

/// Bytes covered by a report signature: the share content without its
/// destination, followed by the measurement.
pub fn report_message(share: &SecretShare, measurement: &RuntimeMeasurement) -> Vec<u8> {
    let mut m = Vec::with_capacity(9 + share.y.len() + 32);
    m.extend_from_slice(&share.provider_index.to_be_bytes());
    m.push(share.x);
    m.extend_from_slice(&(share.y.len() as u32).to_be_bytes());
    m.extend_from_slice(&share.y);
    m.extend_from_slice(&measurement.0);
    m
}

fn quote_message(measurement: &RuntimeMeasurement) -> Vec<u8> {
    let mut m = b"attest".to_vec();
    m.extend_from_slice(&measurement.0);
    m
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationReport {
    pub share: SecretShare,
    pub measurement: RuntimeMeasurement,
    pub signature: Signature,
    pub platform_public_key: PublicKey,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationQuote {
    pub measurement: RuntimeMeasurement,
    pub signature: Signature,
    pub platform_public_key: PublicKey,
}

#[derive(Debug)]
pub struct GenDataOutput {
    pub shares: Vec<SecretShare>,
    pub reports: Vec<AttestationReport>,
    pub mpk: PublicKey,
}

#[derive(Debug)]
pub struct TeeInstance {
    pub eid: Eid,
    pub program_hash: [u8; 32],
    pub descriptor: ProgramDescriptor,
    keypair: SignatureKeyPair,
    pub state: BTreeMap<String, Vec<u8>>,
    pub tampered: bool,
    rng: ChaCha20Rng,
}

impl TeeInstance {
    pub fn mpk(&self) -> PublicKey {
        self.keypair.public_key()
    }

    pub fn measurement(&self) -> RuntimeMeasurement {
        measure(&self.descriptor, self.tampered)
    }
}

/// Secure hardware hosting any number of instances.
#[derive(Debug)]
pub struct TeeHost {
    instances: BTreeMap<Eid, TeeInstance>,
    next_eid: u64,
    rng: ChaCha20Rng,
}

impl TeeHost {
    pub fn new(seed: u64) -> Self {
        Self { instances: BTreeMap::new(), next_eid: 1, rng: ChaCha20Rng::seed_from_u64(seed) }
    }

    pub fn install(&mut self, descriptor: ProgramDescriptor) -> Result<Eid, TeeError> {
        if descriptor.code.is_empty() {
            return Err(TeeError::EmptyDescriptor);
        }
        let eid = Eid(self.next_eid);
        self.next_eid += 1;
        let keypair = SignatureKeyPair::generate(&mut self.rng);
        let mut seed = [0u8; 32];
        self.rng.fill_bytes(&mut seed);
        let instance = TeeInstance {
            eid,
            program_hash: crypto::hash(&[&descriptor.code]),
            descriptor,
            keypair,
            state: BTreeMap::new(),
            tampered: false,
            rng: ChaCha20Rng::from_seed(seed),
        };
        self.instances.insert(eid, instance);
        Ok(eid)
    }

    pub fn instance(&self, eid: Eid) -> Option<&TeeInstance> {
        self.instances.get(&eid)
    }

    /// Adversary hook: replace the running code with a modified build.
    pub fn set_tampered(&mut self, eid: Eid, tampered: bool) -> Result<(), TeeError> {
        let inst = self.instances.get_mut(&eid).ok_or(TeeError::UnknownEid(eid.0))?;
        inst.tampered = tampered;
        Ok(())
    }

    pub fn resume_attest(&mut self, eid: Eid) -> Result<AttestationQuote, TeeError> {
        let inst = self.instances.get(&eid).ok_or(TeeError::UnknownEid(eid.0))?;
        let measurement = inst.measurement();
        let signature = crypto::sign(&inst.keypair, &quote_message(&measurement));
        Ok(AttestationQuote { measurement, signature, platform_public_key: inst.mpk() })
    }

    /// Preprocesses `raw`, shares the result `(t, n)` and signs every share.
    ///
    /// A tampered instance skips the preprocessing rule and shares the raw
    /// readings truncated to the rule's value width instead.
    pub fn resume_gendata(
        &mut self,
        eid: Eid,
        provider_index: u32,
        n: usize,
        t: usize,
        raw: &[u8],
        rule: &PreprocessRule,
    ) -> Result<GenDataOutput, TeeError> {
        let inst = self.instances.get_mut(&eid).ok_or(TeeError::UnknownEid(eid.0))?;
        let formatted = if inst.tampered {
            let width = rule.width();
            let readings = preprocess::decode_readings(raw)?;
            let mut out = Vec::new();
            for r in readings.iter().take(rule.output_len(readings.len()) / width.max(1)) {
                out.extend_from_slice(&r.to_be_bytes()[8 - width..]);
            }
            out
        } else {
            preprocess(raw, rule)?
        };
        let datum = FormattedDatum::new(formatted)?;
        let shares = crypto::create_shares(t, n, &datum, provider_index, &mut inst.rng)?;
        let measurement = inst.measurement();
        let mpk = inst.mpk();
        let reports = shares
            .iter()
            .map(|s| AttestationReport {
                share: s.clone(),
                measurement,
                signature: crypto::sign(&inst.keypair, &report_message(s, &measurement)),
                platform_public_key: mpk,
            })
            .collect();
        inst.state.insert("last_datum_len".into(), (datum.len() as u32).to_be_bytes().to_vec());
        Ok(GenDataOutput { shares, reports, mpk })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttestationRegistry {
    pub genuine_keys: BTreeSet<PublicKey>,
    pub expected_measurement: RuntimeMeasurement,
}

impl AttestationRegistry {
    pub fn new(expected_measurement: RuntimeMeasurement) -> Self {
        Self { genuine_keys: BTreeSet::new(), expected_measurement }
    }

    pub fn register(&mut self, key: PublicKey) {
        self.genuine_keys.insert(key);
    }

    pub fn verify_quote(&self, quote: &AttestationQuote) -> bool {
        self.genuine_keys.contains(&quote.platform_public_key)
            && quote.measurement == self.expected_measurement
            && crypto::verify(&quote.platform_public_key, &quote_message(&quote.measurement), &quote.signature)
    }
}

pub fn attest_report(registry: &AttestationRegistry, report: &AttestationReport) -> bool {
    registry.genuine_keys.contains(&report.platform_public_key)
        && report.measurement == registry.expected_measurement
        && crypto::verify(
            &report.platform_public_key,
            &report_message(&report.share, &report.measurement),
            &report.signature,
        )
}

/// Batch form of [`attest_report`]: true iff every report attests.
pub fn attest_reports(registry: &AttestationRegistry, reports: &[AttestationReport]) -> bool {
    if !reports
        .iter()
        .all(|r| registry.genuine_keys.contains(&r.platform_public_key) && r.measurement == registry.expected_measurement)
    {
        return false;
    }
    let messages: Vec<Vec<u8>> = reports.iter().map(|r| report_message(&r.share, &r.measurement)).collect();
    let items: Vec<_> = reports
        .iter()
        .zip(&messages)
        .map(|(r, m)| (r.platform_public_key, m.as_slice(), r.signature))
        .collect();
    crypto::verify_batch(&items)
}
