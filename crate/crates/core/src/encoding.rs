//! Canonical layout of the per-node share blob `z_j`.
//!
//! The plaintext blob is a sequence of records, one per provider in provider
//! order. Each record is
//!
//! ```text
//! u32 body_len | u32 provider | u8 x | u32 y_len | y | measurement[32] | mpk[32] | sig[64]
//! ```
//!
//! zero-padded to a multiple of 32 bytes, so every record starts on a chunk
//! boundary. Because the keystream block index equals the chunk index, a single
//! record can be re-encrypted on its own at its leaf offset.

use thiserror::Error;

use crate::crypto::{PublicKey, SecretShare, Signature, CHUNK_SIZE};
use crate::tee_sim::{AttestationReport, RuntimeMeasurement};

const FIXED_BODY: usize = 4 + 1 + 4 + 32 + 32 + 64;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EncodingError {
    #[error("record truncated at byte {0}")]
    Truncated(usize),
    #[error("record body length {0} is inconsistent")]
    BadLength(usize),
    #[error("nonzero padding")]
    BadPadding,
}

/// Leaf span of one record inside a blob.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecordSpan {
    pub first_leaf: usize,
    pub leaf_count: usize,
}

impl RecordSpan {
    pub fn byte_range(&self) -> std::ops::Range<usize> {
        self.first_leaf * CHUNK_SIZE..(self.first_leaf + self.leaf_count) * CHUNK_SIZE
    }
}

/// Padded record length for a datum of `datum_len` bytes.
pub fn record_len(datum_len: usize) -> usize {
    (4 + FIXED_BODY + datum_len).div_ceil(CHUNK_SIZE) * CHUNK_SIZE
}

/// Leaf span of the record at `position` (0-based provider order) when every
/// datum is `datum_len` bytes long.
pub fn record_span(position: usize, datum_len: usize) -> RecordSpan {
    let leaves = record_len(datum_len) / CHUNK_SIZE;
    RecordSpan { first_leaf: position * leaves, leaf_count: leaves }
}

pub fn encode_record(report: &AttestationReport) -> Vec<u8> {
    let s = &report.share;
    let body_len = FIXED_BODY + s.y.len();
    let mut out = Vec::with_capacity(record_len(s.y.len()));
    out.extend_from_slice(&(body_len as u32).to_be_bytes());
    out.extend_from_slice(&s.provider_index.to_be_bytes());
    out.push(s.x);
    out.extend_from_slice(&(s.y.len() as u32).to_be_bytes());
    out.extend_from_slice(&s.y);
    out.extend_from_slice(&report.measurement.0);
    out.extend_from_slice(&report.platform_public_key.0);
    out.extend_from_slice(&report.signature.0);
    out.resize(out.len().div_ceil(CHUNK_SIZE) * CHUNK_SIZE, 0);
    out
}

/// Decodes the record starting at `offset`; returns it with the number of
/// padded bytes it occupies.
pub fn decode_record_at(bytes: &[u8], offset: usize, node_index: u32) -> Result<(AttestationReport, usize), EncodingError> {
    let take = |from: usize, len: usize| bytes.get(from..from + len).ok_or(EncodingError::Truncated(from));
    let u32_at = |from: usize| take(from, 4).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize);
    let body_len = u32_at(offset)?;
    if body_len < FIXED_BODY {
        return Err(EncodingError::BadLength(body_len));
    }
    let mut p = offset + 4;
    let provider_index = u32_at(p)? as u32;
    p += 4;
    let x = take(p, 1)?[0];
    p += 1;
    let y_len = u32_at(p)?;
    p += 4;
    if y_len != body_len - FIXED_BODY {
        return Err(EncodingError::BadLength(body_len));
    }
    let y = take(p, y_len)?.to_vec();
    p += y_len;
    let measurement = RuntimeMeasurement(take(p, 32)?.try_into().unwrap());
    p += 32;
    let mpk = PublicKey(take(p, 32)?.try_into().unwrap());
    p += 32;
    let signature = Signature(take(p, 64)?.try_into().unwrap());
    p += 64;
    let padded = (p - offset).div_ceil(CHUNK_SIZE) * CHUNK_SIZE;
    let pad = take(p, offset + padded - p)?;
    if pad.iter().any(|&b| b != 0) {
        return Err(EncodingError::BadPadding);
    }
    let share = SecretShare { provider_index, node_index, x, y };
    Ok((AttestationReport { share, measurement, signature, platform_public_key: mpk }, padded))
}

pub fn decode_record(bytes: &[u8], node_index: u32) -> Result<AttestationReport, EncodingError> {
    let (report, used) = decode_record_at(bytes, 0, node_index)?;
    if used != bytes.len() {
        return Err(EncodingError::BadLength(bytes.len()));
    }
    Ok(report)
}

pub fn encode_blob(reports: &[AttestationReport]) -> Vec<u8> {
    reports.iter().flat_map(encode_record).collect()
}

/// Decodes every record of a blob together with its leaf span.
pub fn decode_blob(bytes: &[u8], node_index: u32) -> Result<Vec<(AttestationReport, RecordSpan)>, EncodingError> {
    let mut out = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let (report, used) = decode_record_at(bytes, offset, node_index)?;
        out.push((report, RecordSpan { first_leaf: offset / CHUNK_SIZE, leaf_count: used / CHUNK_SIZE }));
        offset += used;
    }
    Ok(out)
}
