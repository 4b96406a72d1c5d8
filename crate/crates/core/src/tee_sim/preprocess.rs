//! Preprocessing rules run inside the trusted application.
//!
//! Raw device data is a sequence of big-endian `u32` readings. Every rule
//! produces fixed-width big-endian values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PreprocessError {
    #[error("raw input is empty")]
    Empty,
    #[error("raw input length {0} is not a whole number of u32 readings")]
    Misaligned(usize),
    #[error("value width {0} must be between 1 and 4 bytes")]
    BadWidth(usize),
    #[error("range [{min}, {max}] is empty or does not fit the value width")]
    BadRange { min: u64, max: u64 },
    #[error("reading {value} does not fit in {width} bytes")]
    Overflow { value: u64, width: usize },
    #[error("moving average window must be at least 1")]
    BadWindow,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum PreprocessRule {
    /// Clamp every reading into `[min, max]`.
    ClampToRange { min: u64, max: u64, width: usize },
    /// Floor mean of the last `window` readings, clamped into `[min, max]`.
    MovingAverage { window: usize, min: u64, max: u64, width: usize },
    /// Encode every reading as is; fails if one does not fit.
    FixedWidthEncode { width: usize },
}

impl PreprocessRule {
    pub fn width(&self) -> usize {
        match *self {
            Self::ClampToRange { width, .. } | Self::MovingAverage { width, .. } | Self::FixedWidthEncode { width } => {
                width
            }
        }
    }

    /// Inclusive output value range.
    pub fn range(&self) -> (u64, u64) {
        match *self {
            Self::ClampToRange { min, max, .. } | Self::MovingAverage { min, max, .. } => (min, max),
            Self::FixedWidthEncode { width } => (0, width_max(width)),
        }
    }

    /// Output length in bytes for `readings` input readings.
    pub fn output_len(&self, readings: usize) -> usize {
        match self {
            Self::MovingAverage { width, .. } => *width,
            other => readings * other.width(),
        }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        let width = self.width();
        if !(1..=4).contains(&width) {
            return Err(PreprocessError::BadWidth(width));
        }
        let (min, max) = self.range();
        if min > max || max > width_max(width) {
            return Err(PreprocessError::BadRange { min, max });
        }
        if let Self::MovingAverage { window: 0, .. } = self {
            return Err(PreprocessError::BadWindow);
        }
        Ok(())
    }
}

pub fn width_max(width: usize) -> u64 {
    if width >= 8 {
        u64::MAX
    } else {
        (1u64 << (8 * width)) - 1
    }
}

pub fn decode_readings(raw: &[u8]) -> Result<Vec<u64>, PreprocessError> {
    if raw.is_empty() {
        return Err(PreprocessError::Empty);
    }
    if !raw.len().is_multiple_of(4) {
        return Err(PreprocessError::Misaligned(raw.len()));
    }
    Ok(raw.chunks(4).map(|c| u32::from_be_bytes([c[0], c[1], c[2], c[3]]) as u64).collect())
}

pub fn encode_readings(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_be_bytes()).collect()
}

/// Big-endian values of `width` bytes each.
pub fn decode_values(bytes: &[u8], width: usize) -> Vec<u64> {
    bytes
        .chunks(width)
        .map(|c| c.iter().fold(0u64, |acc, &b| (acc << 8) | b as u64))
        .collect()
}

fn push_value(out: &mut Vec<u8>, value: u64, width: usize) {
    out.extend_from_slice(&value.to_be_bytes()[8 - width..]);
}

pub fn preprocess(raw: &[u8], rule: &PreprocessRule) -> Result<Vec<u8>, PreprocessError> {
    rule.validate()?;
    let readings = decode_readings(raw)?;
    let width = rule.width();
    let mut out = Vec::with_capacity(rule.output_len(readings.len()));
    match *rule {
        PreprocessRule::ClampToRange { min, max, .. } => {
            for r in readings {
                push_value(&mut out, r.clamp(min, max), width);
            }
        }
        PreprocessRule::MovingAverage { window, min, max, .. } => {
            let w = window.min(readings.len());
            let tail = &readings[readings.len() - w..];
            let mean = tail.iter().sum::<u64>() / w as u64;
            push_value(&mut out, mean.clamp(min, max), width);
        }
        PreprocessRule::FixedWidthEncode { .. } => {
            for r in readings {
                if r > width_max(width) {
                    return Err(PreprocessError::Overflow { value: r, width });
                }
                push_value(&mut out, r, width);
            }
        }
    }
    Ok(out)
}
