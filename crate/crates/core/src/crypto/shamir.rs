//! Byte-wise (t, n) Shamir sharing over GF(256).
//!
//! Every byte of a datum is the constant term of its own random polynomial of
//! degree `t - 1`. Node `j` receives the evaluations at `x = j`, so a share is
//! exactly as long as the datum it came from.

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::gf256;

/// Upper bound on a formatted datum, in bytes.
pub const MAX_DATUM_BYTES: usize = 4096;

/// Largest subset enumeration attempted when locating inconsistent shares.
const MAX_DECODE_SUBSETS: usize = 4096;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ShareError {
    #[error("threshold {t} out of range for {n} shares")]
    ThresholdOutOfRange { t: usize, n: usize },
    #[error("datum is empty")]
    EmptyDatum,
    #[error("datum of {0} bytes exceeds the maximum")]
    DatumTooLarge(usize),
    #[error("insufficient shares: need {needed}, got {got}")]
    InsufficientShares { needed: usize, got: usize },
    #[error("inconsistent shares at x = {0:?}")]
    InconsistentShares(Vec<u8>),
    #[error("duplicate x-coordinate {0}")]
    DuplicateX(u8),
    #[error("x-coordinate {0} is zero or larger than the share count")]
    InvalidX(u8),
    #[error("share lengths differ")]
    LengthMismatch,
}

/// A pre-processed, formatted datum ready for sharing.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FormattedDatum(Vec<u8>);

impl FormattedDatum {
    pub fn new(bytes: Vec<u8>) -> Result<Self, ShareError> {
        if bytes.is_empty() {
            return Err(ShareError::EmptyDatum);
        }
        if bytes.len() > MAX_DATUM_BYTES {
            return Err(ShareError::DatumTooLarge(bytes.len()));
        }
        Ok(Self(bytes))
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.0
    }
}

/// One point of a sharing, tagged with the provider it belongs to and the
/// node it is destined for.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SecretShare {
    pub provider_index: u32,
    pub node_index: u32,
    pub x: u8,
    pub y: Vec<u8>,
}

/// Splits `datum` into `n` shares, any `t` of which reconstruct it.
pub fn create_shares<R: RngCore + ?Sized>(
    t: usize,
    n: usize,
    datum: &FormattedDatum,
    provider_index: u32,
    rng: &mut R,
) -> Result<Vec<SecretShare>, ShareError> {
    check_params(t, n)?;
    if datum.is_empty() {
        return Err(ShareError::EmptyDatum);
    }
    let mut shares: Vec<SecretShare> = (1..=n)
        .map(|j| SecretShare {
            provider_index,
            node_index: j as u32,
            x: j as u8,
            y: Vec::with_capacity(datum.len()),
        })
        .collect();
    let mut coeffs = vec![0u8; t];
    for &secret in datum.as_bytes() {
        coeffs[0] = secret;
        rng.fill_bytes(&mut coeffs[1..]);
        for share in shares.iter_mut() {
            share.y.push(gf256::eval_poly(&coeffs, share.x));
        }
    }
    Ok(shares)
}

/// Recovers the datum from at least `t` shares.
///
/// With more than `t` shares every share must lie on the interpolated
/// polynomial. On failure the error lists the x-coordinates that disagree with
/// the best-agreeing polynomial found.
pub fn reconstruct(t: usize, n: usize, shares: &[SecretShare]) -> Result<FormattedDatum, ShareError> {
    check_params(t, n)?;
    if shares.len() < t {
        return Err(ShareError::InsufficientShares { needed: t, got: shares.len() });
    }
    let len = shares[0].y.len();
    let mut seen = [false; 256];
    for s in shares {
        if s.x == 0 || s.x as usize > n {
            return Err(ShareError::InvalidX(s.x));
        }
        if std::mem::replace(&mut seen[s.x as usize], true) {
            return Err(ShareError::DuplicateX(s.x));
        }
        if s.y.len() != len {
            return Err(ShareError::LengthMismatch);
        }
    }
    let mut sorted: Vec<&SecretShare> = shares.iter().collect();
    sorted.sort_by_key(|s| s.x);

    if sorted.len() == t {
        return FormattedDatum::new(interpolate_at(&sorted, 0));
    }

    let base: Vec<&SecretShare> = sorted[..t].to_vec();
    let mut best: Option<(usize, Vec<&SecretShare>)> = None;
    if binomial_at_most(sorted.len(), t, MAX_DECODE_SUBSETS) {
        for subset in Combinations::new(sorted.len(), t) {
            let candidate: Vec<&SecretShare> = subset.iter().map(|&i| sorted[i]).collect();
            let agree = sorted.iter().filter(|s| lies_on(&candidate, s)).count();
            if agree == sorted.len() {
                return FormattedDatum::new(interpolate_at(&candidate, 0));
            }
            if best.as_ref().is_none_or(|(b, _)| agree > *b) {
                best = Some((agree, candidate));
            }
        }
    } else {
        let agree = sorted.iter().filter(|s| lies_on(&base, s)).count();
        if agree == sorted.len() {
            return FormattedDatum::new(interpolate_at(&base, 0));
        }
        best = Some((agree, base));
    }
    let (_, poly) = best.expect("at least one subset examined");
    let failing = sorted
        .iter()
        .filter(|s| !lies_on(&poly, s))
        .map(|s| s.x)
        .collect();
    Err(ShareError::InconsistentShares(failing))
}

/// Lagrange interpolation of every byte position at `x`.
pub(crate) fn interpolate_at(points: &[&SecretShare], x: u8) -> Vec<u8> {
    let len = points.first().map_or(0, |p| p.y.len());
    let weights: Vec<u8> = points
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            let mut num = 1u8;
            let mut den = 1u8;
            for (k, pk) in points.iter().enumerate() {
                if k != i {
                    num = gf256::mul(num, gf256::add(x, pk.x));
                    den = gf256::mul(den, gf256::add(pi.x, pk.x));
                }
            }
            gf256::div(num, den)
        })
        .collect();
    (0..len)
        .map(|b| {
            points
                .iter()
                .zip(&weights)
                .fold(0u8, |acc, (p, &w)| gf256::add(acc, gf256::mul(w, p.y[b])))
        })
        .collect()
}

fn lies_on(poly: &[&SecretShare], share: &SecretShare) -> bool {
    poly.iter().any(|p| p.x == share.x && p.y == share.y) || interpolate_at(poly, share.x) == share.y
}

fn check_params(t: usize, n: usize) -> Result<(), ShareError> {
    if t < 1 || t > n || n > 255 {
        return Err(ShareError::ThresholdOutOfRange { t, n });
    }
    Ok(())
}

fn binomial_at_most(n: usize, k: usize, cap: usize) -> bool {
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > cap as u128 {
            return false;
        }
    }
    true
}

/// Lexicographic k-subsets of `0..n`.
pub(crate) struct Combinations {
    n: usize,
    current: Option<Vec<usize>>,
}

impl Combinations {
    pub(crate) fn new(n: usize, k: usize) -> Self {
        let current = (k <= n).then(|| (0..k).collect());
        Self { n, current }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let out = self.current.clone()?;
        let k = out.len();
        let mut next = out.clone();
        let mut i = k;
        loop {
            if i == 0 {
                self.current = None;
                break;
            }
            i -= 1;
            if next[i] < self.n - k + i {
                next[i] += 1;
                for j in i + 1..k {
                    next[j] = next[j - 1] + 1;
                }
                self.current = Some(next);
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn datum(bytes: &[u8]) -> FormattedDatum {
        FormattedDatum::new(bytes.to_vec()).unwrap()
    }

    #[test]
    fn threshold_one_every_share_is_the_secret() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let shares = create_shares(1, 3, &datum(&[0x2a]), 1, &mut rng).unwrap();
        assert_eq!(shares.len(), 3);
        for s in &shares {
            assert_eq!(reconstruct(1, 3, std::slice::from_ref(s)).unwrap(), datum(&[0x2a]));
        }
    }

    #[test]
    fn x_coordinate_equals_node_index() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let shares = create_shares(2, 5, &datum(b"ab"), 7, &mut rng).unwrap();
        for (j, s) in shares.iter().enumerate() {
            assert_eq!(s.x as usize, j + 1);
            assert_eq!(s.node_index as usize, j + 1);
            assert_eq!(s.provider_index, 7);
            assert_eq!(s.y.len(), 2);
        }
    }

    #[test]
    fn parameter_errors() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        assert_eq!(
            create_shares(0, 3, &datum(&[1]), 1, &mut rng),
            Err(ShareError::ThresholdOutOfRange { t: 0, n: 3 })
        );
        assert_eq!(
            create_shares(4, 3, &datum(&[1]), 1, &mut rng),
            Err(ShareError::ThresholdOutOfRange { t: 4, n: 3 })
        );
        assert_eq!(FormattedDatum::new(vec![]), Err(ShareError::EmptyDatum));
    }

    #[test]
    fn below_threshold_is_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let shares = create_shares(2, 3, &datum(&[0x2a]), 1, &mut rng).unwrap();
        assert_eq!(
            reconstruct(2, 3, &shares[..1]),
            Err(ShareError::InsufficientShares { needed: 2, got: 1 })
        );
    }

    #[test]
    fn flipped_last_share_is_named() {
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let mut shares = create_shares(2, 3, &datum(&[0x2a]), 1, &mut rng).unwrap();
        shares[2].y[0] ^= 0x01;
        assert_eq!(reconstruct(2, 3, &shares), Err(ShareError::InconsistentShares(vec![3])));
    }

    #[test]
    fn duplicate_and_invalid_x() {
        let mut rng = ChaCha20Rng::seed_from_u64(6);
        let shares = create_shares(2, 3, &datum(&[9]), 1, &mut rng).unwrap();
        let dup = vec![shares[0].clone(), shares[0].clone()];
        assert_eq!(reconstruct(2, 3, &dup), Err(ShareError::DuplicateX(1)));
        let mut zero = shares.clone();
        zero[0].x = 0;
        assert_eq!(reconstruct(2, 3, &zero), Err(ShareError::InvalidX(0)));
    }

    #[test]
    fn combinations_are_lexicographic() {
        let all: Vec<Vec<usize>> = Combinations::new(4, 2).collect();
        assert_eq!(all, vec![vec![0, 1], vec![0, 2], vec![0, 3], vec![1, 2], vec![1, 3], vec![2, 3]]);
        assert_eq!(Combinations::new(3, 3).count(), 1);
        assert_eq!(Combinations::new(2, 3).count(), 0);
    }
}
