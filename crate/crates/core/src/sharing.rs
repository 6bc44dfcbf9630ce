//! Threshold secret sharing with explicit coefficient randomness.
//!
//! Every client holding the same `(secret, coeff_seed)` pair derives the
//! same polynomial `P` with `P(0) = secret`, and publishes one evaluation
//! `(x, P(x))` at an x-coordinate it samples itself. Any `threshold`
//! shares with distinct x-coordinates recover the secret by Lagrange
//! interpolation at zero.

use alloc::vec::Vec;

use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};

use crate::field::{batch_invert, FieldId, Fp129, Fp255, PrimeField};
use crate::Error;

const COEFF_LABEL: &[u8] = b"STAR-COEF";

/// One evaluation point of a sharing polynomial. `x` is never zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Share<F: PrimeField> {
    pub x: F,
    pub y: F,
}

/// `j`-th polynomial coefficient for a coefficient seed.
///
/// Two SHA-256 blocks give 512 uniform bits, which are reduced mod `p`.
pub fn coefficient<F: PrimeField>(coeff_seed: &[u8; 32], j: u32) -> F {
    let mut wide = [0u8; 64];
    for (half, block) in wide.chunks_exact_mut(32).enumerate() {
        let digest = Sha256::new()
            .chain_update(COEFF_LABEL)
            .chain_update(coeff_seed)
            .chain_update(j.to_be_bytes())
            .chain_update([half as u8])
            .finalize();
        block.copy_from_slice(&digest);
    }
    F::from_uniform_bytes(&wide)
}

/// The degree-`(threshold - 1)` polynomial fixed by a secret and a coefficient seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharePolynomial<F: PrimeField> {
    // coeffs[0] is the secret
    coeffs: Vec<F>,
}

impl<F: PrimeField> SharePolynomial<F> {
    pub fn derive(secret: F, coeff_seed: &[u8; 32], threshold: usize) -> Result<Self, Error> {
        if threshold == 0 {
            return Err(Error::InvalidThreshold);
        }
        let threshold_u32 = u32::try_from(threshold).map_err(|_| Error::InvalidThreshold)?;
        let mut coeffs = Vec::with_capacity(threshold);
        coeffs.push(secret);
        coeffs.extend((1..threshold_u32).map(|j| coefficient::<F>(coeff_seed, j)));
        Ok(SharePolynomial { coeffs })
    }

    pub fn threshold(&self) -> usize {
        self.coeffs.len()
    }

    pub fn secret(&self) -> F {
        self.coeffs[0]
    }

    pub fn eval(&self, x: F) -> F {
        self.coeffs.iter().rev().fold(F::ZERO, |acc, &c| acc * x + c)
    }

    /// Samples a fresh nonzero x-coordinate and evaluates at it.
    pub fn share<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> Share<F> {
        let x = F::random_nonzero(rng);
        Share { x, y: self.eval(x) }
    }
}

/// Produces one share of `secret` under the polynomial fixed by `coeff_seed`.
pub fn share<F: PrimeField, R: RngCore + CryptoRng + ?Sized>(
    secret: F,
    coeff_seed: &[u8; 32],
    threshold: usize,
    rng: &mut R,
) -> Result<Share<F>, Error> {
    Ok(SharePolynomial::derive(secret, coeff_seed, threshold)?.share(rng))
}

/// Interpolates `P(0)` through `points`, which must have distinct nonzero x.
///
/// `O(n^2)` multiplications and a single field inversion.
pub fn lagrange_at_zero<F: PrimeField>(points: &[Share<F>]) -> Option<F> {
    // P(0) = sum_i y_i * prod_{j != i} x_j / (x_j - x_i)
    //      = (prod_j x_j) * sum_i y_i / (x_i * prod_{j != i} (x_j - x_i))
    let mut numerator = F::ONE;
    for p in points {
        numerator *= p.x;
    }
    let mut denominators: Vec<F> = points
        .iter()
        .enumerate()
        .map(|(i, pi)| {
            let mut d = pi.x;
            for (j, pj) in points.iter().enumerate() {
                if i != j {
                    d *= pj.x - pi.x;
                }
            }
            d
        })
        .collect();
    if !batch_invert(&mut denominators) {
        return None;
    }
    let sum = points
        .iter()
        .zip(&denominators)
        .fold(F::ZERO, |acc, (p, d)| acc + p.y * *d);
    Some(numerator * sum)
}

/// Sorts by x-coordinate and drops repeated x-coordinates (first one wins).
pub fn distinct_by_x<F: PrimeField>(shares: &[Share<F>]) -> Vec<Share<F>> {
    let mut keyed: Vec<(Vec<u8>, Share<F>)> = Vec::with_capacity(shares.len());
    for s in shares {
        let mut key = s.x.to_le_vec();
        key.reverse();
        keyed.push((key, *s));
    }
    keyed.sort_by(|a, b| a.0.cmp(&b.0));
    keyed.dedup_by(|a, b| a.0 == b.0);
    keyed.into_iter().map(|(_, s)| s).collect()
}

/// Recovers the secret from the `threshold` smallest distinct x-coordinates.
pub fn recover<F: PrimeField>(shares: &[Share<F>], threshold: usize) -> Result<F, Error> {
    if threshold == 0 {
        return Err(Error::InvalidThreshold);
    }
    let distinct = distinct_by_x(shares);
    if distinct.len() < threshold {
        return Err(Error::InsufficientShares);
    }
    lagrange_at_zero(&distinct[..threshold]).ok_or(Error::InsufficientShares)
}

/// A share in either supported field, as carried on the wire.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum AnyShare {
    F129(Share<Fp129>),
    F255(Share<Fp255>),
}

impl AnyShare {
    pub fn field(&self) -> FieldId {
        match self {
            AnyShare::F129(_) => FieldId::F129,
            AnyShare::F255(_) => FieldId::F255,
        }
    }

    /// `1 + 2 * byte_len(field)`.
    pub fn encoded_len(field: FieldId) -> usize {
        1 + 2 * field.byte_len()
    }

    /// Appends `field id ‖ x ‖ y`.
    pub fn encode_into(&self, out: &mut Vec<u8>) {
        fn put<F: PrimeField>(s: &Share<F>, out: &mut Vec<u8>) {
            out.push(F::ID.wire_id());
            out.extend_from_slice(&s.x.to_le_vec());
            out.extend_from_slice(&s.y.to_le_vec());
        }
        match self {
            AnyShare::F129(s) => put(s, out),
            AnyShare::F255(s) => put(s, out),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(Self::encoded_len(self.field()));
        self.encode_into(&mut out);
        out
    }

    /// Decodes a share from the front of `bytes`, returning it and the bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(AnyShare, usize), Error> {
        fn get<F: PrimeField>(body: &[u8]) -> Result<Share<F>, Error> {
            let n = F::BYTES;
            let x = F::from_le(&body[..n]).ok_or(Error::MalformedMessage)?;
            let y = F::from_le(&body[n..2 * n]).ok_or(Error::MalformedMessage)?;
            if x.is_zero() {
                return Err(Error::MalformedMessage);
            }
            Ok(Share { x, y })
        }
        let (&id, rest) = bytes.split_first().ok_or(Error::MalformedMessage)?;
        let field = FieldId::from_wire_id(id).ok_or(Error::MalformedMessage)?;
        let len = Self::encoded_len(field);
        if bytes.len() < len {
            return Err(Error::MalformedMessage);
        }
        let share = match field {
            FieldId::F129 => AnyShare::F129(get(rest)?),
            FieldId::F255 => AnyShare::F255(get(rest)?),
        };
        Ok((share, len))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<AnyShare, Error> {
        let (share, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::MalformedMessage);
        }
        Ok(share)
    }
}

/// Fields that can be projected out of an [`AnyShare`].
pub trait ShareField: PrimeField {
    fn project(share: &AnyShare) -> Option<Share<Self>>;
}

impl ShareField for Fp129 {
    fn project(share: &AnyShare) -> Option<Share<Self>> {
        match share {
            AnyShare::F129(s) => Some(*s),
            AnyShare::F255(_) => None,
        }
    }
}

impl ShareField for Fp255 {
    fn project(share: &AnyShare) -> Option<Share<Self>> {
        match share {
            AnyShare::F255(s) => Some(*s),
            AnyShare::F129(_) => None,
        }
    }
}

impl From<Share<Fp129>> for AnyShare {
    fn from(s: Share<Fp129>) -> Self {
        AnyShare::F129(s)
    }
}

impl From<Share<Fp255>> for AnyShare {
    fn from(s: Share<Fp255>) -> Self {
        AnyShare::F255(s)
    }
}

/// Field-dispatching [`recover`]; the secret is returned in its canonical encoding.
pub fn recover_any(shares: &[AnyShare], threshold: usize) -> Result<Vec<u8>, Error> {
    fn typed<F: ShareField>(shares: &[AnyShare], threshold: usize) -> Result<Vec<u8>, Error> {
        let typed = shares
            .iter()
            .map(|s| F::project(s).ok_or(Error::FieldMismatch))
            .collect::<Result<Vec<_>, _>>()?;
        recover(&typed, threshold).map(|v| v.to_le_vec())
    }
    let Some(first) = shares.first() else {
        return if threshold == 0 {
            Err(Error::InvalidThreshold)
        } else {
            Err(Error::InsufficientShares)
        };
    };
    match first.field() {
        FieldId::F129 => typed::<Fp129>(shares, threshold),
        FieldId::F255 => typed::<Fp255>(shares, threshold),
    }
}
