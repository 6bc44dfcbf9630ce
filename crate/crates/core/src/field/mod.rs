//! Prime fields used for secret sharing.
//!
//! Two fields are supported: [`Fp129`] over the smallest prime above
//! `2^128` and [`Fp255`] over `2^255 - 19`. Both exceed `2^128`, so a
//! 16-byte key seed embeds into either one without reduction.
//!
//! Elements are kept in Montgomery form internally. Equality, ordering
//! and encodings all work on the canonical integer value.

mod limbs;
mod primality;

use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use alloc::vec::Vec;
use rand_core::RngCore;

use crate::error::Error;

pub use primality::is_probable_prime;

/// Length of the byte strings that are embedded into a field for sharing.
pub const SEED_LEN: usize = 16;

/// Identifies one of the two supported sharing fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum FieldId {
    F129,
    F255,
}

impl FieldId {
    pub const ALL: [FieldId; 2] = [FieldId::F129, FieldId::F255];

    /// Canonical element encoding length in bytes.
    pub const fn byte_len(self) -> usize {
        match self {
            FieldId::F129 => Fp129::BYTES,
            FieldId::F255 => Fp255::BYTES,
        }
    }

    pub fn modulus_bits(self) -> u32 {
        match self {
            FieldId::F129 => limbs::bit_len(&Fp129::MODULUS),
            FieldId::F255 => limbs::bit_len(&Fp255::MODULUS),
        }
    }

    /// Little-endian bytes of the modulus.
    pub fn modulus_le_bytes(self) -> Vec<u8> {
        fn bytes(l: &[u64]) -> Vec<u8> {
            l.iter().flat_map(|w| w.to_le_bytes()).collect()
        }
        match self {
            FieldId::F129 => bytes(&Fp129::MODULUS),
            FieldId::F255 => bytes(&Fp255::MODULUS),
        }
    }

    /// Byte used to tag the field in share encodings.
    pub const fn wire_id(self) -> u8 {
        match self {
            FieldId::F129 => 1,
            FieldId::F255 => 2,
        }
    }

    pub const fn from_wire_id(b: u8) -> Option<FieldId> {
        match b {
            1 => Some(FieldId::F129),
            2 => Some(FieldId::F255),
            _ => None,
        }
    }

    pub const fn name(self) -> &'static str {
        match self {
            FieldId::F129 => "F129",
            FieldId::F255 => "F255",
        }
    }

    /// Runs Miller-Rabin on the modulus. Services call this once at startup.
    pub fn check_modulus(self) -> bool {
        match self {
            FieldId::F129 => is_probable_prime::<Fp129>(),
            FieldId::F255 => is_probable_prime::<Fp255>(),
        }
    }
}

impl fmt::Display for FieldId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for FieldId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F129" | "f129" => Ok(FieldId::F129),
            "F255" | "f255" => Ok(FieldId::F255),
            _ => Err(Error::Unsupported),
        }
    }
}

/// Arithmetic interface shared by [`Fp129`] and [`Fp255`].
pub trait PrimeField:
    Copy
    + Clone
    + Eq
    + Ord
    + Default
    + fmt::Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ID: FieldId;
    /// Canonical encoding length, `ceil(bits(p) / 8)`.
    const BYTES: usize;
    const ZERO: Self;
    const ONE: Self;

    /// Modulus as little-endian 64-bit limbs.
    fn modulus_limbs() -> &'static [u64];

    fn from_u64(v: u64) -> Self;
    fn is_zero(&self) -> bool;
    fn square(&self) -> Self;

    /// `self^exp` with `exp` given as little-endian limbs. Variable time in `exp`.
    fn pow_vartime(&self, exp: &[u64]) -> Self;

    /// Multiplicative inverse; `None` for zero.
    fn invert(&self) -> Option<Self>;

    /// Writes the canonical little-endian encoding into `out[..Self::BYTES]`.
    fn write_le(&self, out: &mut [u8]);

    /// Decodes a canonical little-endian encoding of exactly `Self::BYTES`
    /// bytes, rejecting values `>= p`.
    fn from_le(bytes: &[u8]) -> Option<Self>;

    /// Reduces 64 uniform bytes (little-endian) modulo `p`.
    ///
    /// Both moduli are at most 255 bits, leaving more than 256 surplus bits,
    /// so the bias is far below `2^-64`.
    fn from_uniform_bytes(bytes: &[u8; 64]) -> Self;

    fn to_le_vec(&self) -> Vec<u8> {
        let mut out = alloc::vec![0u8; Self::BYTES];
        self.write_le(&mut out);
        out
    }

    fn random<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        let mut buf = [0u8; 64];
        rng.fill_bytes(&mut buf);
        Self::from_uniform_bytes(&buf)
    }

    /// Uniform sample from `F_p \ {0}`.
    fn random_nonzero<R: RngCore + ?Sized>(rng: &mut R) -> Self {
        loop {
            let v = Self::random(rng);
            if !v.is_zero() {
                return v;
            }
        }
    }
}

/// Embeds a 16-byte seed into the field as its little-endian integer value.
pub fn field_from_bytes<F: PrimeField>(seed: &[u8]) -> Result<F, Error> {
    if seed.len() != SEED_LEN {
        return Err(Error::InputLength);
    }
    let mut buf = alloc::vec![0u8; F::BYTES];
    buf[..SEED_LEN].copy_from_slice(seed);
    // p > 2^128 for both fields
    Ok(F::from_le(&buf).expect("16-byte value is below the modulus"))
}

/// Inverse of [`field_from_bytes`]; `None` when the value does not fit in 16 bytes.
pub fn field_to_seed<F: PrimeField>(v: &F) -> Option<[u8; SEED_LEN]> {
    let bytes = v.to_le_vec();
    if bytes[SEED_LEN..].iter().any(|&b| b != 0) {
        return None;
    }
    let mut out = [0u8; SEED_LEN];
    out.copy_from_slice(&bytes[..SEED_LEN]);
    Some(out)
}

/// Inverts every element of `values` in place with a single field inversion.
///
/// Returns `false` (leaving `values` untouched) if any element is zero.
pub fn batch_invert<F: PrimeField>(values: &mut [F]) -> bool {
    if values.is_empty() {
        return true;
    }
    let mut prefix = Vec::with_capacity(values.len());
    let mut acc = F::ONE;
    for v in values.iter() {
        if v.is_zero() {
            return false;
        }
        prefix.push(acc);
        acc *= *v;
    }
    let mut inv = acc.invert().expect("product of nonzero elements");
    for (v, before) in values.iter_mut().zip(prefix).rev() {
        let next = inv * *v;
        *v = inv * before;
        inv = next;
    }
    true
}

macro_rules! prime_field {
    ($(#[$meta:meta])* $name:ident, $id:expr, $limbs:literal, $bytes:literal, $modulus:expr) => {
        $(#[$meta])*
        #[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
        pub struct $name([u64; $limbs]);

        impl $name {
            pub const MODULUS: [u64; $limbs] = $modulus;
            const INV: u64 = limbs::mont_inv(Self::MODULUS[0]);
            const R: [u64; $limbs] = limbs::pow2_mod(&Self::MODULUS, 64 * $limbs);
            const R2: [u64; $limbs] = limbs::pow2_mod(&Self::MODULUS, 128 * $limbs);
            const TWO_64: Self = Self(limbs::pow2_mod(&Self::MODULUS, 64 * $limbs + 64));

            #[inline]
            fn mont(a: &[u64; $limbs], b: &[u64; $limbs]) -> [u64; $limbs] {
                limbs::mont_mul(a, b, &Self::MODULUS, Self::INV)
            }

            /// Canonical (non-Montgomery) limbs.
            #[inline]
            pub fn to_canonical(&self) -> [u64; $limbs] {
                let mut one = [0u64; $limbs];
                one[0] = 1;
                Self::mont(&self.0, &one)
            }

            /// Builds an element from canonical limbs, rejecting values `>= p`.
            pub fn from_canonical(v: [u64; $limbs]) -> Option<Self> {
                if limbs::geq(&v, &Self::MODULUS) {
                    None
                } else {
                    Some(Self(Self::mont(&v, &Self::R2)))
                }
            }
        }

        impl fmt::Debug for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let c = self.to_canonical();
                write!(f, concat!(stringify!($name), "(0x"))?;
                for w in c.iter().rev() {
                    write!(f, "{:016x}", w)?;
                }
                write!(f, ")")
            }
        }

        impl PartialOrd for $name {
            fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
                Some(self.cmp(other))
            }
        }

        impl Ord for $name {
            fn cmp(&self, other: &Self) -> Ordering {
                let (a, b) = (self.to_canonical(), other.to_canonical());
                a.iter().rev().cmp(b.iter().rev())
            }
        }

        impl Add for $name {
            type Output = Self;
            #[inline]
            fn add(self, rhs: Self) -> Self {
                Self(limbs::add_mod(&self.0, &rhs.0, &Self::MODULUS))
            }
        }

        impl Sub for $name {
            type Output = Self;
            #[inline]
            fn sub(self, rhs: Self) -> Self {
                Self(limbs::sub_mod(&self.0, &rhs.0, &Self::MODULUS))
            }
        }

        impl Mul for $name {
            type Output = Self;
            #[inline]
            fn mul(self, rhs: Self) -> Self {
                Self(Self::mont(&self.0, &rhs.0))
            }
        }

        impl Neg for $name {
            type Output = Self;
            #[inline]
            fn neg(self) -> Self {
                Self::ZERO - self
            }
        }

        impl AddAssign for $name {
            #[inline]
            fn add_assign(&mut self, rhs: Self) {
                *self = *self + rhs;
            }
        }

        impl SubAssign for $name {
            #[inline]
            fn sub_assign(&mut self, rhs: Self) {
                *self = *self - rhs;
            }
        }

        impl MulAssign for $name {
            #[inline]
            fn mul_assign(&mut self, rhs: Self) {
                *self = *self * rhs;
            }
        }

        impl PrimeField for $name {
            const ID: FieldId = $id;
            const BYTES: usize = $bytes;
            const ZERO: Self = Self([0u64; $limbs]);
            const ONE: Self = Self(Self::R);

            fn modulus_limbs() -> &'static [u64] {
                &Self::MODULUS
            }

            fn from_u64(v: u64) -> Self {
                let mut l = [0u64; $limbs];
                l[0] = v;
                Self::from_canonical(l).expect("u64 is below the modulus")
            }

            #[inline]
            fn is_zero(&self) -> bool {
                self.0.iter().all(|&w| w == 0)
            }

            #[inline]
            fn square(&self) -> Self {
                *self * *self
            }

            fn pow_vartime(&self, exp: &[u64]) -> Self {
                let mut acc = Self::ONE;
                for w in exp.iter().rev() {
                    for bit in (0..64).rev() {
                        acc = acc.square();
                        if (w >> bit) & 1 == 1 {
                            acc *= *self;
                        }
                    }
                }
                acc
            }

            fn invert(&self) -> Option<Self> {
                if self.is_zero() {
                    return None;
                }
                let mut two = [0u64; $limbs];
                two[0] = 2;
                let (exp, _) = limbs::sub_n(&Self::MODULUS, &two);
                Some(self.pow_vartime(&exp))
            }

            fn write_le(&self, out: &mut [u8]) {
                let c = self.to_canonical();
                let mut full = [0u8; 8 * $limbs];
                for (i, w) in c.iter().enumerate() {
                    full[8 * i..8 * i + 8].copy_from_slice(&w.to_le_bytes());
                }
                out[..$bytes].copy_from_slice(&full[..$bytes]);
            }

            fn from_le(bytes: &[u8]) -> Option<Self> {
                if bytes.len() != $bytes {
                    return None;
                }
                let mut full = [0u8; 8 * $limbs];
                full[..$bytes].copy_from_slice(bytes);
                let mut l = [0u64; $limbs];
                for (i, w) in l.iter_mut().enumerate() {
                    *w = u64::from_le_bytes(full[8 * i..8 * i + 8].try_into().unwrap());
                }
                Self::from_canonical(l)
            }

            fn from_uniform_bytes(bytes: &[u8; 64]) -> Self {
                let mut acc = Self::ZERO;
                for chunk in bytes.chunks_exact(8).rev() {
                    let w = u64::from_le_bytes(chunk.try_into().unwrap());
                    acc = acc * Self::TWO_64 + Self::from_u64_reduced(w);
                }
                acc
            }
        }

        impl $name {
            #[inline]
            fn from_u64_reduced(v: u64) -> Self {
                let mut l = [0u64; $limbs];
                l[0] = v;
                Self(Self::mont(&l, &Self::R2))
            }
        }
    };
}

prime_field!(
    /// Field modulo `2^128 + 51`, the smallest prime not below `2^128`.
    Fp129,
    FieldId::F129,
    3,
    17,
    [51, 0, 1]
);

prime_field!(
    /// Field modulo `2^255 - 19`.
    Fp255,
    FieldId::F255,
    4,
    32,
    [
        0xffff_ffff_ffff_ffed,
        0xffff_ffff_ffff_ffff,
        0xffff_ffff_ffff_ffff,
        0x7fff_ffff_ffff_ffff
    ]
);
