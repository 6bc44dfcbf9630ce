//! Verifiable oblivious PRF over ristretto255.
//!
//! The client blinds `H(x)` with a random scalar, the server raises the
//! blinded element to its secret key and proves with a Chaum-Pedersen DLEQ
//! proof that it used the key behind its published public key. The client
//! unblinds and hashes to a 96-byte output that only depends on `x` and
//! the server key.
//!
//! Wire sizes: request 32 bytes, response 96 bytes (`Z ‖ c ‖ s`), public
//! key bundle 40 bytes (`epoch ‖ mpk`).

use alloc::vec::Vec;

use curve25519_dalek::constants::RISTRETTO_BASEPOINT_POINT;
use curve25519_dalek::ristretto::{CompressedRistretto, RistrettoPoint};
use curve25519_dalek::scalar::Scalar;
use curve25519_dalek::traits::Identity;
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256, Sha512};
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::Error;

pub const ELEMENT_LEN: usize = 32;
pub const SCALAR_LEN: usize = 32;
pub const REQUEST_LEN: usize = ELEMENT_LEN;
pub const RESPONSE_LEN: usize = ELEMENT_LEN + 2 * SCALAR_LEN;
pub const BUNDLE_LEN: usize = 8 + ELEMENT_LEN;
/// `3 * omega` bits of output.
pub const OUTPUT_LEN: usize = 96;
/// Longest accepted PRF input.
pub const MAX_INPUT_LEN: usize = 1 << 16;

const H2G_LABEL: &[u8] = b"STAR-H2G";
const H2S_LABEL: &[u8] = b"STAR-H2S";

/// Cipher suite identifiers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    /// ristretto255 with SHA-512 hash-to-group and SHA-256 output expansion.
    Ristretto255Sha512,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PublicParams {
    pub suite: Suite,
    pub omega_bits: u32,
}

impl PublicParams {
    pub fn output_len(&self) -> usize {
        3 * self.omega_bits as usize / 8
    }
}

/// Fixed parameters for the only supported security level (128 bits).
pub fn setup(security_level: u32) -> Result<PublicParams, Error> {
    if security_level != 128 {
        return Err(Error::Unsupported);
    }
    Ok(PublicParams {
        suite: Suite::Ristretto255Sha512,
        omega_bits: 256,
    })
}

/// Maps arbitrary bytes to a group element.
pub fn hash_to_group(input: &[u8]) -> RistrettoPoint {
    let digest = Sha512::new()
        .chain_update(H2G_LABEL)
        .chain_update(input)
        .finalize();
    let mut wide = [0u8; 64];
    wide.copy_from_slice(&digest);
    RistrettoPoint::from_uniform_bytes(&wide)
}

fn hash_to_scalar(elements: &[&CompressedRistretto]) -> Scalar {
    let mut h = Sha512::new().chain_update(H2S_LABEL);
    for e in elements {
        h.update(e.as_bytes());
    }
    let mut wide = [0u8; 64];
    wide.copy_from_slice(&h.finalize());
    Scalar::from_bytes_mod_order_wide(&wide)
}

/// `Hash(x ‖ N ‖ 0) ‖ Hash(x ‖ N ‖ 1) ‖ Hash(x ‖ N ‖ 2)`.
pub fn expand_output(input: &[u8], element: &[u8; 32]) -> [u8; OUTPUT_LEN] {
    let mut out = [0u8; OUTPUT_LEN];
    for (i, block) in out.chunks_exact_mut(32).enumerate() {
        let d = Sha256::new()
            .chain_update(input)
            .chain_update(element)
            .chain_update([i as u8])
            .finalize();
        block.copy_from_slice(&d);
    }
    out
}

fn random_nonzero_scalar<R: RngCore + CryptoRng + ?Sized>(rng: &mut R) -> Result<Scalar, Error> {
    for _ in 0..64 {
        let mut wide = [0u8; 64];
        rng.try_fill_bytes(&mut wide).map_err(|_| Error::RngFailure)?;
        let s = Scalar::from_bytes_mod_order_wide(&wide);
        wide.zeroize();
        if s != Scalar::ZERO {
            return Ok(s);
        }
    }
    Err(Error::RngFailure)
}

fn decode_element(bytes: &[u8]) -> Option<(CompressedRistretto, RistrettoPoint)> {
    let c = CompressedRistretto::from_slice(bytes).ok()?;
    let p = c.decompress()?;
    Some((c, p))
}

fn decode_scalar(bytes: &[u8]) -> Option<Scalar> {
    let arr: [u8; 32] = bytes.try_into().ok()?;
    Option::from(Scalar::from_canonical_bytes(arr))
}

/// Server VOPRF key for one epoch. The secret scalar is wiped on drop.
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct KeyPair {
    secret: Scalar,
    #[zeroize(skip)]
    public: CompressedRistretto,
    #[zeroize(skip)]
    epoch: u64,
}

impl core::fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("KeyPair")
            .field("public", &self.public)
            .field("epoch", &self.epoch)
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    /// Builds a key pair from an existing secret scalar. Zero is rejected.
    pub fn from_secret(secret: Scalar, epoch: u64) -> Result<Self, Error> {
        if secret == Scalar::ZERO {
            return Err(Error::Unsupported);
        }
        let public = (RISTRETTO_BASEPOINT_POINT * secret).compress();
        Ok(KeyPair { secret, public, epoch })
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey {
            element: self.public,
            epoch: self.epoch,
        }
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn secret(&self) -> &Scalar {
        &self.secret
    }
}

/// `(msk, mpk)` with a uniform nonzero `msk`.
pub fn keygen<R: RngCore + CryptoRng + ?Sized>(
    _pp: &PublicParams,
    epoch: u64,
    rng: &mut R,
) -> Result<KeyPair, Error> {
    KeyPair::from_secret(random_nonzero_scalar(rng)?, epoch)
}

/// Published server key for one epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PublicKey {
    pub element: CompressedRistretto,
    pub epoch: u64,
}

impl PublicKey {
    /// `epoch (8 bytes, big-endian) ‖ mpk (32 bytes)`.
    pub fn to_bundle(&self) -> [u8; BUNDLE_LEN] {
        let mut out = [0u8; BUNDLE_LEN];
        out[..8].copy_from_slice(&self.epoch.to_be_bytes());
        out[8..].copy_from_slice(self.element.as_bytes());
        out
    }

    pub fn from_bundle(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() != BUNDLE_LEN {
            return Err(Error::InputLength);
        }
        let epoch = u64::from_be_bytes(bytes[..8].try_into().unwrap());
        let (element, _) = decode_element(&bytes[8..]).ok_or(Error::MalformedResponse)?;
        Ok(PublicKey { element, epoch })
    }
}

/// Blinded element sent to the server.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlindRequest(pub [u8; REQUEST_LEN]);

impl BlindRequest {
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Error> {
        let arr: [u8; REQUEST_LEN] = bytes.try_into().map_err(|_| Error::MalformedRequest)?;
        decode_element(&arr).ok_or(Error::MalformedRequest)?;
        Ok(BlindRequest(arr))
    }

    pub fn as_bytes(&self) -> &[u8; REQUEST_LEN] {
        &self.0
    }
}

/// Client-side state kept between [`blind`] and [`finalize`].
#[derive(Clone, Zeroize, ZeroizeOnDrop)]
pub struct ClientState {
    input: Vec<u8>,
    blind: Scalar,
    request: [u8; REQUEST_LEN],
}

impl ClientState {
    pub fn input(&self) -> &[u8] {
        &self.input
    }
}

/// `M = H(x)^r` for a fresh nonzero `r`.
pub fn blind<R: RngCore + CryptoRng + ?Sized>(
    input: &[u8],
    rng: &mut R,
) -> Result<(BlindRequest, ClientState), Error> {
    if input.is_empty() || input.len() > MAX_INPUT_LEN {
        return Err(Error::InputLength);
    }
    let r = random_nonzero_scalar(rng)?;
    let m = (hash_to_group(input) * r).compress();
    let request = BlindRequest(m.to_bytes());
    Ok((
        request,
        ClientState {
            input: input.to_vec(),
            blind: r,
            request: m.to_bytes(),
        },
    ))
}

/// Chaum-Pedersen proof that `log_g(mpk) = log_M(Z)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DleqProof {
    pub c: Scalar,
    pub s: Scalar,
}

/// Server response: `Z = M^msk` with its proof.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub element: CompressedRistretto,
    pub proof: DleqProof,
}

impl Evaluation {
    pub fn to_bytes(&self) -> [u8; RESPONSE_LEN] {
        let mut out = [0u8; RESPONSE_LEN];
        out[..32].copy_from_slice(self.element.as_bytes());
        out[32..64].copy_from_slice(self.proof.c.as_bytes());
        out[64..].copy_from_slice(self.proof.s.as_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Error> {
        if bytes.len() != RESPONSE_LEN {
            return Err(Error::MalformedResponse);
        }
        let element = CompressedRistretto::from_slice(&bytes[..32]).map_err(|_| Error::MalformedResponse)?;
        let c = decode_scalar(&bytes[32..64]).ok_or(Error::MalformedResponse)?;
        let s = decode_scalar(&bytes[64..]).ok_or(Error::MalformedResponse)?;
        Ok(Evaluation {
            element,
            proof: DleqProof { c, s },
        })
    }
}

/// Proves `Z = M^msk` against `mpk = g^msk`.
pub fn dleq_prove<R: RngCore + CryptoRng + ?Sized>(
    key: &KeyPair,
    m: &RistrettoPoint,
    z: &RistrettoPoint,
    rng: &mut R,
) -> Result<DleqProof, Error> {
    let mut k = random_nonzero_scalar(rng)?;
    let a = (RISTRETTO_BASEPOINT_POINT * k).compress();
    let b = (m * k).compress();
    let g = RISTRETTO_BASEPOINT_POINT.compress();
    let c = hash_to_scalar(&[&g, &key.public, &m.compress(), &z.compress(), &a, &b]);
    let s = k - c * key.secret;
    k.zeroize();
    Ok(DleqProof { c, s })
}

/// Checks `c = H(g, mpk, M, Z, g^s·mpk^c, M^s·Z^c)`.
pub fn dleq_verify(
    mpk: &CompressedRistretto,
    m: &CompressedRistretto,
    z: &CompressedRistretto,
    proof: &DleqProof,
) -> bool {
    let (Some(pk), Some(mp), Some(zp)) = (mpk.decompress(), m.decompress(), z.decompress()) else {
        return false;
    };
    if pk == RistrettoPoint::identity() {
        return false;
    }
    let a = RistrettoPoint::vartime_double_scalar_mul_basepoint(&proof.c, &pk, &proof.s).compress();
    let b = (mp * proof.s + zp * proof.c).compress();
    let g = RISTRETTO_BASEPOINT_POINT.compress();
    hash_to_scalar(&[&g, mpk, m, z, &a, &b]) == proof.c
}

/// Server evaluation of a blinded request.
pub fn evaluate<R: RngCore + CryptoRng + ?Sized>(
    key: &KeyPair,
    request: &BlindRequest,
    rng: &mut R,
) -> Result<Evaluation, Error> {
    let (_, m) = decode_element(&request.0).ok_or(Error::MalformedRequest)?;
    let z = m * key.secret;
    let proof = dleq_prove(key, &m, &z, rng)?;
    Ok(Evaluation {
        element: z.compress(),
        proof,
    })
}

/// Verifies the proof, unblinds and expands to the 96-byte PRF output.
pub fn finalize(
    mpk: &PublicKey,
    evaluation: &Evaluation,
    state: &ClientState,
) -> Result<[u8; OUTPUT_LEN], Error> {
    let z = evaluation.element.decompress().ok_or(Error::MalformedResponse)?;
    let m = CompressedRistretto(state.request);
    if !dleq_verify(&mpk.element, &m, &evaluation.element, &evaluation.proof) {
        return Err(Error::ProofRejected);
    }
    let n = (z * state.blind.invert()).compress();
    Ok(expand_output(&state.input, n.as_bytes()))
}
