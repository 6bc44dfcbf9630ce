//! Client message construction and the message wire format.
//!
//! A client turns 96 bytes of per-measurement randomness into three 32-byte
//! parts: a key seed, a coefficient seed and the tag. The first 16 bytes of
//! the key seed are secret-shared and also derive the AEAD key, so the
//! aggregator can rebuild the key once it has enough shares.
//!
//! Wire layout of a [`StarMessage`]:
//!
//! ```text
//! epoch (u64 BE) ‖ tag (32) ‖ share (1 + 2·len) ‖ ciphertext_len (u32 BE) ‖ ciphertext
//! ```
//!
//! The ciphertext is `nonce (12) ‖ AES-128-GCM(x_len (u32 BE) ‖ x ‖ aux_len
//! (u32 BE) ‖ aux ‖ zero fill)`, with the plaintext always
//! `8 + x_max_len + aux_len` bytes long so every message of a campaign has
//! the same size.

use alloc::vec;
use alloc::vec::Vec;

use aes_gcm::aead::{Aead, KeyInit};
use aes_gcm::{Aes128Gcm, Nonce};
use rand_core::{CryptoRng, RngCore};
use sha2::{Digest, Sha256};
use zeroize::{Zeroize, ZeroizeOnDrop};

use crate::field::{field_from_bytes, FieldId, Fp129, Fp255, PrimeField, SEED_LEN};
use crate::sharing::{AnyShare, SharePolynomial};
use crate::voprf::{expand_output, OUTPUT_LEN};
use crate::Error;

pub const TAG_LEN: usize = 32;
pub const KEY_LEN: usize = 16;
pub const NONCE_LEN: usize = 12;
pub const AEAD_TAG_LEN: usize = 16;
/// Default campaign bound on measurement length (256-bit measurements).
pub const DEFAULT_X_MAX_LEN: usize = 32;

const KEY_LABEL: &[u8] = b"STAR-KEY";
const LITE_LABEL: &[u8] = b"STAR-LITE";
const SLOW_SALT: &[u8] = b"STAR-LITE-SLOW-v1";

/// The three parts of a client's randomness.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct Randomness {
    pub key_seed: [u8; 32],
    pub coeff_seed: [u8; 32],
    pub tag: [u8; TAG_LEN],
}

impl core::fmt::Debug for Randomness {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Randomness").finish_non_exhaustive()
    }
}

impl Randomness {
    /// The 16 bytes that are secret-shared.
    pub fn shared_seed(&self) -> [u8; SEED_LEN] {
        let mut out = [0u8; SEED_LEN];
        out.copy_from_slice(&self.key_seed[..SEED_LEN]);
        out
    }

    pub fn to_bytes(&self) -> [u8; OUTPUT_LEN] {
        let mut out = [0u8; OUTPUT_LEN];
        out[..32].copy_from_slice(&self.key_seed);
        out[32..64].copy_from_slice(&self.coeff_seed);
        out[64..].copy_from_slice(&self.tag);
        out
    }
}

/// Splits 96 bytes by position into key seed, coefficient seed and tag.
pub fn split_randomness(r: &[u8]) -> Result<Randomness, Error> {
    if r.len() != OUTPUT_LEN {
        return Err(Error::InputLength);
    }
    let mut out = Randomness {
        key_seed: [0; 32],
        coeff_seed: [0; 32],
        tag: [0; 32],
    };
    out.key_seed.copy_from_slice(&r[..32]);
    out.coeff_seed.copy_from_slice(&r[32..64]);
    out.tag.copy_from_slice(&r[64..]);
    Ok(out)
}

/// 128-bit AEAD key.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct AeadKey([u8; KEY_LEN]);

impl AeadKey {
    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl core::fmt::Debug for AeadKey {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str("AeadKey(..)")
    }
}

/// `SHA-256("STAR-KEY" ‖ seed)` truncated to 16 bytes.
pub fn derive_key(shared_seed: &[u8; SEED_LEN]) -> AeadKey {
    let d = Sha256::new()
        .chain_update(KEY_LABEL)
        .chain_update(shared_seed)
        .finalize();
    let mut k = [0u8; KEY_LEN];
    k.copy_from_slice(&d[..KEY_LEN]);
    AeadKey(k)
}

/// Public parameters of the memory-hard local randomness mode (Argon2id).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SlowHashParams {
    pub m_cost_kib: u32,
    pub t_cost: u32,
    pub p_cost: u32,
}

impl Default for SlowHashParams {
    fn default() -> Self {
        SlowHashParams {
            m_cost_kib: 19 * 1024,
            t_cost: 2,
            p_cost: 1,
        }
    }
}

/// How local (STARLite) randomness is derived from the measurement.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub enum Hardening {
    #[default]
    Fast,
    Slow(SlowHashParams),
}

/// Local randomness: the VOPRF output expansion keyed by a fixed label in
/// place of the server element, or Argon2id for the hardened mode.
pub fn derive_randomness_lite(x: &[u8], hardening: &Hardening) -> Result<[u8; OUTPUT_LEN], Error> {
    if x.is_empty() {
        return Err(Error::InputLength);
    }
    match hardening {
        Hardening::Fast => {
            let label: [u8; 32] = Sha256::digest(LITE_LABEL).into();
            Ok(expand_output(x, &label))
        }
        Hardening::Slow(params) => {
            let p = argon2::Params::new(params.m_cost_kib, params.t_cost, params.p_cost, Some(OUTPUT_LEN))
                .map_err(|_| Error::Unsupported)?;
            let argon = argon2::Argon2::new(argon2::Algorithm::Argon2id, argon2::Version::V0x13, p);
            let mut out = [0u8; OUTPUT_LEN];
            argon
                .hash_password_into(x, SLOW_SALT, &mut out)
                .map_err(|_| Error::Unsupported)?;
            Ok(out)
        }
    }
}

/// Campaign-wide payload shape: measurements up to `x_max_len` bytes and
/// auxiliary data padded or truncated to exactly `aux_len` bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PayloadPolicy {
    pub x_max_len: usize,
    pub aux_len: usize,
}

impl PayloadPolicy {
    pub const fn new(x_max_len: usize, aux_len: usize) -> Self {
        PayloadPolicy { x_max_len, aux_len }
    }

    pub const fn plaintext_len(&self) -> usize {
        8 + self.x_max_len + self.aux_len
    }

    pub const fn ciphertext_len(&self) -> usize {
        NONCE_LEN + self.plaintext_len() + AEAD_TAG_LEN
    }

    /// Serialized message size for this policy.
    pub const fn message_len(&self, field: FieldId) -> usize {
        8 + TAG_LEN + 1 + 2 * field.byte_len() + 4 + self.ciphertext_len()
    }

    /// Truncates or zero-pads `aux` to `aux_len`.
    pub fn fit_aux(&self, aux: &[u8]) -> Vec<u8> {
        let mut out = vec![0u8; self.aux_len];
        let n = aux.len().min(self.aux_len);
        out[..n].copy_from_slice(&aux[..n]);
        out
    }
}

impl Default for PayloadPolicy {
    fn default() -> Self {
        PayloadPolicy::new(DEFAULT_X_MAX_LEN, 0)
    }
}

/// `(c, s, t)` plus the randomness epoch it was built under.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StarMessage {
    pub epoch: u64,
    pub tag: [u8; TAG_LEN],
    pub share: AnyShare,
    pub ciphertext: Vec<u8>,
}

fn encode_plaintext(x: &[u8], aux: &[u8], policy: &PayloadPolicy) -> Vec<u8> {
    let mut pt = Vec::with_capacity(policy.plaintext_len());
    pt.extend_from_slice(&(x.len() as u32).to_be_bytes());
    pt.extend_from_slice(x);
    pt.extend_from_slice(&(aux.len() as u32).to_be_bytes());
    pt.extend_from_slice(aux);
    pt.resize(policy.plaintext_len(), 0);
    pt
}

/// Splits a decrypted plaintext back into `(x, aux)`.
pub fn decode_plaintext(pt: &[u8]) -> Result<(Vec<u8>, Vec<u8>), Error> {
    let read_len = |at: usize| -> Result<usize, Error> {
        let b = pt.get(at..at + 4).ok_or(Error::MalformedMessage)?;
        Ok(u32::from_be_bytes(b.try_into().unwrap()) as usize)
    };
    let x_len = read_len(0)?;
    let x = pt.get(4..4 + x_len).ok_or(Error::MalformedMessage)?;
    let aux_at = 4 + x_len;
    let aux_len = read_len(aux_at)?;
    let aux = pt
        .get(aux_at + 4..aux_at + 4 + aux_len)
        .ok_or(Error::MalformedMessage)?;
    if pt[aux_at + 4 + aux_len..].iter().any(|&b| b != 0) {
        return Err(Error::MalformedMessage);
    }
    Ok((x.to_vec(), aux.to_vec()))
}

/// `nonce ‖ AES-128-GCM(key, nonce, plaintext)`.
pub fn seal<R: RngCore + CryptoRng + ?Sized>(key: &AeadKey, plaintext: &[u8], rng: &mut R) -> Vec<u8> {
    let cipher = Aes128Gcm::new_from_slice(&key.0).expect("16-byte key");
    let mut nonce = [0u8; NONCE_LEN];
    rng.fill_bytes(&mut nonce);
    let body = cipher
        .encrypt(Nonce::from_slice(&nonce), plaintext)
        .expect("in-memory AES-GCM encryption");
    let mut out = Vec::with_capacity(NONCE_LEN + body.len());
    out.extend_from_slice(&nonce);
    out.extend_from_slice(&body);
    out
}

/// Inverse of [`seal`].
pub fn open(key: &AeadKey, ciphertext: &[u8]) -> Result<Vec<u8>, Error> {
    if ciphertext.len() < NONCE_LEN + AEAD_TAG_LEN {
        return Err(Error::DecryptionFailed);
    }
    let cipher = Aes128Gcm::new_from_slice(&key.0).expect("16-byte key");
    let (nonce, body) = ciphertext.split_at(NONCE_LEN);
    cipher
        .decrypt(Nonce::from_slice(nonce), body)
        .map_err(|_| Error::DecryptionFailed)
}

/// Decrypts a message ciphertext into `(x, aux)`.
pub fn open_payload(key: &AeadKey, ciphertext: &[u8]) -> Result<(Vec<u8>, Vec<u8>), Error> {
    decode_plaintext(&open(key, ciphertext)?)
}

/// Sharing polynomial for the shared seed under `field`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AnyPolynomial {
    F129(SharePolynomial<Fp129>),
    F255(SharePolynomial<Fp255>),
}

impl AnyPolynomial {
    pub fn derive(r: &Randomness, threshold: usize, field: FieldId) -> Result<Self, Error> {
        fn typed<F: PrimeField>(r: &Randomness, threshold: usize) -> Result<SharePolynomial<F>, Error> {
            let secret = field_from_bytes::<F>(&r.key_seed[..SEED_LEN])?;
            SharePolynomial::derive(secret, &r.coeff_seed, threshold)
        }
        Ok(match field {
            FieldId::F129 => AnyPolynomial::F129(typed(r, threshold)?),
            FieldId::F255 => AnyPolynomial::F255(typed(r, threshold)?),
        })
    }

    pub fn share<R: RngCore + CryptoRng + ?Sized>(&self, rng: &mut R) -> AnyShare {
        match self {
            AnyPolynomial::F129(p) => AnyShare::F129(p.share(rng)),
            AnyPolynomial::F255(p) => AnyShare::F255(p.share(rng)),
        }
    }
}

/// Everything about a client message that is fixed by `(x, randomness)`.
///
/// Co-measuring clients compute identical values here; only the share's
/// x-coordinate, the nonce and the aux payload differ per client.
#[derive(Clone, Debug)]
pub struct MessageTemplate {
    key: AeadKey,
    polynomial: AnyPolynomial,
    tag: [u8; TAG_LEN],
    epoch: u64,
    policy: PayloadPolicy,
    x: Vec<u8>,
}

impl MessageTemplate {
    pub fn new(
        x: &[u8],
        r: &Randomness,
        threshold: usize,
        policy: &PayloadPolicy,
        field: FieldId,
        epoch: u64,
    ) -> Result<Self, Error> {
        if x.len() > policy.x_max_len {
            return Err(Error::InputLength);
        }
        Ok(MessageTemplate {
            key: derive_key(&r.shared_seed()),
            polynomial: AnyPolynomial::derive(r, threshold, field)?,
            tag: r.tag,
            epoch,
            policy: *policy,
            x: x.to_vec(),
        })
    }

    pub fn build<R: RngCore + CryptoRng + ?Sized>(&self, aux: &[u8], rng: &mut R) -> StarMessage {
        let aux = self.policy.fit_aux(aux);
        let pt = encode_plaintext(&self.x, &aux, &self.policy);
        StarMessage {
            epoch: self.epoch,
            tag: self.tag,
            share: self.polynomial.share(rng),
            ciphertext: seal(&self.key, &pt, rng),
        }
    }
}

/// Builds `(c, s, t)` for measurement `x` from already-split randomness.
#[allow(clippy::too_many_arguments)]
pub fn build_message<R: RngCore + CryptoRng + ?Sized>(
    x: &[u8],
    aux: &[u8],
    r: &Randomness,
    threshold: usize,
    policy: &PayloadPolicy,
    field: FieldId,
    epoch: u64,
    rng: &mut R,
) -> Result<StarMessage, Error> {
    Ok(MessageTemplate::new(x, r, threshold, policy, field, epoch)?.build(aux, rng))
}

impl StarMessage {
    pub fn field(&self) -> FieldId {
        self.share.field()
    }

    pub fn encoded_len(&self) -> usize {
        8 + TAG_LEN + AnyShare::encoded_len(self.field()) + 4 + self.ciphertext.len()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&self.epoch.to_be_bytes());
        out.extend_from_slice(&self.tag);
        self.share.encode_into(&mut out);
        out.extend_from_slice(&(self.ciphertext.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.ciphertext);
        out
    }

    /// Parses a whole message; trailing bytes are rejected.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, Error> {
        let (head, rest) = split(bytes, 8)?;
        let epoch = u64::from_be_bytes(head.try_into().unwrap());
        let (tag, rest) = split(rest, TAG_LEN)?;
        let (share, used) = AnyShare::decode_prefix(rest)?;
        let rest = &rest[used..];
        let (len, rest) = split(rest, 4)?;
        let len = u32::from_be_bytes(len.try_into().unwrap()) as usize;
        if rest.len() != len {
            return Err(Error::MalformedMessage);
        }
        Ok(StarMessage {
            epoch,
            tag: tag.try_into().unwrap(),
            share,
            ciphertext: rest.to_vec(),
        })
    }
}

fn split(bytes: &[u8], n: usize) -> Result<(&[u8], &[u8]), Error> {
    if bytes.len() < n {
        return Err(Error::MalformedMessage);
    }
    Ok(bytes.split_at(n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sharing::{recover, Share, ShareField};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn lite(x: &[u8]) -> Randomness {
        split_randomness(&derive_randomness_lite(x, &Hardening::Fast).unwrap()).unwrap()
    }

    #[test]
    fn split_is_a_partition() {
        let zero = split_randomness(&[0u8; 96]).unwrap();
        assert_eq!(zero.key_seed, [0u8; 32]);
        assert_eq!(zero.coeff_seed, [0u8; 32]);
        assert_eq!(zero.tag, [0u8; 32]);
        let r: Vec<u8> = (0..96u8).collect();
        assert_eq!(split_randomness(&r).unwrap().to_bytes().to_vec(), r);
        assert_eq!(split_randomness(&r[..95]), Err(Error::InputLength));
    }

    #[test]
    fn key_is_deterministic_and_sized() {
        let seed = [3u8; 16];
        assert_eq!(derive_key(&seed), derive_key(&seed));
        assert_eq!(derive_key(&seed).as_bytes().len(), 16);
        let mut flipped = seed;
        flipped[0] ^= 1;
        assert_ne!(derive_key(&seed), derive_key(&flipped));
    }

    #[test]
    fn lite_is_deterministic() {
        assert_eq!(
            derive_randomness_lite(b"abc", &Hardening::Fast).unwrap(),
            derive_randomness_lite(b"abc", &Hardening::Fast).unwrap()
        );
        assert_eq!(derive_randomness_lite(b"", &Hardening::Fast), Err(Error::InputLength));
    }

    #[test]
    fn slow_mode_differs_from_fast() {
        let params = SlowHashParams {
            m_cost_kib: 256,
            t_cost: 1,
            p_cost: 1,
        };
        let x = [9u8; 16];
        let slow = derive_randomness_lite(&x, &Hardening::Slow(params)).unwrap();
        let fast = derive_randomness_lite(&x, &Hardening::Fast).unwrap();
        assert_ne!(slow, fast);
        assert_eq!(slow, derive_randomness_lite(&x, &Hardening::Slow(params)).unwrap());
    }

    #[test]
    fn empty_aux_plaintext_is_just_x() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let r = lite(b"hello");
        let policy = PayloadPolicy::new(5, 0);
        let m = build_message(b"hello", b"", &r, 2, &policy, FieldId::F129, 0, &mut rng).unwrap();
        let (x, aux) = open_payload(&derive_key(&r.shared_seed()), &m.ciphertext).unwrap();
        assert_eq!(x, b"hello");
        assert!(aux.is_empty());
    }

    #[test]
    fn aux_truncated_and_padded() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let r = lite(b"x");
        let policy = PayloadPolicy::new(32, 256);
        let long: Vec<u8> = (0..300u32).map(|i| i as u8).collect();
        let m = build_message(b"x", &long, &r, 1, &policy, FieldId::F255, 0, &mut rng).unwrap();
        let (_, aux) = open_payload(&derive_key(&r.shared_seed()), &m.ciphertext).unwrap();
        assert_eq!(aux, long[..256].to_vec());

        let short = build_message(b"x", &[1, 2], &r, 1, &policy, FieldId::F255, 0, &mut rng).unwrap();
        let (_, aux) = open_payload(&derive_key(&r.shared_seed()), &short.ciphertext).unwrap();
        assert_eq!(aux.len(), 256);
        assert_eq!(&aux[..2], &[1, 2]);
        assert_eq!(m.to_bytes().len(), short.to_bytes().len());
    }

    #[test]
    fn measurement_longer_than_policy_rejected() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let r = lite(b"abc");
        let err = build_message(b"abc", b"", &r, 1, &PayloadPolicy::new(2, 0), FieldId::F129, 0, &mut rng);
        assert_eq!(err, Err(Error::InputLength));
    }

    #[test]
    fn co_measuring_clients_are_compatible() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let r = lite(b"shared");
        let policy = PayloadPolicy::default();
        let msgs: Vec<_> = (0..3)
            .map(|i| build_message(b"shared", &[i], &r, 3, &policy, FieldId::F129, 4, &mut rng).unwrap())
            .collect();
        assert!(msgs.iter().all(|m| m.tag == msgs[0].tag));
        let shares: Vec<Share<Fp129>> = msgs.iter().map(|m| Fp129::project(&m.share).unwrap()).collect();
        let secret = recover(&shares, 3).unwrap();
        assert_eq!(secret, field_from_bytes::<Fp129>(&r.shared_seed()).unwrap());
        assert_ne!(msgs[0].ciphertext, msgs[1].ciphertext);
    }

    #[test]
    fn wire_format_rejects_bad_input() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let r = lite(b"m");
        let m = build_message(b"m", b"", &r, 1, &PayloadPolicy::default(), FieldId::F129, 0, &mut rng).unwrap();
        let bytes = m.to_bytes();
        assert_eq!(StarMessage::from_bytes(&bytes).unwrap(), m);
        assert_eq!(StarMessage::from_bytes(&[]), Err(Error::MalformedMessage));
        assert_eq!(StarMessage::from_bytes(&bytes[..bytes.len() - 1]), Err(Error::MalformedMessage));
        let mut long = bytes.clone();
        long.push(0);
        assert_eq!(StarMessage::from_bytes(&long), Err(Error::MalformedMessage));
    }

    #[test]
    fn f129_zero_aux_size_is_fixed() {
        assert_eq!(PayloadPolicy::default().message_len(FieldId::F129), 147);
        assert_eq!(PayloadPolicy::default().message_len(FieldId::F255), 177);
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let r = lite(&[1u8; 32]);
        let m = build_message(&[1u8; 32], b"", &r, 10, &PayloadPolicy::default(), FieldId::F129, 0, &mut rng).unwrap();
        assert_eq!(m.to_bytes().len(), 147);
    }

    #[test]
    fn plaintext_decoder_rejects_garbage() {
        assert!(decode_plaintext(&[]).is_err());
        assert!(decode_plaintext(&[0, 0, 0, 9, 1]).is_err());
        let mut ok = encode_plaintext(b"ab", b"c", &PayloadPolicy::new(4, 2));
        assert_eq!(decode_plaintext(&ok).unwrap(), (b"ab".to_vec(), b"c".to_vec()));
        *ok.last_mut().unwrap() = 1;
        assert!(decode_plaintext(&ok).is_err());
    }
}
