//! Identity-stripping relay.
//!
//! Clients seal their whole submission request, as a small HTTP/1.1 message,
//! to the relay's HPKE key. The relay opens it, keeps only the
//! `X-STAR-Message` payload and forwards that to the aggregation server over
//! its own connection, so the server never sees the client's address or
//! headers. The relay logs byte counts and nothing else.

use std::sync::Mutex;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use hpke::aead::AesGcm128;
use hpke::kdf::HkdfSha256;
use hpke::kem::X25519HkdfSha256;
use hpke::{Deserializable, Kem as _, OpModeR, OpModeS, Serializable};
use rand::{CryptoRng, RngCore};

use crate::error::{Result, StarError};

type RelayKem = X25519HkdfSha256;

pub const KEM_ID: u16 = 0x0020;
pub const KDF_ID: u16 = 0x0001;
pub const AEAD_ID: u16 = 0x0001;
pub const PUBLIC_KEY_LEN: usize = 32;
pub const ENCAPPED_KEY_LEN: usize = 32;
/// `key_id ‖ kem ‖ kdf ‖ aead ‖ pk`.
pub const RELAY_CONFIG_LEN: usize = 1 + 6 + PUBLIC_KEY_LEN;
pub const MESSAGE_HEADER: &str = "X-STAR-Message";

const HPKE_INFO: &[u8] = b"STAR-RELAY-v1";
/// Headers every client sends with the same values.
const USER_AGENT: &str = "star-client/1";
const ACCEPT_LANGUAGE: &str = "*";
const INNER_HOST: &str = "aggregator";

/// Published relay key configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RelayKeyConfig {
    pub key_id: u8,
    pub public_key: [u8; PUBLIC_KEY_LEN],
}

impl RelayKeyConfig {
    pub fn to_bytes(&self) -> [u8; RELAY_CONFIG_LEN] {
        let mut out = [0u8; RELAY_CONFIG_LEN];
        out[0] = self.key_id;
        out[1..3].copy_from_slice(&KEM_ID.to_be_bytes());
        out[3..5].copy_from_slice(&KDF_ID.to_be_bytes());
        out[5..7].copy_from_slice(&AEAD_ID.to_be_bytes());
        out[7..].copy_from_slice(&self.public_key);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != RELAY_CONFIG_LEN {
            return Err(StarError::Config("relay config has the wrong length".into()));
        }
        let id = |at: usize| u16::from_be_bytes([bytes[at], bytes[at + 1]]);
        if (id(1), id(3), id(5)) != (KEM_ID, KDF_ID, AEAD_ID) {
            return Err(StarError::Config("unsupported relay HPKE suite".into()));
        }
        Ok(RelayKeyConfig {
            key_id: bytes[0],
            public_key: bytes[7..].try_into().unwrap(),
        })
    }
}

/// A relay key pair; the secret never leaves the relay.
pub struct RelayKeys {
    config: RelayKeyConfig,
    secret: <RelayKem as hpke::Kem>::PrivateKey,
}

impl std::fmt::Debug for RelayKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RelayKeys").field("key_id", &self.config.key_id).finish_non_exhaustive()
    }
}

impl RelayKeys {
    pub fn config(&self) -> RelayKeyConfig {
        self.config
    }
}

/// Fresh KEM key pair under `key_id`.
pub fn relay_keygen<R: RngCore + CryptoRng>(key_id: u8, rng: &mut R) -> RelayKeys {
    let (secret, public) = RelayKem::gen_keypair(rng);
    RelayKeys {
        config: RelayKeyConfig {
            key_id,
            public_key: public.to_bytes().into(),
        },
        secret,
    }
}

/// `key_id ‖ enc ‖ sealed request`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Capsule {
    pub key_id: u8,
    pub enc: [u8; ENCAPPED_KEY_LEN],
    pub sealed: Vec<u8>,
}

impl Capsule {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.push(self.key_id);
        out.extend_from_slice(&self.enc);
        out.extend_from_slice(&self.sealed);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() <= 1 + ENCAPPED_KEY_LEN {
            return Err(StarError::CapsuleRejected);
        }
        Ok(Capsule {
            key_id: bytes[0],
            enc: bytes[1..1 + ENCAPPED_KEY_LEN].try_into().unwrap(),
            sealed: bytes[1 + ENCAPPED_KEY_LEN..].to_vec(),
        })
    }

    pub fn encoded_len(&self) -> usize {
        1 + ENCAPPED_KEY_LEN + self.sealed.len()
    }
}

/// Seals `inner_request` to the relay key in `config`.
pub fn encapsulate<R: RngCore + CryptoRng>(inner_request: &[u8], config: &RelayKeyConfig, rng: &mut R) -> Result<Capsule> {
    let pk = <RelayKem as hpke::Kem>::PublicKey::from_bytes(&config.public_key)
        .map_err(|_| StarError::Config("relay public key is invalid".into()))?;
    let aad = [config.key_id];
    let (enc, sealed) = hpke::single_shot_seal::<AesGcm128, HkdfSha256, RelayKem, _>(
        &OpModeS::Base,
        &pk,
        HPKE_INFO,
        inner_request,
        &aad,
        rng,
    )
    .map_err(|_| StarError::CapsuleRejected)?;
    Ok(Capsule {
        key_id: config.key_id,
        enc: enc.to_bytes().into(),
        sealed,
    })
}

/// The client's submission request, before sealing.
pub fn build_inner_request(message: &[u8]) -> Vec<u8> {
    format!(
        "POST /submit HTTP/1.1\r\nHost: {INNER_HOST}\r\nUser-Agent: {USER_AGENT}\r\nAccept-Language: {ACCEPT_LANGUAGE}\r\n{MESSAGE_HEADER}: {}\r\n\r\n",
        BASE64.encode(message)
    )
    .into_bytes()
}

/// Extracts the message bytes from an inner request.
pub fn parse_inner_request(request: &[u8]) -> Result<Vec<u8>> {
    let text = std::str::from_utf8(request).map_err(|_| StarError::MalformedInnerRequest("not UTF-8"))?;
    let head = text
        .strip_suffix("\r\n\r\n")
        .ok_or(StarError::MalformedInnerRequest("missing header terminator"))?;
    let mut lines = head.split("\r\n");
    let status = lines.next().unwrap_or_default();
    if status != "POST /submit HTTP/1.1" {
        return Err(StarError::MalformedInnerRequest("unexpected request line"));
    }
    let mut message = None;
    for line in lines {
        let (name, value) = line
            .split_once(':')
            .ok_or(StarError::MalformedInnerRequest("malformed header"))?;
        if name.eq_ignore_ascii_case(MESSAGE_HEADER) {
            if message.is_some() {
                return Err(StarError::MalformedInnerRequest("repeated message header"));
            }
            message = Some(
                BASE64
                    .decode(value.trim())
                    .map_err(|_| StarError::MalformedInnerRequest("message header is not base64"))?,
            );
        }
    }
    message.ok_or(StarError::MalformedInnerRequest("missing message header"))
}

/// One line of the relay's log. Only sizes are recorded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct RelayLogRecord {
    pub capsule_bytes: usize,
    pub forwarded_bytes: usize,
    pub status: u16,
}

/// Relay state: the active key, plus a log of byte counts.
pub struct Relay {
    keys: Mutex<RelayKeys>,
    log: Mutex<Vec<RelayLogRecord>>,
}

impl std::fmt::Debug for Relay {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Relay").field("key_id", &self.config().key_id).finish_non_exhaustive()
    }
}

impl Relay {
    pub fn new(keys: RelayKeys) -> Self {
        Relay {
            keys: Mutex::new(keys),
            log: Mutex::new(Vec::new()),
        }
    }

    pub fn generate() -> Self {
        Relay::new(relay_keygen(0, &mut rand::rngs::OsRng))
    }

    pub fn config(&self) -> RelayKeyConfig {
        self.keys.lock().unwrap().config
    }

    /// Replaces the key; capsules sealed to the old one are refused afterwards.
    pub fn rotate(&self) -> RelayKeyConfig {
        let mut keys = self.keys.lock().unwrap();
        let next = keys.config.key_id.wrapping_add(1);
        *keys = relay_keygen(next, &mut rand::rngs::OsRng);
        keys.config
    }

    /// Opens a capsule and returns the message bytes to forward.
    pub fn open(&self, capsule: &[u8]) -> Result<Vec<u8>> {
        let capsule = Capsule::from_bytes(capsule)?;
        let keys = self.keys.lock().unwrap();
        if capsule.key_id != keys.config.key_id {
            return Err(StarError::KeyMismatch {
                got: capsule.key_id,
                expected: keys.config.key_id,
            });
        }
        let enc = <RelayKem as hpke::Kem>::EncappedKey::from_bytes(&capsule.enc)
            .map_err(|_| StarError::CapsuleRejected)?;
        let inner = hpke::single_shot_open::<AesGcm128, HkdfSha256, RelayKem>(
            &OpModeR::Base,
            &keys.secret,
            &enc,
            HPKE_INFO,
            &capsule.sealed,
            &[capsule.key_id],
        )
        .map_err(|_| StarError::CapsuleRejected)?;
        drop(keys);
        parse_inner_request(&inner)
    }

    /// Opens `capsule`, hands the message to `forward` and logs the exchange.
    /// `forward` returns the upstream status code.
    pub fn relay<F>(&self, capsule: &[u8], forward: F) -> Result<u16>
    where
        F: FnOnce(&[u8]) -> Result<u16>,
    {
        let outcome = self.open(capsule).and_then(|message| {
            let status = forward(&message)?;
            Ok((message.len(), status))
        });
        let (forwarded_bytes, status) = match &outcome {
            Ok((n, status)) => (*n, *status),
            Err(StarError::Upstream(_)) => (0, 502),
            Err(_) => (0, 400),
        };
        self.record(RelayLogRecord {
            capsule_bytes: capsule.len(),
            forwarded_bytes,
            status,
        });
        outcome.map(|(_, status)| status)
    }

    pub fn record(&self, record: RelayLogRecord) {
        log::info!(
            "relay capsule={} forwarded={} status={}",
            record.capsule_bytes,
            record.forwarded_bytes,
            record.status
        );
        self.log.lock().unwrap().push(record);
    }

    pub fn log_records(&self) -> Vec<RelayLogRecord> {
        self.log.lock().unwrap().clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::OsRng;

    #[test]
    fn inner_request_round_trip() {
        let msg = vec![7u8; 147];
        let req = build_inner_request(&msg);
        assert!(req.starts_with(b"POST /submit HTTP/1.1\r\n"));
        assert_eq!(parse_inner_request(&req).unwrap(), msg);
        assert!(parse_inner_request(b"GET / HTTP/1.1\r\n\r\n").is_err());
        assert!(parse_inner_request(b"POST /submit HTTP/1.1\r\nHost: a\r\n\r\n").is_err());
    }

    #[test]
    fn config_round_trip_and_suite_check() {
        let keys = relay_keygen(3, &mut OsRng);
        let bytes = keys.config().to_bytes();
        assert_eq!(RelayKeyConfig::from_bytes(&bytes).unwrap(), keys.config());
        let mut bad = bytes;
        bad[2] ^= 1;
        assert!(RelayKeyConfig::from_bytes(&bad).is_err());
    }

    #[test]
    fn seal_open_and_rotation_gate() {
        let relay = Relay::generate();
        let old = relay.config();
        let req = build_inner_request(b"payload");
        let capsule = encapsulate(&req, &old, &mut OsRng).unwrap().to_bytes();
        assert_eq!(relay.open(&capsule).unwrap(), b"payload");
        relay.rotate();
        let stale = encapsulate(&req, &old, &mut OsRng).unwrap().to_bytes();
        assert!(matches!(relay.open(&stale), Err(StarError::KeyMismatch { .. })));
    }
}
