//! VOPRF randomness service with epoch key rotation.
//!
//! Evaluations read the current key through an [`ArcSwap`] handle, so
//! rotation is a single atomic pointer replacement and an evaluation always
//! pairs its response with the epoch whose key produced it.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, Weak};
use std::time::{Duration, Instant, SystemTime};

use arc_swap::ArcSwap;
use rand::rngs::OsRng;
use star_core::voprf::{evaluate, keygen, setup, BlindRequest, KeyPair, PublicParams, BUNDLE_LEN, RESPONSE_LEN};

use crate::error::{Result, StarError};

pub const DEFAULT_EPOCH_LEN: Duration = Duration::from_secs(24 * 3600);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EpochSchedule {
    pub epoch_len: Duration,
    pub genesis: SystemTime,
}

impl EpochSchedule {
    pub fn new(epoch_len: Duration, genesis: SystemTime) -> Self {
        EpochSchedule { epoch_len, genesis }
    }

    /// `floor((now - genesis) / epoch_len)`; zero before genesis.
    pub fn epoch_at(&self, now: SystemTime) -> u64 {
        let elapsed = now.duration_since(self.genesis).unwrap_or_default();
        (elapsed.as_nanos() / self.epoch_len.as_nanos().max(1)) as u64
    }

    pub fn current_epoch(&self) -> u64 {
        self.epoch_at(SystemTime::now())
    }

    /// Wall-clock start of `epoch`.
    pub fn start_of(&self, epoch: u64) -> SystemTime {
        self.genesis + self.epoch_len.saturating_mul(u32::try_from(epoch).unwrap_or(u32::MAX))
    }
}

impl Default for EpochSchedule {
    fn default() -> Self {
        EpochSchedule::new(DEFAULT_EPOCH_LEN, SystemTime::now())
    }
}

/// Per-source token bucket. Not installed unless configured.
#[derive(Debug)]
pub struct RateLimiter {
    capacity: f64,
    refill_per_sec: f64,
    buckets: Mutex<HashMap<String, (f64, Instant)>>,
}

impl RateLimiter {
    pub fn new(capacity: u32, refill_per_sec: f64) -> Self {
        RateLimiter {
            capacity: capacity as f64,
            refill_per_sec,
            buckets: Mutex::new(HashMap::new()),
        }
    }

    pub fn admit(&self, source: &str) -> bool {
        let now = Instant::now();
        let mut buckets = self.buckets.lock().unwrap();
        let (tokens, last) = buckets.entry(source.to_owned()).or_insert((self.capacity, now));
        *tokens = (*tokens + now.duration_since(*last).as_secs_f64() * self.refill_per_sec).min(self.capacity);
        *last = now;
        if *tokens >= 1.0 {
            *tokens -= 1.0;
            true
        } else {
            false
        }
    }
}

#[derive(Clone, Debug)]
pub struct RandomnessOptions {
    /// How long the previous epoch's key keeps answering after a rotation.
    pub grace: Duration,
    pub rate_limit: Option<(u32, f64)>,
    pub first_epoch: u64,
}

impl Default for RandomnessOptions {
    fn default() -> Self {
        RandomnessOptions {
            grace: Duration::ZERO,
            rate_limit: None,
            first_epoch: 0,
        }
    }
}

struct Retired {
    key: Arc<KeyPair>,
    until: Instant,
}

pub struct RandomnessService {
    params: PublicParams,
    current: ArcSwap<KeyPair>,
    retired: Mutex<Option<Retired>>,
    destroyed: Mutex<Vec<(u64, Weak<KeyPair>)>>,
    rotation: Mutex<()>,
    grace: Duration,
    limiter: Option<RateLimiter>,
}

impl std::fmt::Debug for RandomnessService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RandomnessService")
            .field("epoch", &self.current_epoch())
            .field("grace", &self.grace)
            .finish_non_exhaustive()
    }
}

impl RandomnessService {
    pub fn new(options: RandomnessOptions) -> Result<Self> {
        let params = setup(128)?;
        let key = keygen(&params, options.first_epoch, &mut OsRng)?;
        Ok(RandomnessService {
            params,
            current: ArcSwap::from_pointee(key),
            retired: Mutex::new(None),
            destroyed: Mutex::new(Vec::new()),
            rotation: Mutex::new(()),
            grace: options.grace,
            limiter: options.rate_limit.map(|(c, r)| RateLimiter::new(c, r)),
        })
    }

    pub fn params(&self) -> &PublicParams {
        &self.params
    }

    pub fn current_epoch(&self) -> u64 {
        self.current.load().epoch()
    }

    /// Public bundle `epoch ‖ mpk` for the current epoch.
    pub fn handle_info(&self) -> [u8; BUNDLE_LEN] {
        let bundle = self.current.load().public_key().to_bundle();
        log::debug!("info bundle served, {} bytes", bundle.len());
        bundle
    }

    /// `false` when the optional rate limiter rejects `source`.
    pub fn admit(&self, source: &str) -> bool {
        self.limiter.as_ref().is_none_or(|l| l.admit(source))
    }

    pub fn handle_evaluate(&self, request: &[u8], claimed_epoch: u64) -> Result<[u8; RESPONSE_LEN]> {
        let request = BlindRequest::from_bytes(request)?;
        let key = self.key_for(claimed_epoch)?;
        Ok(evaluate(&key, &request, &mut OsRng)?.to_bytes())
    }

    fn key_for(&self, epoch: u64) -> Result<Arc<KeyPair>> {
        let current = self.current.load_full();
        if current.epoch() == epoch {
            return Ok(current);
        }
        let mut retired = self.retired.lock().unwrap();
        if let Some(r) = retired.as_ref() {
            if Instant::now() >= r.until {
                *retired = None;
            } else if r.key.epoch() == epoch {
                return Ok(r.key.clone());
            }
        }
        Err(StarError::EpochExpired {
            claimed: epoch,
            current: current.epoch(),
        })
    }

    /// Installs a new key for the next epoch and retires the old one.
    pub fn rotate_epoch(&self) -> Result<u64> {
        let _guard = self.rotation.lock().unwrap();
        let next_epoch = self.current_epoch() + 1;
        let next = Arc::new(keygen(&self.params, next_epoch, &mut OsRng)?);
        let old = self.current.swap(next);
        self.destroyed.lock().unwrap().push((old.epoch(), Arc::downgrade(&old)));
        let mut retired = self.retired.lock().unwrap();
        *retired = (!self.grace.is_zero()).then(|| Retired {
            key: old,
            until: Instant::now() + self.grace,
        });
        Ok(next_epoch)
    }

    /// Drops a retired key whose grace window has passed.
    pub fn sweep(&self) {
        let mut retired = self.retired.lock().unwrap();
        if retired.as_ref().is_some_and(|r| Instant::now() >= r.until) {
            *retired = None;
        }
    }

    /// `true` once no handle to the key of `epoch` remains, meaning its
    /// secret has been dropped and zeroized.
    pub fn key_destroyed(&self, epoch: u64) -> bool {
        self.sweep();
        self.destroyed
            .lock()
            .unwrap()
            .iter()
            .find(|(e, _)| *e == epoch)
            .is_some_and(|(_, weak)| weak.strong_count() == 0)
    }

    /// Bytes of key material held, independent of how many queries were served.
    pub fn state_bytes(&self) -> usize {
        let retired = self.retired.lock().unwrap().is_some() as usize;
        (1 + retired) * std::mem::size_of::<KeyPair>()
    }
}
