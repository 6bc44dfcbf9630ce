//! Core primitives for distributed secret-sharing threshold aggregation.
//!
//! Clients derive per-measurement randomness (from a VOPRF server, or
//! locally from the measurement itself), then send `(ciphertext, share,
//! tag)` triples. A single aggregation server groups messages by tag and
//! can only recover the encryption key, and so the measurement, once at
//! least `threshold` clients sent the same value.
//!
//! The crate is `no_std` and only needs `alloc`. IO, networking and the
//! command line live in the companion `star` crate.
//!
//! ```
//! use rand::SeedableRng;
//! use star_core::aggregate::{aggregate, AggregationConfig};
//! use star_core::field::FieldId;
//! use star_core::message::{build_message, derive_randomness_lite, split_randomness, Hardening, PayloadPolicy};
//!
//! let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(1);
//! let policy = PayloadPolicy::new(32, 0);
//! let r = split_randomness(&derive_randomness_lite(b"hello", &Hardening::Fast).unwrap()).unwrap();
//! let messages: Vec<_> = (0..3)
//!     .map(|_| build_message(b"hello", b"", &r, 3, &policy, FieldId::F129, 0, &mut rng).unwrap())
//!     .collect();
//! let report = aggregate(&messages, &AggregationConfig::new(3, FieldId::F129, 0)).unwrap();
//! assert_eq!(report.revealed[&b"hello".to_vec()].count, 3);
//! ```
#![no_std]
#![forbid(unsafe_code)]

extern crate alloc;
#[cfg(feature = "std")]
extern crate std;

pub mod aggregate;
mod error;
pub mod field;
pub mod message;
pub mod poly;
pub mod sharing;
pub mod voprf;

pub use error::Error;
