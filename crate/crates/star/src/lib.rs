//! Services, client harness and tooling around `star-core`.
//!
//! Three services take part in a campaign: a [`randomness`] server that
//! evaluates the VOPRF under a per-epoch key, an [`aggregation`] server that
//! stores messages and publishes reports, and an optional [`relay`] that
//! strips client identity before submissions reach the aggregator. The
//! [`harness`] drives all three, in-process or over HTTP, and checks each
//! report against a plaintext counting oracle.

pub mod aggregation;
pub mod campaign;
pub mod config;
pub mod costs;
pub mod entropy;
pub mod error;
pub mod harness;
pub mod http;
pub mod randomness;
pub mod relay;
pub mod report;
pub mod store;
pub mod zipf;

pub use error::{Result, StarError};
