//! The TOML configuration file shared by every subcommand.
//!
//! All sections and keys are optional; command-line flags override them.
//!
//! ```toml
//! [campaign]
//! threshold = 10
//! field = "F129"
//! aux_fixed_len = 0
//!
//! [simulation]
//! clients = 10000
//! mode = "star"
//!
//! [services]
//! aggregation_addr = "127.0.0.1:8082"
//! data_dir = "/var/lib/star"
//! ```

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::campaign::CampaignConfig;
use crate::costs::PriceModel;
use crate::error::{Result, StarError};
use crate::harness::{Mode, Transport};
use crate::zipf::{DEFAULT_EXPONENT, DEFAULT_SUPPORT};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulationSection {
    pub clients: usize,
    pub mode: Mode,
    pub transport: Transport,
    pub seed: u64,
    pub zipf_support: usize,
    pub zipf_exponent: f64,
    pub verbose: bool,
    /// Go through loopback HTTP servers instead of direct calls.
    pub network: bool,
}

impl Default for SimulationSection {
    fn default() -> Self {
        SimulationSection {
            clients: 10_000,
            mode: Mode::Star,
            transport: Transport::Direct,
            seed: 0,
            zipf_support: DEFAULT_SUPPORT,
            zipf_exponent: DEFAULT_EXPONENT,
            verbose: false,
            network: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServicesSection {
    pub randomness_addr: SocketAddr,
    pub aggregation_addr: SocketAddr,
    pub relay_addr: SocketAddr,
    /// Where the relay forwards submissions.
    pub aggregation_url: String,
    /// Message logs and reports; in memory when unset.
    pub data_dir: Option<PathBuf>,
    /// Seconds the previous randomness key keeps answering after a rotation.
    pub grace_secs: u64,
    /// Epoch length for automatic randomness key rotation; manual only when unset.
    pub epoch_secs: Option<u64>,
    /// Token bucket per client address: capacity and refill per second.
    pub rate_limit: Option<(u32, f64)>,
    pub first_epoch: u64,
    pub verbose_reports: bool,
}

impl Default for ServicesSection {
    fn default() -> Self {
        ServicesSection {
            randomness_addr: SocketAddr::from(([127, 0, 0, 1], 8081)),
            aggregation_addr: SocketAddr::from(([127, 0, 0, 1], 8082)),
            relay_addr: SocketAddr::from(([127, 0, 0, 1], 8083)),
            aggregation_url: "http://127.0.0.1:8082".into(),
            data_dir: None,
            grace_secs: 0,
            epoch_secs: None,
            rate_limit: None,
            first_epoch: 0,
            verbose_reports: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FileConfig {
    pub campaign: CampaignConfig,
    pub simulation: SimulationSection,
    pub services: ServicesSection,
    pub prices: PriceModel,
}

impl Default for FileConfig {
    fn default() -> Self {
        FileConfig {
            campaign: CampaignConfig::default(),
            simulation: SimulationSection::default(),
            services: ServicesSection::default(),
            prices: PriceModel::EC2_2022,
        }
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| StarError::Config(e.to_string()))
    }

    /// Defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(FileConfig::default()),
            Some(p) => FileConfig::parse(&std::fs::read_to_string(p)?),
        }
    }
}
