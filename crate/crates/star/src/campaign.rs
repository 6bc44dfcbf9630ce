//! Public campaign parameters, served identically to every client.

use serde::{Deserialize, Serialize};
use star_core::aggregate::AggregationConfig;
use star_core::field::FieldId;
use star_core::message::{Hardening, PayloadPolicy, SlowHashParams, DEFAULT_X_MAX_LEN};

use crate::error::{Result, StarError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum HardeningMode {
    Fast,
    Slow { m_cost_kib: u32, t_cost: u32, p_cost: u32 },
}

impl HardeningMode {
    pub fn slow_default() -> Self {
        let p = SlowHashParams::default();
        HardeningMode::Slow {
            m_cost_kib: p.m_cost_kib,
            t_cost: p.t_cost,
            p_cost: p.p_cost,
        }
    }

    pub fn to_core(self) -> Hardening {
        match self {
            HardeningMode::Fast => Hardening::Fast,
            HardeningMode::Slow {
                m_cost_kib,
                t_cost,
                p_cost,
            } => Hardening::Slow(SlowHashParams {
                m_cost_kib,
                t_cost,
                p_cost,
            }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CampaignConfig {
    pub threshold: usize,
    #[serde(with = "field_name")]
    pub field: FieldId,
    pub aux_fixed_len: usize,
    pub x_max_len: usize,
    /// Submission epoch `e` accepts messages built with randomness epoch `e - epoch_offset`.
    pub epoch_offset: u64,
    pub hardening: HardeningMode,
}

impl Default for CampaignConfig {
    fn default() -> Self {
        CampaignConfig {
            threshold: 10,
            field: FieldId::F129,
            aux_fixed_len: 0,
            x_max_len: DEFAULT_X_MAX_LEN,
            epoch_offset: 1,
            hardening: HardeningMode::Fast,
        }
    }
}

impl CampaignConfig {
    pub fn validate(&self) -> Result<()> {
        if self.threshold == 0 {
            return Err(StarError::Config("threshold must be at least 1".into()));
        }
        if self.x_max_len == 0 || self.x_max_len > star_core::voprf::MAX_INPUT_LEN {
            return Err(StarError::Config("x_max_len must be in 1..=65536".into()));
        }
        if !self.field.check_modulus() {
            return Err(StarError::Config(format!("modulus of {} failed the primality check", self.field)));
        }
        Ok(())
    }

    pub fn policy(&self) -> PayloadPolicy {
        PayloadPolicy::new(self.x_max_len, self.aux_fixed_len)
    }

    /// Aggregation settings for the messages stored under `submission_epoch`.
    pub fn aggregation(&self, submission_epoch: u64) -> Option<AggregationConfig> {
        let randomness_epoch = submission_epoch.checked_sub(self.epoch_offset)?;
        Some(AggregationConfig::new(self.threshold, self.field, randomness_epoch))
    }

    /// Stable JSON encoding served at `GET /config`.
    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("config serializes")
    }
}

mod field_name {
    use serde::{Deserialize, Deserializer, Serializer};
    use star_core::field::FieldId;

    pub fn serialize<S: Serializer>(f: &FieldId, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(f.name())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<FieldId, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(|_| serde::de::Error::custom(format!("unknown field {s}")))
    }
}
