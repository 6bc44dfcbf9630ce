//! The aggregation service: ingest, close, aggregate, publish.

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use star_core::aggregate::{group_by_tag, recover_subset, AggregationConfig, OutputReport};
use star_core::message::StarMessage;

use crate::campaign::CampaignConfig;
use crate::error::{Result, StarError};
use crate::report::render_jsonl;
use crate::store::EpochStore;

/// Like [`star_core::aggregate::aggregate`], with tag groups recovered in parallel.
pub fn aggregate_parallel(messages: &[StarMessage], config: &AggregationConfig) -> Result<OutputReport> {
    if config.threshold == 0 {
        return Err(star_core::Error::InvalidThreshold.into());
    }
    if messages.iter().any(|m| m.epoch != config.epoch) {
        return Err(star_core::Error::EpochMismatch.into());
    }
    let groups = group_by_tag(messages)?;
    let outcomes: Vec<_> = groups.par_iter().map(|g| recover_subset(g, config)).collect();
    Ok(OutputReport::from_outcomes(config, outcomes))
}

/// A finished aggregation run.
#[derive(Clone, Debug)]
pub struct EpochReport {
    pub epoch: u64,
    pub report: Arc<OutputReport>,
    pub jsonl: Arc<Vec<u8>>,
    pub elapsed: Duration,
}

pub struct AggregationService {
    campaign: CampaignConfig,
    config_json: Vec<u8>,
    store: EpochStore,
    open_epoch: Mutex<u64>,
    verbose: bool,
    reports: Mutex<BTreeMap<u64, EpochReport>>,
}

impl std::fmt::Debug for AggregationService {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AggregationService")
            .field("campaign", &self.campaign)
            .field("open_epoch", &self.open_epoch())
            .finish_non_exhaustive()
    }
}

fn report_path(dir: &std::path::Path, epoch: u64) -> PathBuf {
    dir.join(format!("report-{epoch:08}.jsonl"))
}

impl AggregationService {
    /// `first_epoch` is the open submission epoch for a fresh store; a reopened
    /// store resumes after its last closed epoch.
    pub fn new(campaign: CampaignConfig, store: EpochStore, first_epoch: u64) -> Result<Self> {
        campaign.validate()?;
        let open = store.last_closed().map_or(first_epoch, |e| (e + 1).max(first_epoch));
        Ok(AggregationService {
            config_json: campaign.to_json(),
            campaign,
            store,
            open_epoch: Mutex::new(open),
            verbose: false,
            reports: Mutex::new(BTreeMap::new()),
        })
    }

    pub fn with_verbose(mut self, verbose: bool) -> Self {
        self.verbose = verbose;
        self
    }

    pub fn campaign(&self) -> &CampaignConfig {
        &self.campaign
    }

    pub fn store(&self) -> &EpochStore {
        &self.store
    }

    pub fn handle_config(&self) -> &[u8] {
        &self.config_json
    }

    pub fn open_epoch(&self) -> u64 {
        *self.open_epoch.lock().unwrap()
    }

    /// Randomness epoch whose messages the open submission epoch accepts.
    pub fn accepted_randomness_epoch(&self) -> u64 {
        self.open_epoch().saturating_sub(self.campaign.epoch_offset)
    }

    /// Appends one message to the open epoch. The reply reveals nothing about its content.
    pub fn handle_ingest(&self, bytes: &[u8]) -> Result<()> {
        let message = StarMessage::from_bytes(bytes)?;
        let open = self.open_epoch.lock().unwrap();
        let submission = message.epoch.checked_add(self.campaign.epoch_offset);
        if submission != Some(*open) {
            return Err(StarError::EpochClosed(submission.unwrap_or(u64::MAX)));
        }
        self.store.append(*open, bytes)
    }

    /// Closes the open epoch and opens the next. Returns the closed epoch.
    pub fn close_epoch(&self) -> Result<u64> {
        let mut open = self.open_epoch.lock().unwrap();
        let closed = *open;
        self.store.close(closed)?;
        *open += 1;
        Ok(closed)
    }

    pub fn run_epoch_aggregation(&self, epoch: u64) -> Result<EpochReport> {
        if !self.store.is_closed(epoch) {
            return Err(if epoch >= self.open_epoch() {
                StarError::EpochOpen(epoch)
            } else {
                StarError::UnknownEpoch(epoch)
            });
        }
        let config = self
            .campaign
            .aggregation(epoch)
            .ok_or(StarError::UnknownEpoch(epoch))?
            .verbose(self.verbose);
        let start = Instant::now();
        let messages = self
            .store
            .records(epoch)
            .iter()
            .map(|r| StarMessage::from_bytes(r))
            .collect::<Result<Vec<_>, _>>()?;
        let report = aggregate_parallel(&messages, &config)?;
        let elapsed = start.elapsed();
        let jsonl = render_jsonl(&report, epoch, self.verbose);
        if let Some(dir) = self.store.dir() {
            let path = report_path(dir, epoch);
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, &jsonl)?;
            fs::rename(&tmp, &path)?;
        }
        log::info!(
            "epoch {epoch}: {} messages aggregated in {:.3}s, {} revealed",
            messages.len(),
            elapsed.as_secs_f64(),
            report.revealed.len()
        );
        let result = EpochReport {
            epoch,
            report: Arc::new(report),
            jsonl: Arc::new(jsonl),
            elapsed,
        };
        self.reports.lock().unwrap().insert(epoch, result.clone());
        Ok(result)
    }

    /// Published report for `epoch`, aggregating on first request.
    pub fn report(&self, epoch: u64) -> Result<Arc<Vec<u8>>> {
        if let Some(r) = self.reports.lock().unwrap().get(&epoch) {
            return Ok(r.jsonl.clone());
        }
        if let Some(dir) = self.store.dir() {
            if let Ok(bytes) = fs::read(report_path(dir, epoch)) {
                return Ok(Arc::new(bytes));
            }
        }
        Ok(self.run_epoch_aggregation(epoch)?.jsonl)
    }
}
