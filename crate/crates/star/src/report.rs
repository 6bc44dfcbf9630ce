//! JSON-lines encoding of aggregation reports.
//!
//! One `measurement` line per revealed value, in ascending byte order of the
//! value, then a single `summary` line. Suppressed groups only show up as the
//! two counters in the summary (plus per-reason tallies in verbose mode).

use std::collections::BTreeMap;

use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine as _;
use serde::{Deserialize, Serialize};
use star_core::aggregate::OutputReport;

use crate::error::{Result, StarError};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeasurementLine {
    /// Hex-encoded measurement.
    pub x: String,
    pub count: u64,
    /// Base64 aux payloads, sorted.
    pub aux: Vec<String>,
    /// Members of the group left out of `count`.
    pub skipped: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped_by_reason: Option<BTreeMap<String, u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SummaryLine {
    /// Submission epoch the report covers.
    pub epoch: u64,
    /// Randomness epoch the messages were built under.
    pub randomness_epoch: u64,
    pub revealed_measurements: u64,
    pub revealed_messages: u64,
    pub suppressed_groups: u64,
    pub suppressed_messages: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suppressed_by_reason: Option<BTreeMap<String, u64>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportLine {
    Measurement(MeasurementLine),
    Summary(SummaryLine),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParsedReport {
    pub measurements: Vec<MeasurementLine>,
    pub summary: SummaryLine,
}

impl ParsedReport {
    /// Revealed `x -> count`.
    pub fn counts(&self) -> Result<BTreeMap<Vec<u8>, u64>> {
        self.measurements
            .iter()
            .map(|m| {
                let x = hex::decode(&m.x).map_err(|_| StarError::Config("report has non-hex measurement".into()))?;
                Ok((x, m.count))
            })
            .collect()
    }
}

fn reason_counts<'a>(reasons: impl Iterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut out = BTreeMap::new();
    for r in reasons {
        *out.entry(r.to_owned()).or_default() += 1;
    }
    out
}

pub fn report_lines(report: &OutputReport, submission_epoch: u64, verbose: bool) -> Vec<ReportLine> {
    let mut lines: Vec<ReportLine> = report
        .revealed
        .values()
        .map(|g| {
            ReportLine::Measurement(MeasurementLine {
                x: hex::encode(&g.x),
                count: g.count as u64,
                aux: g.aux_list.iter().map(|a| BASE64.encode(a)).collect(),
                skipped: g.skipped.len() as u64,
                skipped_by_reason: verbose.then(|| reason_counts(g.skipped.iter().map(|(_, r)| r.as_str()))),
            })
        })
        .collect();
    lines.push(ReportLine::Summary(SummaryLine {
        epoch: submission_epoch,
        randomness_epoch: report.epoch,
        revealed_measurements: report.revealed.len() as u64,
        revealed_messages: report.revealed_message_count(),
        suppressed_groups: report.suppressed_group_count,
        suppressed_messages: report.suppressed_message_count,
        suppressed_by_reason: verbose.then(|| {
            report
                .suppressed_by_reason
                .iter()
                .map(|(r, n)| (r.as_str().to_owned(), *n))
                .collect()
        }),
    }));
    lines
}

pub fn render_jsonl(report: &OutputReport, submission_epoch: u64, verbose: bool) -> Vec<u8> {
    let mut out = Vec::new();
    for line in report_lines(report, submission_epoch, verbose) {
        serde_json::to_writer(&mut out, &line).expect("report lines serialize");
        out.push(b'\n');
    }
    out
}

pub fn parse_jsonl(bytes: &[u8]) -> Result<ParsedReport> {
    let mut measurements = Vec::new();
    let mut summary = None;
    for line in bytes.split(|&b| b == b'\n').filter(|l| !l.is_empty()) {
        match serde_json::from_slice::<ReportLine>(line)? {
            ReportLine::Measurement(m) if summary.is_none() => measurements.push(m),
            ReportLine::Summary(s) if summary.is_none() => summary = Some(s),
            _ => return Err(StarError::Config("report has lines after its summary".into())),
        }
    }
    let summary = summary.ok_or_else(|| StarError::Config("report has no summary line".into()))?;
    Ok(ParsedReport { measurements, summary })
}
