//! Single-server aggregation: group messages by tag, recover each group's
//! key from its shares, decrypt, and tally the measurements that reached
//! the threshold.
//!
//! Per-group failures never abort the run. A group either yields a
//! [`RevealedGroup`] or is suppressed with a [`GroupSkip`] reason, and the
//! report keeps nothing about suppressed groups except counters.
//!
//! Recovery is robust to a minority of bad shares in a group. Candidate
//! polynomials are tried in order:
//!
//! 1. interpolation through the first `threshold` distinct shares,
//! 2. Reed-Solomon decoding over a window of distinct shares,
//! 3. every `threshold`-subset, when their number fits the configured budget.
//!
//! A candidate is accepted once at least `threshold` members both lie on it
//! and decrypt to the same measurement.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use crate::field::{field_to_seed, FieldId, Fp129, Fp255, PrimeField, SEED_LEN};
use crate::message::{derive_key, open, open_payload, AeadKey, StarMessage, TAG_LEN};
use crate::poly::{gao_decode, interpolate, Poly};
use crate::sharing::{lagrange_at_zero, Share, ShareField};
use crate::Error;

/// Default cap on the number of `threshold`-subsets tried per group.
pub const DEFAULT_SUBSET_BUDGET: u64 = 1 << 17;
/// Lower bound on the decoding window, in distinct shares.
pub const MIN_DECODE_WINDOW: usize = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AggregationConfig {
    pub threshold: usize,
    pub field: FieldId,
    pub epoch: u64,
    /// Keep per-reason tallies of suppressed groups in the report.
    pub verbose: bool,
    pub subset_budget: u64,
}

impl AggregationConfig {
    pub const fn new(threshold: usize, field: FieldId, epoch: u64) -> Self {
        AggregationConfig {
            threshold,
            field,
            epoch,
            verbose: false,
            subset_budget: DEFAULT_SUBSET_BUDGET,
        }
    }

    pub const fn verbose(mut self, on: bool) -> Self {
        self.verbose = on;
        self
    }

    fn decode_window(&self) -> usize {
        self.threshold.saturating_mul(4).max(MIN_DECODE_WINDOW)
    }
}

/// Why a group produced no output.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum GroupSkip {
    /// Fewer than `threshold` messages.
    BelowThreshold,
    /// No candidate key decrypted any member.
    ShareFailure,
    /// Some key decrypted members, but never `threshold` agreeing ones.
    InconsistentGroup,
}

/// Why a member of a revealed group was left out of its tally.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MessageSkip {
    WrongField,
    ShareInconsistent,
    DecryptionFailed,
    MalformedPlaintext,
    MeasurementMismatch,
}

impl MessageSkip {
    pub const fn as_str(self) -> &'static str {
        match self {
            MessageSkip::WrongField => "wrong_field",
            MessageSkip::ShareInconsistent => "share_inconsistent",
            MessageSkip::DecryptionFailed => "decryption_failed",
            MessageSkip::MalformedPlaintext => "malformed_plaintext",
            MessageSkip::MeasurementMismatch => "measurement_mismatch",
        }
    }
}

impl GroupSkip {
    pub const fn as_str(self) -> &'static str {
        match self {
            GroupSkip::BelowThreshold => "below_threshold",
            GroupSkip::ShareFailure => "share_failure",
            GroupSkip::InconsistentGroup => "inconsistent_group",
        }
    }
}

/// Messages sharing one tag, in canonical order (share bytes, then ciphertext).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagGroup<'a> {
    pub tag: [u8; TAG_LEN],
    pub messages: Vec<&'a StarMessage>,
}

/// A measurement that reached the threshold.
///
/// `skipped` holds `(index, reason)` pairs, indexing the group's canonical order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RevealedGroup {
    pub x: Vec<u8>,
    pub aux_list: Vec<Vec<u8>>,
    pub count: usize,
    pub skipped: Vec<(usize, MessageSkip)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GroupOutcome {
    Revealed(RevealedGroup),
    Suppressed { reason: GroupSkip, size: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OutputReport {
    pub epoch: u64,
    pub revealed: BTreeMap<Vec<u8>, RevealedGroup>,
    pub suppressed_group_count: u64,
    /// Messages in suppressed groups plus skipped members of revealed groups.
    pub suppressed_message_count: u64,
    /// Suppressed groups by reason; only filled in verbose mode.
    pub suppressed_by_reason: BTreeMap<GroupSkip, u64>,
}

impl OutputReport {
    pub fn empty(epoch: u64) -> Self {
        OutputReport {
            epoch,
            ..Default::default()
        }
    }

    /// Folds outcomes into a report. The result does not depend on outcome order.
    pub fn from_outcomes<I>(config: &AggregationConfig, outcomes: I) -> Self
    where
        I: IntoIterator<Item = GroupOutcome>,
    {
        let mut report = OutputReport::empty(config.epoch);
        for outcome in outcomes {
            match outcome {
                GroupOutcome::Revealed(group) => {
                    report.suppressed_message_count += group.skipped.len() as u64;
                    match report.revealed.get_mut(&group.x) {
                        Some(entry) => {
                            entry.count += group.count;
                            entry.aux_list.extend(group.aux_list);
                            entry.skipped.extend(group.skipped);
                            entry.aux_list.sort();
                            entry.skipped.sort();
                        }
                        None => {
                            report.revealed.insert(group.x.clone(), group);
                        }
                    }
                }
                GroupOutcome::Suppressed { reason, size } => {
                    report.suppressed_group_count += 1;
                    report.suppressed_message_count += size as u64;
                    if config.verbose {
                        *report.suppressed_by_reason.entry(reason).or_default() += 1;
                    }
                }
            }
        }
        report
    }

    /// Total number of messages counted towards revealed measurements.
    pub fn revealed_message_count(&self) -> u64 {
        self.revealed.values().map(|g| g.count as u64).sum()
    }
}

fn share_sort_key(m: &StarMessage) -> Vec<u8> {
    let mut key = m.share.to_bytes();
    key.extend_from_slice(&m.ciphertext);
    key
}

/// Partitions messages by tag, in ascending tag order.
pub fn group_by_tag(messages: &[StarMessage]) -> Result<Vec<TagGroup<'_>>, Error> {
    if let Some(first) = messages.first() {
        if messages.iter().any(|m| m.epoch != first.epoch) {
            return Err(Error::EpochMismatch);
        }
    }
    let mut by_tag: BTreeMap<[u8; TAG_LEN], Vec<&StarMessage>> = BTreeMap::new();
    for m in messages {
        by_tag.entry(m.tag).or_default().push(m);
    }
    Ok(by_tag
        .into_iter()
        .map(|(tag, mut messages)| {
            messages.sort_by_cached_key(|m| share_sort_key(m));
            TagGroup { tag, messages }
        })
        .collect())
}

/// Recovers one group, or says why it stays hidden.
pub fn recover_subset(group: &TagGroup<'_>, config: &AggregationConfig) -> GroupOutcome {
    if config.threshold == 0 || group.messages.len() < config.threshold {
        return GroupOutcome::Suppressed {
            reason: GroupSkip::BelowThreshold,
            size: group.messages.len(),
        };
    }
    match config.field {
        FieldId::F129 => GroupRecovery::<Fp129>::new(group, config).run(),
        FieldId::F255 => GroupRecovery::<Fp255>::new(group, config).run(),
    }
}

/// Groups, recovers and tallies a batch of messages from one epoch.
pub fn aggregate(messages: &[StarMessage], config: &AggregationConfig) -> Result<OutputReport, Error> {
    if config.threshold == 0 {
        return Err(Error::InvalidThreshold);
    }
    if messages.iter().any(|m| m.epoch != config.epoch) {
        return Err(Error::EpochMismatch);
    }
    let groups = group_by_tag(messages)?;
    Ok(OutputReport::from_outcomes(
        config,
        groups.iter().map(|g| recover_subset(g, config)),
    ))
}

/// Per-member state while a candidate is evaluated.
enum Verdict {
    Valid { x: Vec<u8>, aux: Vec<u8> },
    Skip(MessageSkip),
}

/// A share with a distinct x-coordinate and the member it came from.
#[derive(Clone, Copy)]
struct Point<F: PrimeField> {
    share: Share<F>,
    member: usize,
}

struct GroupRecovery<'g, 'a, F: ShareField> {
    messages: &'g [&'a StarMessage],
    shares: Vec<Option<Share<F>>>,
    distinct: Vec<Point<F>>,
    config: &'g AggregationConfig,
    rejected: BTreeSet<[u8; SEED_LEN]>,
    key_worked: bool,
}

impl<'g, 'a, F: ShareField> GroupRecovery<'g, 'a, F> {
    fn new(group: &'g TagGroup<'a>, config: &'g AggregationConfig) -> Self {
        let shares: Vec<Option<Share<F>>> = group.messages.iter().map(|m| F::project(&m.share)).collect();
        // members are sorted by share bytes, so equal x-coordinates are adjacent
        let mut distinct: Vec<Point<F>> = Vec::with_capacity(shares.len());
        for (member, share) in shares.iter().enumerate() {
            let Some(share) = share else { continue };
            if distinct.last().is_some_and(|p| p.share.x == share.x) {
                continue;
            }
            distinct.push(Point { share: *share, member });
        }
        GroupRecovery {
            messages: &group.messages,
            shares,
            distinct,
            config,
            rejected: BTreeSet::new(),
            key_worked: false,
        }
    }

    fn run(mut self) -> GroupOutcome {
        let size = self.messages.len();
        let k = self.config.threshold;
        let n = self.distinct.len();
        if n < k {
            return GroupOutcome::Suppressed {
                reason: GroupSkip::ShareFailure,
                size,
            };
        }

        let first: Vec<Point<F>> = self.distinct[..k].to_vec();
        if let Some(found) = self.try_points(&first, false) {
            return GroupOutcome::Revealed(found);
        }

        let window = n.min(self.config.decode_window());
        if window > k {
            let points: Vec<(F, F)> = self.distinct[..window].iter().map(|p| (p.share.x, p.share.y)).collect();
            if let Some(poly) = gao_decode(&points, k) {
                let secret = poly.coeffs().first().copied().unwrap_or(F::ZERO);
                if let Some(found) = self.try_candidate(secret, None, || Some(poly)) {
                    return GroupOutcome::Revealed(found);
                }
            }
        }

        if binomial_at_most(n, k, self.config.subset_budget) {
            let mut idx: Vec<usize> = (0..k).collect();
            let mut subset = Vec::with_capacity(k);
            loop {
                subset.clear();
                subset.extend(idx.iter().map(|&i| self.distinct[i]));
                if let Some(found) = self.try_points(&subset, true) {
                    return GroupOutcome::Revealed(found);
                }
                if !next_combination(&mut idx, n) {
                    break;
                }
            }
        }

        let reason = if self.key_worked {
            GroupSkip::InconsistentGroup
        } else {
            GroupSkip::ShareFailure
        };
        GroupOutcome::Suppressed { reason, size }
    }

    /// Candidate through exactly `threshold` points.
    ///
    /// With `own_only`, the key is first checked against the points' own
    /// ciphertexts. That is enough during exhaustive search: a revealable
    /// group always has a clean subset containing a valid ciphertext.
    fn try_points(&mut self, points: &[Point<F>], own_only: bool) -> Option<RevealedGroup> {
        let shares: Vec<Share<F>> = points.iter().map(|p| p.share).collect();
        let secret = lagrange_at_zero(&shares)?;
        let members: Vec<usize> = points.iter().map(|p| p.member).collect();
        self.try_candidate(secret, own_only.then_some(&members[..]), || {
            interpolate(&shares.iter().map(|s| (s.x, s.y)).collect::<Vec<_>>())
        })
    }

    fn try_candidate(
        &mut self,
        secret: F,
        probe: Option<&[usize]>,
        polynomial: impl FnOnce() -> Option<Poly<F>>,
    ) -> Option<RevealedGroup> {
        let seed = field_to_seed(&secret)?;
        if self.rejected.contains(&seed) {
            return None;
        }
        let key = derive_key(&seed);
        let opens = |i: &usize| open(&key, &self.messages[*i].ciphertext).is_ok();
        let decrypts = match probe {
            Some(members) => members.iter().any(opens),
            None => (0..self.messages.len()).any(|i| opens(&i)),
        };
        let found = if decrypts {
            polynomial().and_then(|poly| self.tally(&poly, &key))
        } else {
            None
        };
        if found.is_none() {
            self.rejected.insert(seed);
        }
        found
    }

    /// Checks every member against the candidate and applies the plurality rule.
    fn tally(&mut self, poly: &Poly<F>, key: &AeadKey) -> Option<RevealedGroup> {
        self.key_worked = true;
        let k = self.config.threshold;
        let verdicts: Vec<Verdict> = self
            .messages
            .iter()
            .zip(&self.shares)
            .map(|(m, share)| {
                let Some(share) = share else {
                    return Verdict::Skip(MessageSkip::WrongField);
                };
                if poly.eval(share.x) != share.y {
                    return Verdict::Skip(MessageSkip::ShareInconsistent);
                }
                match open_payload(key, &m.ciphertext) {
                    Ok((x, aux)) => Verdict::Valid { x, aux },
                    Err(Error::DecryptionFailed) => Verdict::Skip(MessageSkip::DecryptionFailed),
                    Err(_) => Verdict::Skip(MessageSkip::MalformedPlaintext),
                }
            })
            .collect();

        let mut support: BTreeMap<&[u8], usize> = BTreeMap::new();
        for v in &verdicts {
            if let Verdict::Valid { x, .. } = v {
                *support.entry(x.as_slice()).or_default() += 1;
            }
        }
        // strict comparison keeps the first, i.e. smallest, x among equals
        let (winner, count) = support
            .iter()
            .fold(None::<(&[u8], usize)>, |best, (&x, &c)| match best {
                Some((_, bc)) if bc >= c => best,
                _ => Some((x, c)),
            })?;
        if count < k {
            return None;
        }
        let winner = winner.to_vec();

        let mut aux_list = Vec::with_capacity(count);
        let mut skipped = Vec::new();
        for (i, v) in verdicts.into_iter().enumerate() {
            match v {
                Verdict::Valid { x, aux } if x == winner => aux_list.push(aux),
                Verdict::Valid { .. } => skipped.push((i, MessageSkip::MeasurementMismatch)),
                Verdict::Skip(reason) => skipped.push((i, reason)),
            }
        }
        aux_list.sort();
        Some(RevealedGroup {
            x: winner,
            aux_list,
            count,
            skipped,
        })
    }
}

/// `C(n, k) <= limit`, without overflow.
fn binomial_at_most(n: usize, k: usize, limit: u64) -> bool {
    if k > n {
        return false;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > limit as u128 {
            return false;
        }
    }
    true
}

/// Advances `idx` to the next `k`-combination of `0..n` in lexicographic order.
fn next_combination(idx: &mut [usize], n: usize) -> bool {
    let k = idx.len();
    let Some(pos) = (0..k).rev().find(|&i| idx[i] < n - k + i) else {
        return false;
    };
    idx[pos] += 1;
    for i in pos + 1..k {
        idx[i] = idx[i - 1] + 1;
    }
    true
}
