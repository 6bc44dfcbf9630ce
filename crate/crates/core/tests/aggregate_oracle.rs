//! End-to-end aggregation against a plaintext counting oracle.

use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use star_core::aggregate::{aggregate, AggregationConfig, GroupSkip};
use star_core::field::{FieldId, Fp129, Fp255, PrimeField};
use star_core::message::{
    build_message, derive_key, derive_randomness_lite, open_payload, split_randomness, Hardening, MessageTemplate,
    PayloadPolicy, StarMessage,
};
use star_core::sharing::{AnyShare, Share};

fn template(x: &[u8], k: usize, policy: &PayloadPolicy, field: FieldId) -> MessageTemplate {
    let r = split_randomness(&derive_randomness_lite(x, &Hardening::Fast).unwrap()).unwrap();
    MessageTemplate::new(x, &r, k, policy, field, 0).unwrap()
}

fn oracle(xs: &[Vec<u8>], k: usize) -> BTreeMap<Vec<u8>, usize> {
    let mut counts: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
    for x in xs {
        *counts.entry(x.clone()).or_default() += 1;
    }
    counts.retain(|_, c| *c >= k);
    counts
}

fn counts(report: &star_core::aggregate::OutputReport) -> BTreeMap<Vec<u8>, usize> {
    report.revealed.iter().map(|(x, g)| (x.clone(), g.count)).collect()
}

fn campaign(seed: u64, n: usize, distinct: u32, k: usize, field: FieldId) -> (Vec<Vec<u8>>, Vec<StarMessage>) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let policy = PayloadPolicy::new(8, 4);
    let mut templates = BTreeMap::new();
    let mut xs = Vec::with_capacity(n);
    let mut msgs = Vec::with_capacity(n);
    for _ in 0..n {
        // skewed: low values are much more common
        let v = (rng.gen::<f64>().powi(3) * distinct as f64) as u32;
        let x = v.to_be_bytes().to_vec();
        let t = templates
            .entry(x.clone())
            .or_insert_with(|| template(&x, k, &policy, field));
        msgs.push(t.build(&rng.gen::<[u8; 4]>(), &mut rng));
        xs.push(x);
    }
    (xs, msgs)
}

#[test]
fn skewed_campaigns_match_oracle() {
    for (seed, k, field) in [(1, 2, FieldId::F129), (2, 10, FieldId::F255), (3, 5, FieldId::F129)] {
        let (xs, msgs) = campaign(seed, 2000, 300, k, field);
        let report = aggregate(&msgs, &AggregationConfig::new(k, field, 0)).unwrap();
        assert_eq!(counts(&report), oracle(&xs, k));
        assert_eq!(report.revealed_message_count() + report.suppressed_message_count, msgs.len() as u64);
        assert!(report.revealed.values().all(|g| g.count >= k && g.skipped.is_empty()));
    }
}

#[test]
fn threshold_one_reveals_everything() {
    let (xs, msgs) = campaign(9, 300, 50, 1, FieldId::F129);
    let report = aggregate(&msgs, &AggregationConfig::new(1, FieldId::F129, 0)).unwrap();
    assert_eq!(counts(&report), oracle(&xs, 1));
    assert_eq!(report.suppressed_group_count, 0);
}

#[test]
fn aux_values_are_returned_with_their_measurement() {
    let mut rng = ChaCha20Rng::seed_from_u64(10);
    let policy = PayloadPolicy::new(32, 3);
    let t = template(b"page", 3, &policy, FieldId::F129);
    let msgs: Vec<_> = [b"abc", b"de\0", b"fgh"].iter().map(|a| t.build(*a, &mut rng)).collect();
    let report = aggregate(&msgs, &AggregationConfig::new(3, FieldId::F129, 0)).unwrap();
    let mut aux = report.revealed[&b"page".to_vec()].aux_list.clone();
    aux.sort();
    assert_eq!(aux, vec![b"abc".to_vec(), b"de\0".to_vec(), b"fgh".to_vec()]);
}

#[test]
fn wrong_field_group_is_suppressed() {
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    let t = template(b"f", 2, &PayloadPolicy::default(), FieldId::F255);
    let msgs: Vec<_> = (0..4).map(|_| t.build(b"", &mut rng)).collect();
    let cfg = AggregationConfig::new(2, FieldId::F129, 0).verbose(true);
    let report = aggregate(&msgs, &cfg).unwrap();
    assert!(report.revealed.is_empty());
    assert_eq!(report.suppressed_by_reason[&GroupSkip::ShareFailure], 1);
}

fn random_share(field: FieldId, rng: &mut ChaCha20Rng) -> AnyShare {
    match field {
        FieldId::F129 => AnyShare::F129(Share { x: Fp129::random_nonzero(rng), y: Fp129::random(rng) }),
        FieldId::F255 => AnyShare::F255(Share { x: Fp255::random_nonzero(rng), y: Fp255::random(rng) }),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn report_matches_oracle_and_ignores_order(seed in any::<u64>(), k in 1usize..6, n in 1usize..80) {
        let (xs, mut msgs) = campaign(seed, n, 12, k, FieldId::F129);
        let cfg = AggregationConfig::new(k, FieldId::F129, 0);
        let report = aggregate(&msgs, &cfg).unwrap();
        prop_assert_eq!(counts(&report), oracle(&xs, k));
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 1);
        msgs.shuffle(&mut rng);
        prop_assert_eq!(aggregate(&msgs, &cfg).unwrap(), report);
    }

    #[test]
    fn minority_of_bad_messages_changes_nothing(seed in any::<u64>(), k in 2usize..7) {
        let (xs, mut msgs) = campaign(seed, 150, 10, k, FieldId::F129);
        let honest = oracle(&xs, k);
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 2);
        let tags: Vec<[u8; 32]> = msgs.iter().map(|m| m.tag).collect::<std::collections::BTreeSet<_>>().into_iter().collect();
        for tag in tags {
            let donor = msgs.iter().find(|m| m.tag == tag).unwrap().clone();
            for _ in 0..rng.gen_range(0..k) {
                let mut bad = donor.clone();
                match rng.gen_range(0..3) {
                    0 => bad.share = random_share(FieldId::F129, &mut rng),
                    1 => {
                        let i = rng.gen_range(0..bad.ciphertext.len());
                        bad.ciphertext[i] ^= 0x80;
                    }
                    _ => rng.fill_bytes(&mut bad.tag),
                }
                msgs.push(bad);
            }
        }
        let report = aggregate(&msgs, &AggregationConfig::new(k, FieldId::F129, 0)).unwrap();
        prop_assert_eq!(counts(&report), honest);
    }

    #[test]
    fn message_bytes_round_trip(x in prop::collection::vec(any::<u8>(), 1..33), aux in prop::collection::vec(any::<u8>(), 0..40),
                                k in 1usize..8, seed in any::<u64>(), wide in any::<bool>()) {
        let field = if wide { FieldId::F255 } else { FieldId::F129 };
        let policy = PayloadPolicy::new(32, 16);
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let r = split_randomness(&derive_randomness_lite(&x, &Hardening::Fast).unwrap()).unwrap();
        let m = build_message(&x, &aux, &r, k, &policy, field, 7, &mut rng).unwrap();
        let bytes = m.to_bytes();
        prop_assert_eq!(bytes.len(), policy.message_len(field));
        prop_assert_eq!(&StarMessage::from_bytes(&bytes).unwrap(), &m);
        let (got_x, got_aux) = open_payload(&derive_key(&r.shared_seed()), &m.ciphertext).unwrap();
        prop_assert_eq!(got_x, x);
        prop_assert_eq!(got_aux, policy.fit_aux(&aux));
    }

    #[test]
    fn message_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = StarMessage::from_bytes(&bytes);
    }
}
