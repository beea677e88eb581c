//! Property tests for the dataset pipeline, checked against brute-force recounts.

use std::collections::{BTreeMap, BTreeSet};

use liverec::dataset::{
    build_interaction_matrix, filter_min_interactions, ingest_events, split_holdout, top_up_merge, write_events,
    Dataset, ListeningEvent,
};
use proptest::prelude::*;

type Row = (String, String, String, u64);

fn event() -> impl Strategy<Value = ListeningEvent> {
    (0u8..6, 0u8..4, 0u8..8, 0u64..20).prop_map(|(u, a, t, ts)| {
        ListeningEvent::new(&format!("u{u}"), &format!("Artist {a}"), &format!("T{t}"), ts).unwrap()
    })
}

fn dataset() -> impl Strategy<Value = Dataset> {
    prop::collection::vec(event(), 0..80).prop_map(Dataset::from_events)
}

fn event_set(ds: &Dataset) -> BTreeSet<Row> {
    ds.events()
        .iter()
        .map(|e| {
            (
                e.user_id.clone(),
                e.artist_name.clone(),
                e.track_title.clone(),
                e.timestamp,
            )
        })
        .collect()
}

fn track_counts(ds: &Dataset) -> BTreeMap<(String, String), u64> {
    let mut counts = BTreeMap::new();
    for e in ds.events() {
        *counts
            .entry((e.artist_name.clone(), e.track_title.clone()))
            .or_default() += 1;
    }
    counts
}

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 128,
        failure_persistence: None,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn filter_matches_brute_force(ds in dataset(), min_le in 0u64..6) {
        let (out, report) = filter_min_interactions(&ds, min_le);
        let counts = track_counts(&ds);
        let expected: BTreeSet<Row> = event_set(&ds)
            .into_iter()
            .filter(|(_, a, t, _)| counts[&(a.clone(), t.clone())] > min_le)
            .collect();
        prop_assert_eq!(event_set(&out), expected);
        prop_assert!(track_counts(&out).values().all(|&c| c > min_le));
        prop_assert_eq!(report.events_after, out.n_events());
        prop_assert_eq!(report.tracks_before, counts.len());
        // every surviving user still has an event
        let users: BTreeSet<&str> = out.events().iter().map(|e| e.user_id.as_str()).collect();
        prop_assert_eq!(users.len(), out.n_users());
    }

    #[test]
    fn filter_is_idempotent_and_monotone(ds in dataset(), a in 0u64..5, b in 0u64..5) {
        let (once, _) = filter_min_interactions(&ds, a);
        let (twice, _) = filter_min_interactions(&once, a);
        prop_assert_eq!(&twice, &once);
        let (lo, hi) = (a.min(b), a.max(b));
        let loose = event_set(&filter_min_interactions(&ds, lo).0);
        let strict = event_set(&filter_min_interactions(&ds, hi).0);
        prop_assert!(strict.is_subset(&loose));
    }

    #[test]
    fn matrix_sums_equal_event_counts(ds in dataset()) {
        let counts = build_interaction_matrix(&ds, false);
        let binary = build_interaction_matrix(&ds, true);
        prop_assert_eq!(counts.total(), ds.n_events() as u64);
        let pairs: BTreeSet<(&str, String, String)> = ds
            .events()
            .iter()
            .map(|e| (e.user_id.as_str(), e.artist_name.clone(), e.track_title.clone()))
            .collect();
        prop_assert_eq!(binary.total(), pairs.len() as u64);
        prop_assert_eq!(binary.nnz(), counts.nnz());
        for (u, row) in counts.rows().enumerate() {
            let user = ds.user_id(u).unwrap();
            for &(i, c) in row {
                let key = ds.track(i).unwrap();
                let n = ds
                    .events()
                    .iter()
                    .filter(|e| e.user_id == user && e.track_key() == *key)
                    .count();
                prop_assert_eq!(c as usize, n);
            }
        }
    }

    #[test]
    fn merge_is_commutative_and_associative(
        a in dataset(), b in dataset(), c in dataset(), seed in any::<u64>()
    ) {
        prop_assert_eq!(top_up_merge(&a, &b, seed), top_up_merge(&b, &a, seed));
        let left = top_up_merge(&top_up_merge(&a, &b, 0), &c, seed);
        let right = top_up_merge(&a, &top_up_merge(&b, &c, 1), seed);
        prop_assert_eq!(&left, &right);
        let union: BTreeSet<Row> = event_set(&a).into_iter().chain(event_set(&b)).chain(event_set(&c)).collect();
        prop_assert_eq!(event_set(&left), union);
    }

    #[test]
    fn ingest_counts_match_brute_force(
        events in prop::collection::vec(event(), 0..60),
        junk in prop::collection::vec(0usize..60, 0..10),
    ) {
        let mut buf = Vec::new();
        write_events(&mut buf, &events).unwrap();
        let mut lines: Vec<String> = String::from_utf8(buf).unwrap().lines().map(String::from).collect();
        let n_junk = junk.len().min(lines.len() / 2);
        for &at in &junk[..n_junk] {
            lines.insert(at.min(lines.len()), "not an event".into());
        }
        let (ds, report) = ingest_events(&lines).unwrap();
        let distinct: std::collections::HashSet<&ListeningEvent> = events.iter().collect();
        prop_assert_eq!(ds.n_events(), distinct.len());
        prop_assert_eq!(report.records, events.len() + n_junk);
        prop_assert_eq!(report.malformed.len(), n_junk);
        prop_assert_eq!(report.duplicates, events.len() - distinct.len());
        for m in &report.malformed {
            prop_assert_eq!(lines[m.line - 1].as_str(), "not an event");
        }
    }

    #[test]
    fn split_partitions_users_and_items(ds in dataset(), vf in 0.0f64..1.0, hf in 0.0f64..1.0, seed in any::<u64>()) {
        let m = build_interaction_matrix(&ds, true);
        let split = split_holdout(&m, vf, hf, seed).unwrap();
        let val: BTreeSet<usize> = split.validation_users.iter().map(|v| v.user).collect();
        prop_assert!(split.train_users.iter().all(|u| !val.contains(u)));
        prop_assert_eq!(split.train_users.len() + val.len() + split.skipped, m.n_users());
        for (r, &u) in split.train_users.iter().enumerate() {
            prop_assert_eq!(split.train.row(r), m.row(u));
        }
        for v in &split.validation_users {
            let mut all: Vec<usize> = v.input.iter().map(|&(i, _)| i).chain(v.held_out.iter().copied()).collect();
            all.sort_unstable();
            let original: Vec<usize> = m.row(v.user).iter().map(|&(i, _)| i).collect();
            prop_assert_eq!(all, original);
            prop_assert!(!v.input.is_empty() && !v.held_out.is_empty());
        }
        prop_assert_eq!(&split, &split_holdout(&m, vf, hf, seed).unwrap());
    }
}
