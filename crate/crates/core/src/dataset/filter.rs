use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Dataset, TrackKey};

/// Before/after statistics of a track-frequency filter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub min_le: u64,
    pub tracks_before: usize,
    pub tracks_after: usize,
    pub events_before: usize,
    pub events_after: usize,
    pub track_reduction_pct: f64,
    pub event_reduction_pct: f64,
}

fn reduction_pct(before: usize, after: usize) -> f64 {
    if before == 0 {
        0.0
    } else {
        100.0 * (1.0 - after as f64 / before as f64)
    }
}

impl FilterReport {
    pub fn new(
        min_le: u64,
        tracks_before: usize,
        tracks_after: usize,
        events_before: usize,
        events_after: usize,
    ) -> Self {
        Self {
            min_le,
            tracks_before,
            tracks_after,
            events_before,
            events_after,
            track_reduction_pct: reduction_pct(tracks_before, tracks_after),
            event_reduction_pct: reduction_pct(events_before, events_after),
        }
    }
}

/// Removes every track with `min_le` or fewer events. Users left without
/// events disappear from the user index.
pub fn filter_min_interactions(ds: &Dataset, min_le: u64) -> (Dataset, FilterReport) {
    let mut counts: HashMap<TrackKey, u64> = HashMap::with_capacity(ds.n_tracks());
    for e in ds.events() {
        *counts.entry(e.track_key()).or_default() += 1;
    }
    let filtered = Dataset::from_events(ds.events().iter().filter(|e| counts[&e.track_key()] > min_le).cloned());
    let report = FilterReport::new(
        min_le,
        ds.n_tracks(),
        filtered.n_tracks(),
        ds.n_events(),
        filtered.n_events(),
    );
    (filtered, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::ListeningEvent;

    fn plays(track: &str, n: usize) -> Vec<ListeningEvent> {
        (0..n)
            .map(|i| ListeningEvent::new(&format!("u{i}"), "A", track, i as u64).unwrap())
            .collect()
    }

    #[test]
    fn boundary_count_is_retained() {
        let mut events = plays("t1", 4);
        events.extend(plays("t2", 4));
        let ds = Dataset::from_events(events);
        let (out, report) = filter_min_interactions(&ds, 3);
        assert_eq!(out, ds);
        assert_eq!(report.track_reduction_pct, 0.0);
        assert_eq!(report.event_reduction_pct, 0.0);
    }

    #[test]
    fn exactly_ten_plays_removed_at_ten() {
        let ds = Dataset::from_events(plays("t", 10));
        let (out, report) = filter_min_interactions(&ds, 10);
        assert!(out.is_empty());
        assert_eq!(out.n_users(), 0);
        assert_eq!(report.track_reduction_pct, 100.0);
        assert_eq!(report.event_reduction_pct, 100.0);
    }

    #[test]
    fn empty_dataset_reports_zero() {
        let (out, report) = filter_min_interactions(&Dataset::default(), 10);
        assert!(out.is_empty());
        assert_eq!(report.track_reduction_pct, 0.0);
    }

    #[test]
    fn emptied_users_are_dropped() {
        let mut events = plays("popular", 3);
        events.push(ListeningEvent::new("loner", "B", "rare", 1).unwrap());
        let ds = Dataset::from_events(events);
        let (out, report) = filter_min_interactions(&ds, 1);
        assert_eq!(out.user_index("loner"), None);
        assert_eq!(out.n_users(), 3);
        assert_eq!((report.tracks_before, report.tracks_after), (2, 1));
    }
}
