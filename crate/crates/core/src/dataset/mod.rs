//! Listening-event datasets: ingestion, filtering, interaction matrices,
//! holdout splits and top-up merging.
//!
//! Every type here is immutable once built and every operation is a pure
//! function of its inputs, so datasets can be shared freely across threads.

mod filter;
mod ingest;
mod matrix;
mod merge;
mod split;

use std::collections::HashSet;
use std::fmt;

use indexmap::IndexSet;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use filter::{filter_min_interactions, FilterReport};
pub use ingest::{ingest_events, ingest_reader, parse_event_line, write_events, IngestReport, MalformedRecord};
pub use matrix::{build_interaction_matrix, InteractionMatrix};
pub use merge::top_up_merge;
pub use split::{split_holdout, TrainSplit, ValidationUser};

#[derive(Debug, thiserror::Error)]
pub enum DatasetError {
    #[error("{malformed} of {total} records are malformed (first: {first})")]
    TooManyMalformed {
        malformed: usize,
        total: usize,
        first: MalformedRecord,
    },
    #[error("invalid listening event: {0}")]
    InvalidEvent(String),
    #[error("fraction {name} = {value} is outside [0, 1]")]
    InvalidFraction { name: &'static str, value: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn normalize_name(raw: &str) -> String {
    raw.trim().nfc().collect::<String>().trim().to_string()
}

/// Track identity: artist and title after NFC normalization and trimming.
/// Comparison is case-sensitive.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TrackKey {
    pub artist_name: String,
    pub track_title: String,
}

impl TrackKey {
    pub fn new(artist_name: &str, track_title: &str) -> Self {
        Self {
            artist_name: normalize_name(artist_name),
            track_title: normalize_name(track_title),
        }
    }
}

impl fmt::Display for TrackKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} - {}", self.artist_name, self.track_title)
    }
}

/// One play of a track by a user.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ListeningEvent {
    pub user_id: String,
    pub artist_name: String,
    pub track_title: String,
    /// Unix seconds, UTC.
    pub timestamp: u64,
}

impl ListeningEvent {
    /// Builds an event, normalizing names. Fails when a name is empty after
    /// trimming or the user id is empty.
    pub fn new(user_id: &str, artist_name: &str, track_title: &str, timestamp: u64) -> Result<Self, DatasetError> {
        let artist_name = normalize_name(artist_name);
        let track_title = normalize_name(track_title);
        if user_id.is_empty() {
            return Err(DatasetError::InvalidEvent("empty user id".into()));
        }
        if artist_name.is_empty() {
            return Err(DatasetError::InvalidEvent("empty artist name".into()));
        }
        if track_title.is_empty() {
            return Err(DatasetError::InvalidEvent("empty track title".into()));
        }
        Ok(Self {
            user_id: user_id.to_string(),
            artist_name,
            track_title,
            timestamp,
        })
    }

    pub fn track_key(&self) -> TrackKey {
        TrackKey {
            artist_name: self.artist_name.clone(),
            track_title: self.track_title.clone(),
        }
    }
}

/// A deduplicated collection of listening events with dense user and track
/// indices.
///
/// Index order is the order of first appearance in `events`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    events: Vec<ListeningEvent>,
    users: IndexSet<String>,
    tracks: IndexSet<TrackKey>,
}

impl Dataset {
    /// Builds a dataset from events in the given order, collapsing exact
    /// duplicates (first occurrence wins).
    pub fn from_events<I>(events: I) -> Self
    where
        I: IntoIterator<Item = ListeningEvent>,
    {
        let mut seen = HashSet::new();
        let mut kept = Vec::new();
        let mut users = IndexSet::new();
        let mut tracks = IndexSet::new();
        for event in events {
            if seen.contains(&event) {
                continue;
            }
            seen.insert(event.clone());
            users.insert(event.user_id.clone());
            tracks.insert(event.track_key());
            kept.push(event);
        }
        Self {
            events: kept,
            users,
            tracks,
        }
    }

    pub fn events(&self) -> &[ListeningEvent] {
        &self.events
    }

    pub fn n_events(&self) -> usize {
        self.events.len()
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_tracks(&self) -> usize {
        self.tracks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn user_index(&self, user_id: &str) -> Option<usize> {
        self.users.get_index_of(user_id)
    }

    pub fn track_index(&self, key: &TrackKey) -> Option<usize> {
        self.tracks.get_index_of(key)
    }

    pub fn user_id(&self, index: usize) -> Option<&str> {
        self.users.get_index(index).map(String::as_str)
    }

    pub fn track(&self, index: usize) -> Option<&TrackKey> {
        self.tracks.get_index(index)
    }

    pub fn users(&self) -> impl Iterator<Item = &str> {
        self.users.iter().map(String::as_str)
    }

    pub fn tracks(&self) -> impl Iterator<Item = &TrackKey> {
        self.tracks.iter()
    }

    /// Track keys in index order.
    pub fn track_keys(&self) -> Vec<TrackKey> {
        self.tracks.iter().cloned().collect()
    }
}
