//! Resolves recommended tracks to playable 30-second previews through a
//! catalog search API.
//!
//! Matching is exact on artist and title (after NFC normalization and
//! trimming, case-sensitive unless configured otherwise). Tracks without a
//! usable preview in the participant's market are discarded and the next
//! ranked track takes their place.
//!
//! Wire protocol:
//!
//! ```text
//! GET {base}/search?artist=A&title=T&market=M
//!     → {"results": [{"id", "artist", "title", "preview_url": str|null,
//!                     "artwork_url", "preview_seconds"}]}
//! ```

pub mod mock;
mod resolver;

use serde::{Deserialize, Serialize};

use crate::dataset::TrackKey;

pub use resolver::PreviewResolver;

/// Length of every accepted preview clip, in seconds.
pub const PREVIEW_SECONDS: u32 = 30;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PreviewError {
    #[error("catalog unavailable: {0}")]
    CatalogUnavailable(String),
    #[error("invalid query: {0}")]
    InvalidQuery(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct PreviewConfig {
    pub base_url: String,
    /// Market used when the participant's market is not supported.
    pub default_market: String,
    /// Markets the catalog serves; `None` accepts any market.
    pub supported_markets: Option<Vec<String>>,
    /// Compare artist and title case-insensitively. Off by default.
    pub case_insensitive_match: bool,
    pub min_request_interval_ms: u64,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
    pub timeout_ms: u64,
}

impl Default for PreviewConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8091".into(),
            default_market: "US".into(),
            supported_markets: None,
            case_insensitive_match: false,
            min_request_interval_ms: 0,
            max_retries: 2,
            retry_base_delay_ms: 200,
            timeout_ms: 15_000,
        }
    }
}

impl PreviewConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            ..Self::default()
        }
    }
}

fn normalize_market(market: &str) -> Result<String, PreviewError> {
    let m = market.trim();
    if m.len() == 2 && m.chars().all(|c| c.is_ascii_alphabetic()) {
        Ok(m.to_ascii_uppercase())
    } else {
        Err(PreviewError::InvalidQuery(format!(
            "market {market:?} is not a 2-letter code"
        )))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewQuery {
    pub artist_name: String,
    pub track_title: String,
    /// Upper-case ISO 3166-1 alpha-2 code.
    pub market: String,
}

impl PreviewQuery {
    pub fn new(track: &TrackKey, market: &str) -> Result<Self, PreviewError> {
        let key = TrackKey::new(&track.artist_name, &track.track_title);
        if key.artist_name.is_empty() || key.track_title.is_empty() {
            return Err(PreviewError::InvalidQuery("empty artist or title".into()));
        }
        Ok(Self {
            artist_name: key.artist_name,
            track_title: key.track_title,
            market: normalize_market(market)?,
        })
    }

    pub fn track_key(&self) -> TrackKey {
        TrackKey::new(&self.artist_name, &self.track_title)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreviewResult {
    pub catalog_track_id: String,
    pub preview_url: String,
    pub artwork_url: String,
    /// Always [`PREVIEW_SECONDS`].
    pub preview_duration: u32,
    /// Embed reference handed to the participant UI.
    pub embed_markup_ref: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscardReason {
    NoResults,
    NoExactMatch,
    NoPreviewInMarket,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Resolution {
    Resolved(PreviewResult),
    Discarded(DiscardReason),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationItem {
    /// 0-based position in the ranked source list.
    pub source_rank: usize,
    pub track: TrackKey,
    pub preview: PreviewResult,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedItem {
    pub source_rank: usize,
    pub track: TrackKey,
    pub reason: DiscardReason,
}

/// Preview-annotated tracks in source order. Never contains a discarded track.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresentationList {
    pub items: Vec<PresentationItem>,
    pub requested_n: usize,
    pub discarded_count: usize,
    pub discarded: Vec<DiscardedItem>,
    /// Set when the source list ran out before `requested_n` items resolved.
    pub shortfall: bool,
}

impl PresentationList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Number of source items examined.
    pub fn consumed(&self) -> usize {
        self.items.len() + self.discarded_count
    }
}

pub mod wire {
    use serde::{Deserialize, Serialize};

    #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
    pub struct SearchHit {
        pub id: String,
        pub artist: String,
        pub title: String,
        pub preview_url: Option<String>,
        pub artwork_url: String,
        pub preview_seconds: u32,
    }

    #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
    pub struct SearchResponse {
        pub results: Vec<SearchHit>,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn query_normalizes_market() {
        let q = PreviewQuery::new(&TrackKey::new(" A ", "T"), "gb").unwrap();
        assert_eq!(q.market, "GB");
        assert_eq!(q.artist_name, "A");
        assert!(PreviewQuery::new(&TrackKey::new("A", "T"), "GBR").is_err());
        assert!(PreviewQuery::new(&TrackKey::new("A", " "), "GB").is_err());
    }
}
