//! In-process catalog search server backed by a JSON fixture.
//!
//! ```json
//! {"tracks": [{"id": "t1", "artist": "A", "title": "T",
//!              "preview_url": "http://…/t1.mp3", "artwork_url": "http://…/t1.jpg",
//!              "preview_seconds": 30, "markets": ["US", "GB"]}]}
//! ```
//!
//! Search matches artist and title case-insensitively, the way a real search
//! engine is loose, so that exactness is left to the client. A track outside
//! the requested market is returned with a null `preview_url`.

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::StatusCode;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use super::wire::{SearchHit, SearchResponse};
use super::PREVIEW_SECONDS;
use crate::dataset::TrackKey;
use crate::net::ServerHandle;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CatalogTrack {
    pub id: String,
    pub artist: String,
    pub title: String,
    pub preview_url: Option<String>,
    pub artwork_url: String,
    #[serde(default = "default_seconds")]
    pub preview_seconds: u32,
    /// Markets with a playable preview; `None` means every market.
    #[serde(default)]
    pub markets: Option<Vec<String>>,
}

fn default_seconds() -> u32 {
    PREVIEW_SECONDS
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MockCatalog {
    pub tracks: Vec<CatalogTrack>,
}

impl MockCatalog {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?).map_err(std::io::Error::other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable catalog")
    }

    /// Adds a track with a preview available in every market.
    pub fn add(&mut self, artist: &str, title: &str) -> &mut CatalogTrack {
        let id = format!("trk{}", self.tracks.len());
        self.tracks.push(CatalogTrack {
            preview_url: Some(format!("https://previews.example/{id}.mp3")),
            artwork_url: format!("https://art.example/{id}.jpg"),
            id,
            artist: artist.to_string(),
            title: title.to_string(),
            preview_seconds: PREVIEW_SECONDS,
            markets: None,
        });
        self.tracks.last_mut().unwrap()
    }

    /// A catalog covering `tracks`, skipping every track for which `missing`
    /// returns true.
    pub fn covering<'a, I, F>(tracks: I, mut missing: F) -> Self
    where
        I: IntoIterator<Item = &'a TrackKey>,
        F: FnMut(usize, &TrackKey) -> bool,
    {
        let mut catalog = Self::default();
        for (i, t) in tracks.into_iter().enumerate() {
            if !missing(i, t) {
                catalog.add(&t.artist_name, &t.track_title);
            }
        }
        catalog
    }
}

#[derive(Debug, Deserialize)]
struct SearchQuery {
    artist: String,
    title: String,
    market: String,
}

struct CatalogState {
    catalog: MockCatalog,
    unavailable: AtomicBool,
    searches: AtomicUsize,
}

async fn search(State(s): State<Arc<CatalogState>>, Query(q): Query<SearchQuery>) -> Response {
    s.searches.fetch_add(1, Ordering::SeqCst);
    if s.unavailable.load(Ordering::SeqCst) {
        return StatusCode::SERVICE_UNAVAILABLE.into_response();
    }
    let want = TrackKey::new(&q.artist, &q.title);
    let results = s
        .catalog
        .tracks
        .iter()
        .filter(|t| {
            let key = TrackKey::new(&t.artist, &t.title);
            key.artist_name.to_lowercase() == want.artist_name.to_lowercase()
                && key.track_title.to_lowercase() == want.track_title.to_lowercase()
        })
        .map(|t| {
            let in_market = t.markets.as_ref().is_none_or(|m| m.contains(&q.market));
            SearchHit {
                id: t.id.clone(),
                artist: t.artist.clone(),
                title: t.title.clone(),
                preview_url: if in_market { t.preview_url.clone() } else { None },
                artwork_url: t.artwork_url.clone(),
                preview_seconds: t.preview_seconds,
            }
        })
        .collect();
    Json(SearchResponse { results }).into_response()
}

async fn embed(UrlPath(id): UrlPath<String>) -> Html<String> {
    Html(format!(
        "<!doctype html><audio controls src=\"https://previews.example/{id}.mp3\"></audio>"
    ))
}

/// A running mock catalog. Stops when dropped.
pub struct MockCatalogServer {
    handle: ServerHandle,
    state: Arc<CatalogState>,
}

impl MockCatalogServer {
    pub async fn start(catalog: MockCatalog) -> std::io::Result<Self> {
        let state = Arc::new(CatalogState {
            catalog,
            unavailable: AtomicBool::new(false),
            searches: AtomicUsize::new(0),
        });
        let router = Router::new()
            .route("/search", get(search))
            .route("/embed/track/{id}", get(embed))
            .with_state(state.clone());
        let handle = ServerHandle::spawn_local(router).await?;
        Ok(Self { handle, state })
    }

    pub fn base_url(&self) -> String {
        self.handle.base_url()
    }

    /// Makes every subsequent search fail with HTTP 503.
    pub fn set_unavailable(&self, unavailable: bool) {
        self.state.unavailable.store(unavailable, Ordering::SeqCst);
    }

    pub fn search_count(&self) -> usize {
        self.state.searches.load(Ordering::SeqCst)
    }
}
