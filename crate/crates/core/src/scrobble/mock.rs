//! Deterministic in-process scrobble server backed by a JSON fixture.
//!
//! Fixture shape:
//!
//! ```json
//! {"users": {"alice": {"public": true,
//!                      "events": [{"artist": "A", "title": "T", "timestamp": 1}],
//!                      "friends": ["bob"]}}}
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::{Deserialize, Serialize};

use super::wire::{EventsPage, FriendsPage, UserInfo, WireEvent};
use crate::dataset::{Dataset, ListeningEvent};
use crate::net::ServerHandle;
use crate::synth::track_names;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MockUser {
    #[serde(default = "default_public")]
    pub public: bool,
    #[serde(default)]
    pub events: Vec<WireEvent>,
    #[serde(default)]
    pub friends: Vec<String>,
}

fn default_public() -> bool {
    true
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MockWorld {
    pub users: BTreeMap<String, MockUser>,
}

impl MockWorld {
    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        serde_json::from_str(text)
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text).map_err(std::io::Error::other)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable world")
    }

    /// Every public user's events as one dataset, users in name order.
    /// Events that fail validation are skipped.
    pub fn to_dataset(&self) -> Dataset {
        Dataset::from_events(self.users.iter().filter(|(_, u)| u.public).flat_map(|(name, u)| {
            u.events
                .iter()
                .filter_map(move |e| ListeningEvent::new(name, &e.artist, &e.title, e.timestamp).ok())
        }))
    }

    pub fn add_user(&mut self, name: &str, events: Vec<WireEvent>, friends: &[&str]) -> &mut Self {
        self.users.insert(
            name.to_string(),
            MockUser {
                public: true,
                events,
                friends: friends.iter().map(|s| s.to_string()).collect(),
            },
        );
        self
    }

    /// A seeded world of `n_users` public users named `user0..`, each with a
    /// Zipf-distributed history over `n_tracks` synthetic tracks (lengths
    /// uniform in `events_per_user`) and about `mean_friends` friends.
    pub fn synthetic(
        n_users: usize,
        n_tracks: usize,
        events_per_user: std::ops::Range<usize>,
        mean_friends: usize,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zipf = Zipf::new(n_tracks as f64, 1.1).expect("valid zipf");
        let mut users = BTreeMap::new();
        for u in 0..n_users {
            let len = rng.random_range(events_per_user.clone());
            let mut ts = 1_600_000_000u64 + rng.random_range(0..1_000_000);
            let events = (0..len)
                .map(|_| {
                    let (artist, title) = track_names(zipf.sample(&mut rng) as usize - 1);
                    ts += rng.random_range(1..600);
                    WireEvent {
                        artist,
                        title,
                        timestamp: ts,
                    }
                })
                .collect();
            let friends = (0..mean_friends)
                .map(|_| format!("user{}", rng.random_range(0..n_users)))
                .filter(|f| *f != format!("user{u}"))
                .collect::<std::collections::BTreeSet<_>>()
                .into_iter()
                .collect();
            users.insert(
                format!("user{u}"),
                MockUser {
                    public: true,
                    events,
                    friends,
                },
            );
        }
        Self { users }
    }
}

#[derive(Clone, Debug)]
pub struct MockOptions {
    /// Delay applied to every events or friends page.
    pub page_latency: Duration,
    pub friends_page_size: usize,
    /// The first this many requests get HTTP 429.
    pub fail_first_requests: usize,
    /// Events pages with this number return an invalid body.
    pub corrupt_events_page: Option<u32>,
}

impl Default for MockOptions {
    fn default() -> Self {
        Self {
            page_latency: Duration::ZERO,
            friends_page_size: 50,
            fail_first_requests: 0,
            corrupt_events_page: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RequestRecord {
    pub at: Instant,
    pub path: String,
    pub query: Option<String>,
}

struct MockState {
    world: MockWorld,
    options: MockOptions,
    failures_left: AtomicUsize,
    log: Mutex<Vec<RequestRecord>>,
}

#[derive(Debug, Deserialize)]
struct PageQuery {
    page: Option<u32>,
    per_page: Option<u32>,
}

fn pages(total: usize, per_page: usize) -> u32 {
    total.div_ceil(per_page.max(1)) as u32
}

impl MockState {
    /// Records the request and decides whether it should be throttled.
    fn admit(&self, uri: &Uri) -> Option<Response> {
        self.log.lock().unwrap().push(RequestRecord {
            at: Instant::now(),
            path: uri.path().to_string(),
            query: uri.query().map(str::to_string),
        });
        let throttled = self
            .failures_left
            .fetch_update(Ordering::SeqCst, Ordering::SeqCst, |n| n.checked_sub(1))
            .is_ok();
        throttled.then(|| StatusCode::TOO_MANY_REQUESTS.into_response())
    }

    #[allow(clippy::result_large_err)]
    fn readable(&self, name: &str) -> Result<&MockUser, Response> {
        match self.world.users.get(name) {
            None => Err(StatusCode::NOT_FOUND.into_response()),
            Some(u) if !u.public => Err(StatusCode::FORBIDDEN.into_response()),
            Some(u) => Ok(u),
        }
    }
}

async fn user_info(State(s): State<Arc<MockState>>, uri: Uri, UrlPath(name): UrlPath<String>) -> Response {
    if let Some(r) = s.admit(&uri) {
        return r;
    }
    match s.world.users.get(&name) {
        None => StatusCode::NOT_FOUND.into_response(),
        Some(u) => Json(UserInfo {
            event_count: u.events.len() as u64,
            public: u.public,
        })
        .into_response(),
    }
}

async fn user_events(
    State(s): State<Arc<MockState>>,
    uri: Uri,
    UrlPath(name): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> Response {
    if let Some(r) = s.admit(&uri) {
        return r;
    }
    tokio::time::sleep(s.options.page_latency).await;
    let user = match s.readable(&name) {
        Ok(u) => u,
        Err(r) => return r,
    };
    let page = q.page.unwrap_or(1).max(1);
    if s.options.corrupt_events_page == Some(page) {
        return (StatusCode::OK, "{\"total\": \"oops\"").into_response();
    }
    let per_page = q.per_page.unwrap_or(50).clamp(1, 500) as usize;
    let start = (page as usize - 1) * per_page;
    let events = user.events.iter().skip(start).take(per_page).cloned().collect();
    Json(EventsPage {
        total: user.events.len() as u64,
        total_pages: pages(user.events.len(), per_page),
        page,
        events,
    })
    .into_response()
}

async fn user_friends(
    State(s): State<Arc<MockState>>,
    uri: Uri,
    UrlPath(name): UrlPath<String>,
    Query(q): Query<PageQuery>,
) -> Response {
    if let Some(r) = s.admit(&uri) {
        return r;
    }
    tokio::time::sleep(s.options.page_latency).await;
    let user = match s.readable(&name) {
        Ok(u) => u,
        Err(r) => return r,
    };
    let page = q.page.unwrap_or(1).max(1);
    let size = s.options.friends_page_size;
    let users = user
        .friends
        .iter()
        .skip((page as usize - 1) * size)
        .take(size)
        .cloned()
        .collect();
    Json(FriendsPage {
        total: user.friends.len() as u64,
        total_pages: pages(user.friends.len(), size),
        page,
        users,
    })
    .into_response()
}

/// A running mock scrobble server. Stops when dropped.
pub struct MockScrobbleServer {
    handle: ServerHandle,
    state: Arc<MockState>,
}

impl MockScrobbleServer {
    pub fn router(world: MockWorld, options: MockOptions) -> Router {
        Self::router_with_state(Self::state(world, options))
    }

    fn state(world: MockWorld, options: MockOptions) -> Arc<MockState> {
        Arc::new(MockState {
            world,
            failures_left: AtomicUsize::new(options.fail_first_requests),
            options,
            log: Mutex::new(Vec::new()),
        })
    }

    fn router_with_state(state: Arc<MockState>) -> Router {
        Router::new()
            .route("/users/{name}", get(user_info))
            .route("/users/{name}/events", get(user_events))
            .route("/users/{name}/friends", get(user_friends))
            .with_state(state)
    }

    pub async fn start(world: MockWorld, options: MockOptions) -> std::io::Result<Self> {
        let state = Self::state(world, options);
        let handle = ServerHandle::spawn_local(Self::router_with_state(state.clone())).await?;
        Ok(Self { handle, state })
    }

    pub fn base_url(&self) -> String {
        self.handle.base_url()
    }

    pub fn world(&self) -> &MockWorld {
        &self.state.world
    }

    /// Every request received so far, in arrival order.
    pub fn requests(&self) -> Vec<RequestRecord> {
        self.state.log.lock().unwrap().clone()
    }

    pub fn request_count(&self) -> usize {
        self.state.log.lock().unwrap().len()
    }
}
