//! Client for a scrobble-service HTTP API: listening histories, friends lists
//! and account probes, with pagination, rate limiting and retries. Includes a
//! seeded social-graph crawler and a deterministic mock server for offline use.
//!
//! The wire protocol is a generic JSON shape:
//!
//! ```text
//! GET {base}/users/{name}/events?page=P&per_page=N
//!     → {"total", "total_pages", "page", "events": [{"artist", "title", "timestamp"}]}
//! GET {base}/users/{name}/friends?page=P
//!     → {"total", "total_pages", "page", "users": [name]}
//! GET {base}/users/{name}  → {"event_count", "public"}
//! ```
//!
//! 404 maps to [`ScrobbleError::UserNotFound`], 403 to
//! [`ScrobbleError::PrivateAccount`] and a persistent 429 to
//! [`ScrobbleError::RateLimited`].

mod client;
mod crawl;
pub mod mock;

use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use client::ScrobbleClient;
pub use crawl::{CrawlPlan, CrawlResult};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScrobbleError {
    #[error("user {0:?} not found")]
    UserNotFound(String),
    #[error("account {0:?} is private")]
    PrivateAccount(String),
    #[error("rate limited after retries")]
    RateLimited,
    #[error("malformed page {page}: {reason}")]
    MalformedPage { page: u32, reason: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ScrobbleApiConfig {
    pub base_url: String,
    pub api_key: Option<String>,
    /// Events requested per page, 1..=500.
    pub page_size: u32,
    pub min_request_interval_ms: u64,
    pub max_retries: u32,
    pub retry_base_delay_ms: u64,
    pub timeout_ms: u64,
}

impl Default for ScrobbleApiConfig {
    fn default() -> Self {
        Self {
            base_url: "http://127.0.0.1:8090".into(),
            api_key: None,
            page_size: 200,
            min_request_interval_ms: 200,
            max_retries: 3,
            retry_base_delay_ms: 250,
            timeout_ms: 30_000,
        }
    }
}

impl ScrobbleApiConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ScrobbleError> {
        if !(1..=500).contains(&self.page_size) {
            return Err(ScrobbleError::InvalidRequest(format!(
                "page_size {} outside 1..=500",
                self.page_size
            )));
        }
        reqwest::Url::parse(&self.base_url).map_err(|e| ScrobbleError::InvalidRequest(format!("base_url: {e}")))?;
        Ok(())
    }

    pub fn min_request_interval(&self) -> Duration {
        Duration::from_millis(self.min_request_interval_ms)
    }
}

/// Outcome of an account-size probe. `eligible` holds exactly when
/// `event_count >= threshold` and the account is readable.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EligibilityResult {
    pub username: String,
    pub event_count: u64,
    pub threshold: u64,
    pub eligible: bool,
    /// Set when the account exists but is not publicly readable.
    pub private: bool,
}

pub mod wire {
    //! JSON bodies of the scrobble protocol.
    use serde::{Deserialize, Serialize};

    #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
    pub struct WireEvent {
        pub artist: String,
        pub title: String,
        pub timestamp: u64,
    }

    #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
    pub struct EventsPage {
        pub total: u64,
        pub total_pages: u32,
        pub page: u32,
        pub events: Vec<WireEvent>,
    }

    #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
    pub struct FriendsPage {
        pub total: u64,
        pub total_pages: u32,
        pub page: u32,
        pub users: Vec<String>,
    }

    #[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
    pub struct UserInfo {
        pub event_count: u64,
        pub public: bool,
    }
}
