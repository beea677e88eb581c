use std::sync::Arc;
use std::time::Duration;

use super::wire::{EventsPage, FriendsPage, UserInfo};
use super::{EligibilityResult, ScrobbleApiConfig, ScrobbleError};
use crate::dataset::ListeningEvent;
use crate::net::{get_json, Fetched, RateLimiter, RetryPolicy};

/// A scrobble API client. Cloning is cheap and clones share one rate limiter,
/// so the minimum request interval holds across every in-flight call.
#[derive(Clone, Debug)]
pub struct ScrobbleClient {
    http: reqwest::Client,
    cfg: Arc<ScrobbleApiConfig>,
    limiter: Arc<RateLimiter>,
}

impl ScrobbleClient {
    pub fn new(cfg: ScrobbleApiConfig) -> Result<Self, ScrobbleError> {
        cfg.validate()?;
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| ScrobbleError::Transport(e.to_string()))?;
        let limiter = Arc::new(RateLimiter::new(cfg.min_request_interval()));
        Ok(Self {
            http,
            cfg: Arc::new(cfg),
            limiter,
        })
    }

    pub fn config(&self) -> &ScrobbleApiConfig {
        &self.cfg
    }

    fn url(&self, username: &str, suffix: &str) -> String {
        let base = self.cfg.base_url.trim_end_matches('/');
        let mut url = reqwest::Url::parse(&format!("{base}/users/")).expect("validated base url");
        url.path_segments_mut()
            .expect("http base url")
            .pop_if_empty()
            .push(username);
        format!("{url}{suffix}")
    }

    fn retry(&self) -> RetryPolicy {
        RetryPolicy {
            max_retries: self.cfg.max_retries,
            base_delay: Duration::from_millis(self.cfg.retry_base_delay_ms),
        }
    }

    async fn get<T: serde::de::DeserializeOwned>(
        &self,
        username: &str,
        url: &str,
        query: &[(&str, String)],
        page: u32,
    ) -> Result<T, ScrobbleError> {
        let mut query = query.to_vec();
        if let Some(key) = &self.cfg.api_key {
            query.push(("api_key", key.clone()));
        }
        match get_json(&self.http, &self.limiter, self.retry(), url, &query).await {
            Fetched::Ok(v) => Ok(v),
            Fetched::Status(404) => Err(ScrobbleError::UserNotFound(username.to_string())),
            Fetched::Status(403) => Err(ScrobbleError::PrivateAccount(username.to_string())),
            Fetched::Status(s) => Err(ScrobbleError::Transport(format!("HTTP {s}"))),
            Fetched::RateLimited => Err(ScrobbleError::RateLimited),
            Fetched::Malformed(reason) => Err(ScrobbleError::MalformedPage { page, reason }),
            Fetched::Transport(e) => Err(ScrobbleError::Transport(e)),
        }
    }

    fn check_username(username: &str) -> Result<(), ScrobbleError> {
        if username.trim().is_empty() {
            Err(ScrobbleError::InvalidRequest("empty username".into()))
        } else {
            Ok(())
        }
    }

    /// Fetches a user's whole listening history, page by page, in API order.
    /// Events with a timestamp before `since` are dropped.
    pub async fn fetch_user_history(
        &self,
        username: &str,
        since: Option<u64>,
    ) -> Result<Vec<ListeningEvent>, ScrobbleError> {
        self.fetch_user_history_with_progress(username, since, |_, _| {}).await
    }

    /// Like [`Self::fetch_user_history`], calling `progress(pages_done,
    /// total_pages)` after every page.
    pub async fn fetch_user_history_with_progress<F>(
        &self,
        username: &str,
        since: Option<u64>,
        mut progress: F,
    ) -> Result<Vec<ListeningEvent>, ScrobbleError>
    where
        F: FnMut(u32, u32),
    {
        Self::check_username(username)?;
        let url = self.url(username, "/events");
        let per_page = self.cfg.page_size;
        let mut events = Vec::new();
        let mut page = 1;
        loop {
            let body: EventsPage = self
                .get(
                    username,
                    &url,
                    &[("page", page.to_string()), ("per_page", per_page.to_string())],
                    page,
                )
                .await?;
            let malformed = |reason: String| ScrobbleError::MalformedPage { page, reason };
            if body.page != page {
                return Err(malformed(format!("server returned page {}", body.page)));
            }
            if body.events.len() > per_page as usize {
                return Err(malformed(format!("{} events exceed per_page", body.events.len())));
            }
            for e in body.events {
                if since.is_some_and(|s| e.timestamp < s) {
                    continue;
                }
                let event = ListeningEvent::new(username, &e.artist, &e.title, e.timestamp)
                    .map_err(|err| malformed(err.to_string()))?;
                events.push(event);
            }
            progress(page, body.total_pages.max(1));
            if page >= body.total_pages {
                break;
            }
            page += 1;
        }
        Ok(events)
    }

    /// Reads up to `limit` friends of `username`, following pagination.
    pub async fn fetch_friends(&self, username: &str, limit: usize) -> Result<Vec<String>, ScrobbleError> {
        Self::check_username(username)?;
        let url = self.url(username, "/friends");
        let mut friends = Vec::new();
        let mut page = 1;
        while friends.len() < limit {
            let body: FriendsPage = self.get(username, &url, &[("page", page.to_string())], page).await?;
            if body.page != page {
                return Err(ScrobbleError::MalformedPage {
                    page,
                    reason: format!("server returned page {}", body.page),
                });
            }
            friends.extend(body.users);
            if page >= body.total_pages {
                break;
            }
            page += 1;
        }
        friends.truncate(limit);
        Ok(friends)
    }

    /// Probes an account's size without reading its history. Private
    /// accounts come back ineligible rather than as an error.
    pub async fn check_eligibility(&self, username: &str, threshold: u64) -> Result<EligibilityResult, ScrobbleError> {
        Self::check_username(username)?;
        let url = self.url(username, "");
        let info: Result<UserInfo, _> = self.get(username, &url, &[], 0).await;
        let (event_count, private) = match info {
            Ok(info) => (info.event_count, !info.public),
            Err(ScrobbleError::PrivateAccount(_)) => (0, true),
            Err(e) => return Err(e),
        };
        Ok(EligibilityResult {
            username: username.to_string(),
            event_count,
            threshold,
            eligible: !private && event_count >= threshold,
            private,
        })
    }
}
