use std::sync::Arc;
use std::time::Duration;

use super::wire::{SearchHit, SearchResponse};
use super::{
    normalize_market, DiscardReason, DiscardedItem, PresentationItem, PresentationList, PreviewConfig, PreviewError,
    PreviewQuery, PreviewResult, Resolution, PREVIEW_SECONDS,
};
use crate::dataset::TrackKey;
use crate::net::{get_json, Fetched, RateLimiter, RetryPolicy};

/// Catalog search client. Stateless apart from its shared rate limiter;
/// clones share the limiter.
#[derive(Clone, Debug)]
pub struct PreviewResolver {
    http: reqwest::Client,
    cfg: Arc<PreviewConfig>,
    limiter: Arc<RateLimiter>,
}

impl PreviewResolver {
    pub fn new(mut cfg: PreviewConfig) -> Result<Self, PreviewError> {
        reqwest::Url::parse(&cfg.base_url).map_err(|e| PreviewError::InvalidQuery(format!("base_url: {e}")))?;
        cfg.default_market = normalize_market(&cfg.default_market)?;
        if let Some(markets) = &mut cfg.supported_markets {
            for m in markets.iter_mut() {
                *m = normalize_market(m)?;
            }
        }
        let http = reqwest::Client::builder()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build()
            .map_err(|e| PreviewError::CatalogUnavailable(e.to_string()))?;
        Ok(Self {
            http,
            limiter: Arc::new(RateLimiter::new(Duration::from_millis(cfg.min_request_interval_ms))),
            cfg: Arc::new(cfg),
        })
    }

    pub fn config(&self) -> &PreviewConfig {
        &self.cfg
    }

    /// The market actually searched: `market` when the catalog supports it,
    /// otherwise the configured default.
    pub fn effective_market(&self, market: &str) -> String {
        let market = normalize_market(market).unwrap_or_else(|_| self.cfg.default_market.clone());
        match &self.cfg.supported_markets {
            Some(supported) if !supported.contains(&market) => {
                tracing::warn!(market, fallback = %self.cfg.default_market, "unsupported market");
                self.cfg.default_market.clone()
            }
            _ => market,
        }
    }

    fn matches(&self, hit: &SearchHit, want: &TrackKey) -> bool {
        let got = TrackKey::new(&hit.artist, &hit.title);
        if self.cfg.case_insensitive_match {
            got.artist_name.to_lowercase() == want.artist_name.to_lowercase()
                && got.track_title.to_lowercase() == want.track_title.to_lowercase()
        } else {
            got == *want
        }
    }

    fn embed_ref(&self, id: &str) -> String {
        format!("{}/embed/track/{id}", self.cfg.base_url.trim_end_matches('/'))
    }

    /// Issues one search and picks the first exact match with a 30-second
    /// preview in the query's market.
    pub async fn resolve_preview(&self, q: &PreviewQuery) -> Result<Resolution, PreviewError> {
        let market = self.effective_market(&q.market);
        let url = format!("{}/search", self.cfg.base_url.trim_end_matches('/'));
        let query = [
            ("artist", q.artist_name.clone()),
            ("title", q.track_title.clone()),
            ("market", market),
        ];
        let retry = RetryPolicy {
            max_retries: self.cfg.max_retries,
            base_delay: Duration::from_millis(self.cfg.retry_base_delay_ms),
        };
        let response: SearchResponse = match get_json(&self.http, &self.limiter, retry, &url, &query).await {
            Fetched::Ok(r) => r,
            Fetched::Status(s) => return Err(PreviewError::CatalogUnavailable(format!("HTTP {s}"))),
            Fetched::RateLimited => return Err(PreviewError::CatalogUnavailable("rate limited".into())),
            Fetched::Malformed(e) | Fetched::Transport(e) => return Err(PreviewError::CatalogUnavailable(e)),
        };
        if response.results.is_empty() {
            return Ok(Resolution::Discarded(DiscardReason::NoResults));
        }
        let want = q.track_key();
        let mut exact = response.results.iter().filter(|h| self.matches(h, &want)).peekable();
        if exact.peek().is_none() {
            return Ok(Resolution::Discarded(DiscardReason::NoExactMatch));
        }
        let playable = exact.find(|h| h.preview_url.is_some() && h.preview_seconds == PREVIEW_SECONDS);
        Ok(match playable {
            Some(hit) => Resolution::Resolved(PreviewResult {
                catalog_track_id: hit.id.clone(),
                preview_url: hit.preview_url.clone().unwrap_or_default(),
                artwork_url: hit.artwork_url.clone(),
                preview_duration: PREVIEW_SECONDS,
                embed_markup_ref: self.embed_ref(&hit.id),
            }),
            None => Resolution::Discarded(DiscardReason::NoPreviewInMarket),
        })
    }

    /// Walks `ranked` in order until `n` tracks resolve or the list runs out.
    /// A miss lets the next ranked track move up.
    pub async fn resolve_ranked_list(
        &self,
        ranked: &[TrackKey],
        market: &str,
        n: usize,
    ) -> Result<PresentationList, PreviewError> {
        let mut list = PresentationList {
            items: Vec::with_capacity(n),
            requested_n: n,
            discarded_count: 0,
            discarded: Vec::new(),
            shortfall: false,
        };
        for (source_rank, track) in ranked.iter().enumerate() {
            if list.items.len() >= n {
                break;
            }
            let resolution = match PreviewQuery::new(track, market) {
                Ok(q) => self.resolve_preview(&q).await?,
                // unusable keys cannot be searched for
                Err(PreviewError::InvalidQuery(_)) if normalize_market(market).is_ok() => {
                    Resolution::Discarded(DiscardReason::NoResults)
                }
                Err(e) => return Err(e),
            };
            match resolution {
                Resolution::Resolved(preview) => list.items.push(PresentationItem {
                    source_rank,
                    track: track.clone(),
                    preview,
                }),
                Resolution::Discarded(reason) => {
                    list.discarded_count += 1;
                    list.discarded.push(DiscardedItem {
                        source_rank,
                        track: track.clone(),
                        reason,
                    });
                }
            }
        }
        list.shortfall = list.items.len() < n;
        Ok(list)
    }
}
