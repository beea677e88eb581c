//! HTTP plumbing shared by the scrobble and catalog clients: a minimum-spacing
//! rate limiter and GET-with-retry.

use std::time::Duration;

use serde::de::DeserializeOwned;
use tokio::sync::Mutex;
use tokio::time::Instant;

/// Enforces a minimum interval between request dispatches across every task
/// sharing the limiter.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(interval: Duration) -> Self {
        Self {
            interval,
            next: Mutex::new(None),
        }
    }

    pub fn interval(&self) -> Duration {
        self.interval
    }

    /// Waits until a dispatch slot is free and claims it.
    pub async fn acquire(&self) {
        let mut next = self.next.lock().await;
        if let Some(at) = *next {
            tokio::time::sleep_until(at).await;
        }
        *next = Some(Instant::now() + self.interval);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl RetryPolicy {
    pub fn delay(&self, attempt: u32) -> Duration {
        self.base_delay.saturating_mul(1u32 << attempt.min(16))
    }
}

/// Outcome of a GET after retries.
#[derive(Debug)]
pub(crate) enum Fetched<T> {
    Ok(T),
    /// Non-retryable HTTP status (404, 403, other 4xx).
    Status(u16),
    /// 429 persisted through every retry.
    RateLimited,
    /// Body was not the expected JSON.
    Malformed(String),
    /// Connection failure or 5xx through every retry.
    Transport(String),
}

/// Issues a rate-limited GET, retrying 429, 5xx and transport failures with
/// exponential backoff.
pub(crate) async fn get_json<T: DeserializeOwned>(
    http: &reqwest::Client,
    limiter: &RateLimiter,
    retry: RetryPolicy,
    url: &str,
    query: &[(&str, String)],
) -> Fetched<T> {
    let mut attempt = 0;
    loop {
        limiter.acquire().await;
        let last = attempt >= retry.max_retries;
        match http.get(url).query(query).send().await {
            Ok(resp) => {
                let status = resp.status().as_u16();
                if status == 429 || status >= 500 {
                    if last {
                        return if status == 429 {
                            Fetched::RateLimited
                        } else {
                            Fetched::Transport(format!("HTTP {status}"))
                        };
                    }
                } else if !(200..300).contains(&status) {
                    return Fetched::Status(status);
                } else {
                    return match resp.bytes().await {
                        Ok(body) => match serde_json::from_slice(&body) {
                            Ok(v) => Fetched::Ok(v),
                            Err(e) => Fetched::Malformed(e.to_string()),
                        },
                        Err(e) => Fetched::Transport(e.to_string()),
                    };
                }
            }
            Err(e) => {
                if last {
                    return Fetched::Transport(e.to_string());
                }
            }
        }
        let delay = retry.delay(attempt);
        tracing::debug!(url, attempt, ?delay, "retrying request");
        tokio::time::sleep(delay).await;
        attempt += 1;
    }
}

/// A server running on a background task. The task is aborted on drop.
#[derive(Debug)]
pub struct ServerHandle {
    addr: std::net::SocketAddr,
    task: tokio::task::JoinHandle<()>,
}

impl ServerHandle {
    /// Serves `router` on `127.0.0.1` at an OS-assigned port.
    pub async fn spawn_local(router: axum::Router) -> std::io::Result<Self> {
        Self::spawn(router, "127.0.0.1:0").await
    }

    pub async fn spawn(router: axum::Router, bind: &str) -> std::io::Result<Self> {
        let listener = tokio::net::TcpListener::bind(bind).await?;
        let addr = listener.local_addr()?;
        let task = tokio::spawn(async move {
            if let Err(e) = axum::serve(listener, router).await {
                tracing::error!(error = %e, "server stopped");
            }
        });
        Ok(Self { addr, task })
    }

    pub fn addr(&self) -> std::net::SocketAddr {
        self.addr
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Runs until the server task ends.
    pub async fn join(mut self) {
        let _ = (&mut self.task).await;
    }
}

impl Drop for ServerHandle {
    fn drop(&mut self) {
        self.task.abort();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test(start_paused = true)]
    async fn limiter_spaces_dispatches() {
        let limiter = RateLimiter::new(Duration::from_millis(100));
        let start = Instant::now();
        limiter.acquire().await;
        limiter.acquire().await;
        limiter.acquire().await;
        assert!(start.elapsed() >= Duration::from_millis(200));
    }

    #[test]
    fn backoff_doubles() {
        let p = RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(10),
        };
        assert_eq!(p.delay(0), Duration::from_millis(10));
        assert_eq!(p.delay(3), Duration::from_millis(80));
    }
}
