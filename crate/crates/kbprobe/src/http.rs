//! Shared HTTP plumbing: a narrow transport trait (so every client in the
//! crate can be unit-tested against a scripted fake), a `ureq`-backed
//! implementation, a polite per-host rate limiter, and a retrying wrapper
//! with exponential backoff that honors Retry-After hints.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::Value;

pub const USER_AGENT: &str = concat!("kbprobe/", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone)]
pub struct HttpResponse {
    pub status: u16,
    pub retry_after: Option<u64>,
    pub body: String,
}

impl HttpResponse {
    pub fn is_success(&self) -> bool {
        (200..300).contains(&self.status)
    }

    fn is_retryable(&self) -> bool {
        self.status == 429 || self.status >= 500
    }
}

#[derive(Debug, thiserror::Error)]
pub enum HttpError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP {status} from {url}: {snippet}")]
    Status {
        status: u16,
        url: String,
        snippet: String,
    },
    #[error("request to {url} failed after {attempts} attempts: {last}")]
    Exhausted {
        url: String,
        attempts: u32,
        last: String,
    },
}

pub trait HttpTransport: Send + Sync {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<HttpResponse, HttpError>;

    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<HttpResponse, HttpError>;
}

/// Blocking `ureq` transport with a 30 s timeout and the crate user agent.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new() -> Self {
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_secs(30))
            .user_agent(USER_AGENT)
            .build();
        UreqTransport { agent }
    }

    fn finish(url: &str, result: Result<ureq::Response, ureq::Error>) -> Result<HttpResponse, HttpError> {
        let response = match result {
            Ok(response) => response,
            // Non-2xx comes back as a value so the retry layer can classify it.
            Err(ureq::Error::Status(_, response)) => response,
            Err(ureq::Error::Transport(t)) => {
                return Err(HttpError::Transport(format!("{url}: {t}")))
            }
        };
        let status = response.status();
        let retry_after = response
            .header("retry-after")
            .and_then(|v| v.trim().parse::<u64>().ok());
        let body = response
            .into_string()
            .map_err(|e| HttpError::Transport(format!("{url}: {e}")))?;
        Ok(HttpResponse { status, retry_after, body })
    }
}

impl Default for UreqTransport {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpTransport for UreqTransport {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<HttpResponse, HttpError> {
        let mut request = self.agent.get(url);
        for (key, value) in query {
            request = request.query(key, value);
        }
        Self::finish(url, request.call())
    }

    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<HttpResponse, HttpError> {
        let mut request = self.agent.post(url);
        if let Some(token) = bearer {
            request = request.set("Authorization", &format!("Bearer {token}"));
        }
        Self::finish(url, request.send_json(body.clone()))
    }
}

/// Serializes callers so consecutive requests are at least `min_interval`
/// apart. Each external host gets its own limiter.
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            next_slot: Mutex::new(Instant::now()),
        }
    }

    pub fn acquire(&self) {
        let wait_until = {
            let mut slot = self.next_slot.lock().expect("rate limiter poisoned");
            let now = Instant::now();
            let at = (*slot).max(now);
            *slot = at + self.min_interval;
            at
        };
        let now = Instant::now();
        if wait_until > now {
            std::thread::sleep(wait_until - now);
        }
    }
}

/// Backoff: `base_ms * factor^attempt`, capped by `max_attempts` tries.
#[derive(Debug, Clone)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_ms: u64,
    pub factor: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 5, base_ms: 1000, factor: 2.0 }
    }
}

impl RetryPolicy {
    fn delay(&self, attempt: u32, retry_after: Option<u64>) -> Duration {
        if let Some(seconds) = retry_after {
            return Duration::from_secs(seconds);
        }
        let ms = (self.base_ms as f64 * self.factor.powi(attempt as i32)) as u64;
        Duration::from_millis(ms)
    }
}

type Sleeper = Box<dyn Fn(Duration) + Send + Sync>;

/// Retries transient failures (transport errors, 429, 5xx) and rate-limits
/// every call. Non-retryable statuses surface immediately with a body
/// snippet for context.
pub struct RetryingTransport<T: HttpTransport> {
    inner: T,
    policy: RetryPolicy,
    limiter: RateLimiter,
    sleeper: Sleeper,
}

impl<T: HttpTransport> RetryingTransport<T> {
    pub fn new(inner: T, policy: RetryPolicy, limiter: RateLimiter) -> Self {
        RetryingTransport {
            inner,
            policy,
            limiter,
            sleeper: Box::new(std::thread::sleep),
        }
    }

    #[cfg(test)]
    fn with_sleeper(mut self, sleeper: Sleeper) -> Self {
        self.sleeper = sleeper;
        self
    }

    fn run<F>(&self, url: &str, call: F) -> Result<HttpResponse, HttpError>
    where
        F: Fn(&T) -> Result<HttpResponse, HttpError>,
    {
        let mut last_failure = String::new();
        for attempt in 0..self.policy.max_attempts {
            self.limiter.acquire();
            match call(&self.inner) {
                Ok(response) if response.is_success() => return Ok(response),
                Ok(response) if response.is_retryable() => {
                    last_failure = format!("HTTP {}", response.status);
                    log::warn!(
                        "retryable HTTP {} from {url} (attempt {})",
                        response.status,
                        attempt + 1
                    );
                    if attempt + 1 < self.policy.max_attempts {
                        (self.sleeper)(self.policy.delay(attempt, response.retry_after));
                    }
                }
                Ok(response) => {
                    let snippet: String = response.body.chars().take(200).collect();
                    return Err(HttpError::Status {
                        status: response.status,
                        url: url.to_string(),
                        snippet,
                    });
                }
                Err(HttpError::Transport(detail)) => {
                    last_failure = detail;
                    log::warn!("transport failure on {url} (attempt {})", attempt + 1);
                    if attempt + 1 < self.policy.max_attempts {
                        (self.sleeper)(self.policy.delay(attempt, None));
                    }
                }
                Err(other) => return Err(other),
            }
        }
        Err(HttpError::Exhausted {
            url: url.to_string(),
            attempts: self.policy.max_attempts,
            last: last_failure,
        })
    }
}

impl<T: HttpTransport> HttpTransport for RetryingTransport<T> {
    fn get(&self, url: &str, query: &[(&str, &str)]) -> Result<HttpResponse, HttpError> {
        self.run(url, |inner| inner.get(url, query))
    }

    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
    ) -> Result<HttpResponse, HttpError> {
        self.run(url, |inner| inner.post_json(url, bearer, body))
    }
}
