//! Archive fetching with retries, backoff and per-host politeness.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::canon::strip_archive_prefix;
use super::snapshot::SnapshotRef;
use super::IngestError;

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
    /// URL after redirects.
    pub final_url: String,
    pub retry_after: Option<Duration>,
}

#[derive(Debug, thiserror::Error)]
#[error("transport error for {url}: {message}")]
pub struct TransportError {
    pub url: String,
    pub message: String,
}

pub trait Transport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError>;
}

/// Live HTTP transport; redirects are followed by the client.
pub struct HttpTransport {
    client: reqwest::blocking::Client,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Result<Self, IngestError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .user_agent(concat!("biaskit/", env!("CARGO_PKG_VERSION")))
            .build()
            .map_err(|e| IngestError::Config(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for HttpTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let err = |e: reqwest::Error| TransportError { url: url.to_string(), message: e.to_string() };
        let resp = self.client.get(url).send().map_err(err)?;
        let status = resp.status().as_u16();
        let final_url = resp.url().to_string();
        let retry_after = resp
            .headers()
            .get(reqwest::header::RETRY_AFTER)
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.bytes().map_err(err)?.to_vec();
        Ok(HttpResponse { status, body, final_url, retry_after })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum FixtureEntry {
    File(String),
    Full {
        #[serde(default)]
        file: Option<String>,
        #[serde(default = "ok_status")]
        status: u16,
        #[serde(default)]
        final_url: Option<String>,
    },
}

fn ok_status() -> u16 {
    200
}

/// Serves stored responses from a directory with an `index.json` mapping
/// URL → file (or `{file, status, final_url}`). Archive URLs fall back to
/// their live URL when no exact entry exists; unknown URLs answer 404.
pub struct FixtureTransport {
    root: PathBuf,
    index: BTreeMap<String, FixtureEntry>,
}

impl FixtureTransport {
    pub fn open(root: &Path) -> Result<Self, IngestError> {
        let index_path = root.join("index.json");
        let text = std::fs::read_to_string(&index_path)
            .map_err(|e| IngestError::Config(format!("cannot read {}: {e}", index_path.display())))?;
        let index = serde_json::from_str(&text)
            .map_err(|e| IngestError::Config(format!("bad fixture index {}: {e}", index_path.display())))?;
        Ok(Self { root: root.to_path_buf(), index })
    }
}

impl Transport for FixtureTransport {
    fn get(&self, url: &str) -> Result<HttpResponse, TransportError> {
        let entry = self.index.get(url).or_else(|| self.index.get(strip_archive_prefix(url)));
        let (file, status, final_url) = match entry {
            None => (None, 404, None),
            Some(FixtureEntry::File(f)) => (Some(f.clone()), 200, None),
            Some(FixtureEntry::Full { file, status, final_url }) => (file.clone(), *status, final_url.clone()),
        };
        let body = match file {
            Some(f) => std::fs::read(self.root.join(&f))
                .map_err(|e| TransportError { url: url.to_string(), message: format!("fixture {f}: {e}") })?,
            None => Vec::new(),
        };
        Ok(HttpResponse { status, body, final_url: final_url.unwrap_or_else(|| url.to_string()), retry_after: None })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff: Duration,
    pub max_backoff: Duration,
    /// Requests per second per host.
    pub rate_per_host: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            base_backoff: Duration::from_secs(1),
            max_backoff: Duration::from_secs(60),
            rate_per_host: 1.0,
        }
    }
}

/// Minimum spacing between requests to the same host.
pub struct RateLimiter {
    interval: Duration,
    next: Mutex<HashMap<String, Instant>>,
}

impl RateLimiter {
    pub fn new(rate_per_host: f64) -> Self {
        let interval = if rate_per_host > 0.0 && rate_per_host.is_finite() {
            Duration::from_secs_f64(1.0 / rate_per_host)
        } else {
            Duration::ZERO
        };
        Self { interval, next: Mutex::new(HashMap::new()) }
    }

    /// Reserves the next slot for `host` and returns how long to wait for it.
    pub fn reserve(&self, host: &str) -> Duration {
        let now = Instant::now();
        let mut next = self.next.lock().expect("rate limiter lock");
        let slot = next.get(host).copied().filter(|t| *t > now).unwrap_or(now);
        next.insert(host.to_string(), slot + self.interval);
        slot - now
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchedDocument {
    pub url: String,
    pub final_url: String,
    pub status: u16,
    pub attempts: u32,
    #[serde(skip)]
    pub body: Vec<u8>,
}

type Sleeper = dyn Fn(Duration) + Send + Sync;

pub struct Fetcher {
    transport: Arc<dyn Transport>,
    policy: RetryPolicy,
    limiter: RateLimiter,
    sleeper: Box<Sleeper>,
    requests: AtomicUsize,
}

fn host_of(url: &str) -> String {
    url::Url::parse(url).ok().and_then(|u| u.host_str().map(str::to_string)).unwrap_or_default()
}

impl Fetcher {
    pub fn new(transport: Arc<dyn Transport>, policy: RetryPolicy) -> Self {
        Self {
            limiter: RateLimiter::new(policy.rate_per_host),
            transport,
            policy,
            sleeper: Box::new(std::thread::sleep),
            requests: AtomicUsize::new(0),
        }
    }

    /// Replaces the sleep function (tests use a no-op or a recorder).
    pub fn with_sleeper(mut self, sleeper: impl Fn(Duration) + Send + Sync + 'static) -> Self {
        self.sleeper = Box::new(sleeper);
        self
    }

    /// Number of transport requests issued so far.
    pub fn requests(&self) -> usize {
        self.requests.load(Ordering::Relaxed)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u32 << attempt.min(16);
        (self.policy.base_backoff * factor).min(self.policy.max_backoff)
    }

    /// GET with retry: non-2xx responses and transport errors are retried
    /// with exponential backoff (or the server's Retry-After) up to the cap.
    pub fn fetch(&self, url: &str) -> Result<FetchedDocument, IngestError> {
        let host = host_of(url);
        let mut last_status = None;
        for attempt in 0..self.policy.max_attempts.max(1) {
            let wait = self.limiter.reserve(&host);
            if !wait.is_zero() {
                (self.sleeper)(wait);
            }
            self.requests.fetch_add(1, Ordering::Relaxed);
            match self.transport.get(url) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    return Ok(FetchedDocument {
                        url: url.to_string(),
                        final_url: resp.final_url,
                        status: resp.status,
                        attempts: attempt + 1,
                        body: resp.body,
                    });
                }
                Ok(resp) => {
                    tracing::debug!(url, status = resp.status, attempt, "fetch attempt failed");
                    last_status = Some(resp.status);
                    if attempt + 1 < self.policy.max_attempts {
                        let delay = resp.retry_after.map(|d| d.min(self.policy.max_backoff)).unwrap_or(self.backoff(attempt));
                        (self.sleeper)(delay);
                    }
                }
                Err(e) => {
                    tracing::debug!(url, error = %e, attempt, "transport error");
                    if attempt + 1 < self.policy.max_attempts {
                        (self.sleeper)(self.backoff(attempt));
                    }
                }
            }
        }
        Err(IngestError::SnapshotUnavailable { url: url.to_string(), status: last_status })
    }

    pub fn fetch_snapshot(&self, snapshot: &SnapshotRef) -> Result<FetchedDocument, IngestError> {
        self.fetch(&snapshot.archive_url)
    }

    /// Fetches URLs with up to `parallelism` workers; results keep input order.
    pub fn fetch_many(&self, urls: &[String], parallelism: usize) -> Vec<Result<FetchedDocument, IngestError>> {
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<FetchedDocument, IngestError>>>> =
            urls.iter().map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..parallelism.max(1).min(urls.len().max(1)) {
                scope.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= urls.len() {
                        break;
                    }
                    let r = self.fetch(&urls[i]);
                    *slots[i].lock().expect("slot lock") = Some(r);
                });
            }
        });
        slots.into_iter().map(|s| s.into_inner().expect("slot lock").expect("every slot filled")).collect()
    }
}
