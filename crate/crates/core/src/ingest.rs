//! Fetching PubMed abstracts by PMID.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::{RngExt, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{is_valid_pmid, Document};

/// Environment variable overriding [`FetcherConfig::base_url`].
pub const BASE_URL_ENV: &str = "BIOANN_FETCH_URL";
pub const DEFAULT_EFETCH_URL: &str = "https://eutils.ncbi.nlm.nih.gov/entrez/eutils/efetch.fcgi";
pub const MAX_RETRIES: u32 = 5;
const BACKOFF_BASE_MS: f64 = 100.0;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum IngestError {
    #[error("pmid {0} not found")]
    PmidNotFound(String),
    #[error("fetch failed: {0}")]
    FetchFailed(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("invalid pmid {0:?}")]
    InvalidPmid(String),
    #[error("invalid fetcher config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FetchMode {
    #[default]
    EfetchXml,
    StubJson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FetcherConfig {
    pub base_url: String,
    pub timeout_ms: u64,
    pub retries: u32,
    pub mode: FetchMode,
    /// Passed through as the `api_key` query parameter in efetch mode.
    pub api_key: Option<String>,
    /// Concurrent requests allowed against the upstream host.
    pub max_connections: usize,
}

impl Default for FetcherConfig {
    fn default() -> Self {
        Self {
            base_url: DEFAULT_EFETCH_URL.to_string(),
            timeout_ms: 10_000,
            retries: 2,
            mode: FetchMode::EfetchXml,
            api_key: None,
            max_connections: 4,
        }
    }
}

impl FetcherConfig {
    pub fn stub(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            mode: FetchMode::StubJson,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), IngestError> {
        if self.base_url.trim().is_empty() {
            return Err(IngestError::InvalidConfig("base_url is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(IngestError::InvalidConfig("timeout_ms must be positive".into()));
        }
        if self.retries > MAX_RETRIES {
            return Err(IngestError::InvalidConfig(format!(
                "retries {} exceeds the maximum of {MAX_RETRIES}",
                self.retries
            )));
        }
        if self.max_connections == 0 {
            return Err(IngestError::InvalidConfig("max_connections must be at least 1".into()));
        }
        Ok(())
    }

    /// Applies the base-URL environment override, if set and nonempty.
    pub fn with_env_override(mut self) -> Self {
        if let Ok(url) = std::env::var(BASE_URL_ENV) {
            if !url.trim().is_empty() {
                self.base_url = url;
            }
        }
        self
    }
}

/// Delay before retry number `attempt` (0-based): 100 ms doubled per
/// attempt, scaled by a jitter factor in `[0.5, 1.5)` derived from `unit`
/// in `[0, 1)`.
pub fn backoff_delay(attempt: u32, unit: f64) -> Duration {
    let base = BACKOFF_BASE_MS * 2f64.powi(attempt.min(16) as i32);
    Duration::from_secs_f64(base * (0.5 + unit.clamp(0.0, 1.0)) / 1000.0)
}

pub trait AbstractFetcher: Send + Sync {
    fn fetch_abstract(&self, pmid: &str) -> Result<Document, IngestError>;
}

impl<T: AbstractFetcher + ?Sized> AbstractFetcher for std::sync::Arc<T> {
    fn fetch_abstract(&self, pmid: &str) -> Result<Document, IngestError> {
        (**self).fetch_abstract(pmid)
    }
}

fn join_title_abstract(title: &str, abstract_text: &str) -> String {
    if abstract_text.is_empty() {
        title.to_string()
    } else {
        format!("{title} {abstract_text}")
    }
}

fn make_document(pmid: &str, text: String) -> Result<Document, IngestError> {
    Document::new(Some(pmid.to_string()), text).map_err(|e| IngestError::MalformedResponse(e.to_string()))
}

fn element_text(node: roxmltree::Node<'_, '_>) -> String {
    node.descendants()
        .filter(|n| n.is_text())
        .filter_map(|n| n.text())
        .collect()
}

/// Extracts the title and abstract of `pmid` from an efetch XML reply.
pub fn parse_efetch_xml(xml: &str, pmid: &str) -> Result<Document, IngestError> {
    // efetch replies carry a DOCTYPE; roxmltree never loads external entities
    let opts = roxmltree::ParsingOptions {
        allow_dtd: true,
        ..Default::default()
    };
    let doc = roxmltree::Document::parse_with_options(xml, opts)
        .map_err(|e| IngestError::MalformedResponse(e.to_string()))?;
    let article = doc
        .descendants()
        .filter(|n| n.has_tag_name("PubmedArticle"))
        .find(|a| {
            a.descendants()
                .find(|n| n.has_tag_name("PMID"))
                .map(|n| element_text(n).trim() == pmid)
                .unwrap_or(true)
        })
        .ok_or_else(|| IngestError::PmidNotFound(pmid.to_string()))?;
    let title = article
        .descendants()
        .find(|n| n.has_tag_name("ArticleTitle"))
        .map(element_text)
        .ok_or_else(|| IngestError::MalformedResponse("article has no ArticleTitle".into()))?;
    let abstract_text = article
        .descendants()
        .filter(|n| n.has_tag_name("AbstractText"))
        .map(element_text)
        .collect::<Vec<_>>()
        .join(" ");
    make_document(pmid, join_title_abstract(&title, &abstract_text))
}

#[derive(Debug, Deserialize)]
struct StubArticle {
    pmid: String,
    title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
}

/// Parses a `{"pmid","title","abstract"}` reply.
pub fn parse_stub_json(body: &str, pmid: &str) -> Result<Document, IngestError> {
    let a: StubArticle = serde_json::from_str(body).map_err(|e| IngestError::MalformedResponse(e.to_string()))?;
    if a.pmid != pmid {
        return Err(IngestError::MalformedResponse(format!(
            "asked for pmid {pmid}, reply is for {}",
            a.pmid
        )));
    }
    make_document(pmid, join_title_abstract(&a.title, &a.abstract_text))
}

#[derive(Debug)]
struct Semaphore {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Semaphore {
    fn acquire(&self) -> SemaphoreGuard<'_> {
        let mut free = self.free.lock().expect("semaphore lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("semaphore lock");
        }
        *free -= 1;
        SemaphoreGuard(self)
    }
}

struct SemaphoreGuard<'a>(&'a Semaphore);

impl Drop for SemaphoreGuard<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("semaphore lock") += 1;
        self.0.cv.notify_one();
    }
}

enum Attempt {
    Done(Result<Document, IngestError>),
    Retry(String),
}

/// HTTP fetcher with bounded, jittered exponential-backoff retries.
#[derive(Debug)]
pub struct HttpFetcher {
    cfg: FetcherConfig,
    agent: ureq::Agent,
    slots: Semaphore,
    requests: AtomicU64,
}

impl HttpFetcher {
    pub fn new(cfg: FetcherConfig) -> Result<Self, IngestError> {
        cfg.validate()?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .max_idle_connections_per_host(cfg.max_connections)
            .build();
        Ok(Self {
            slots: Semaphore {
                free: Mutex::new(cfg.max_connections),
                cv: Condvar::new(),
            },
            cfg,
            agent,
            requests: AtomicU64::new(0),
        })
    }

    pub fn config(&self) -> &FetcherConfig {
        &self.cfg
    }

    /// HTTP requests issued so far, retries included.
    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::Relaxed)
    }

    fn attempt(&self, pmid: &str) -> Attempt {
        let base = self.cfg.base_url.trim_end_matches('/');
        let req = match self.cfg.mode {
            FetchMode::EfetchXml => {
                let mut r = self
                    .agent
                    .get(base)
                    .query("db", "pubmed")
                    .query("id", pmid)
                    .query("rettype", "abstract")
                    .query("retmode", "xml");
                if let Some(key) = &self.cfg.api_key {
                    r = r.query("api_key", key);
                }
                r
            }
            FetchMode::StubJson => self.agent.get(&format!("{base}/{pmid}")),
        };
        let _slot = self.slots.acquire();
        self.requests.fetch_add(1, Ordering::Relaxed);
        match req.call() {
            Ok(resp) => {
                let body = match resp.into_string() {
                    Ok(b) => b,
                    Err(e) => return Attempt::Retry(format!("reading body: {e}")),
                };
                Attempt::Done(match self.cfg.mode {
                    FetchMode::EfetchXml => parse_efetch_xml(&body, pmid),
                    FetchMode::StubJson => parse_stub_json(&body, pmid),
                })
            }
            Err(ureq::Error::Status(404, _)) => Attempt::Done(Err(IngestError::PmidNotFound(pmid.to_string()))),
            Err(ureq::Error::Status(code, _)) if code >= 500 || code == 429 => {
                Attempt::Retry(format!("upstream replied HTTP {code}"))
            }
            Err(ureq::Error::Status(code, _)) => {
                Attempt::Done(Err(IngestError::FetchFailed(format!("upstream replied HTTP {code}"))))
            }
            Err(ureq::Error::Transport(t)) => Attempt::Retry(t.to_string()),
        }
    }
}

impl AbstractFetcher for HttpFetcher {
    fn fetch_abstract(&self, pmid: &str) -> Result<Document, IngestError> {
        if !is_valid_pmid(pmid) {
            return Err(IngestError::InvalidPmid(pmid.to_string()));
        }
        let mut rng = rand::rngs::StdRng::from_rng(&mut rand::rng());
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                std::thread::sleep(backoff_delay(attempt - 1, rng.random::<f64>()));
            }
            match self.attempt(pmid) {
                Attempt::Done(r) => return r,
                Attempt::Retry(why) => {
                    log::warn!("fetch of pmid {pmid} failed (attempt {}): {why}", attempt + 1);
                    last = why;
                }
            }
        }
        Err(IngestError::FetchFailed(format!(
            "{} attempts for pmid {pmid}: {last}",
            self.cfg.retries + 1
        )))
    }
}

/// In-memory fetcher over a fixed article set, with optional simulated latency.
#[derive(Debug, Default)]
pub struct MapFetcher {
    articles: HashMap<String, (String, String)>,
    latency: Duration,
    fetches: AtomicU64,
}

impl MapFetcher {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, pmid: &str, title: &str, abstract_text: &str) {
        self.articles
            .insert(pmid.to_string(), (title.to_string(), abstract_text.to_string()));
    }

    pub fn with_latency(mut self, latency: Duration) -> Self {
        self.latency = latency;
        self
    }

    pub fn fetches(&self) -> u64 {
        self.fetches.load(Ordering::Relaxed)
    }
}

impl AbstractFetcher for MapFetcher {
    fn fetch_abstract(&self, pmid: &str) -> Result<Document, IngestError> {
        if !is_valid_pmid(pmid) {
            return Err(IngestError::InvalidPmid(pmid.to_string()));
        }
        self.fetches.fetch_add(1, Ordering::Relaxed);
        if !self.latency.is_zero() {
            std::thread::sleep(self.latency);
        }
        let (title, abs) = self
            .articles
            .get(pmid)
            .ok_or_else(|| IngestError::PmidNotFound(pmid.to_string()))?;
        make_document(pmid, join_title_abstract(title, abs))
    }
}
