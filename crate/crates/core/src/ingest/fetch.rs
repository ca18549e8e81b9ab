use std::fs;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::ingest::raw::{parse_raw_series, RawSeries};
use crate::series::MonthRange;

/// Environment variable holding the trends endpoint base URL.
pub const ENDPOINT_ENV: &str = "ITAC_TRENDS_URL";

pub const DEFAULT_GEO: &str = "PE";

/// Where and how to request search-volume series.
///
/// The endpoint answers `GET {base}/trends?term=..&geo=..&start=YYYY-MM&end=YYYY-MM`
/// with a `date,value` CSV body.
#[derive(Clone, Debug)]
pub struct EndpointConfig {
    pub base_url: String,
    pub geo: String,
    pub max_retries: usize,
    pub initial_backoff: Duration,
    pub timeout: Duration,
    pub cache_dir: Option<PathBuf>,
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        EndpointConfig {
            base_url: base_url.into(),
            geo: DEFAULT_GEO.to_string(),
            max_retries: 3,
            initial_backoff: Duration::from_millis(200),
            timeout: Duration::from_secs(30),
            cache_dir: None,
        }
    }

    /// Base URL from [`ENDPOINT_ENV`].
    pub fn from_env() -> Result<Self> {
        std::env::var(ENDPOINT_ENV)
            .map(Self::new)
            .map_err(|_| Error::Config(format!("{ENDPOINT_ENV} is not set")))
    }

    pub fn with_geo(mut self, geo: impl Into<String>) -> Self {
        self.geo = geo.into();
        self
    }

    pub fn with_cache_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.cache_dir = Some(dir.into());
        self
    }
}

/// Cache file name for a request: hex SHA-256 of (term, span, geo).
pub fn cache_key(term: &str, span: &MonthRange, geo: &str) -> String {
    let mut h = Sha256::new();
    for part in [term, &span.start.to_string(), &span.end.to_string(), geo] {
        h.update(part.as_bytes());
        h.update([0u8]);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn cache_path(dir: &Path, term: &str, span: &MonthRange, geo: &str) -> PathBuf {
    dir.join(format!("{}.csv", cache_key(term, span, geo)))
}

/// Writes through a temporary sibling and renames, so readers never see partial files.
fn atomic_write(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tmp = dir.join(format!(
        ".{}.{}.{:?}.tmp",
        path.file_name().and_then(|n| n.to_str()).unwrap_or("cache"),
        std::process::id(),
        thread::current().id()
    ));
    fs::write(&tmp, contents).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

enum Attempt {
    Done(String),
    Retry(String),
}

fn request_once(agent: &ureq::Agent, config: &EndpointConfig, term: &str, span: &MonthRange) -> Result<Attempt> {
    let url = format!("{}/trends", config.base_url.trim_end_matches('/'));
    let response = agent
        .get(&url)
        .query("term", term)
        .query("geo", &config.geo)
        .query("start", span.start.to_string())
        .query("end", span.end.to_string())
        .call();
    let mut response = match response {
        Ok(r) => r,
        Err(e) => return Ok(Attempt::Retry(e.to_string())),
    };
    let status = response.status().as_u16();
    match status {
        200..=299 => {
            let body = response
                .body_mut()
                .read_to_string()
                .map_err(|e| Error::Parse {
                    row: 0,
                    message: format!("unreadable response body: {e}"),
                })?;
            Ok(Attempt::Done(body))
        }
        429 => Err(Error::Throttled { status }),
        500..=599 => Ok(Attempt::Retry(format!("HTTP {status}"))),
        _ => Err(Error::Fetch {
            attempts: 1,
            message: format!("HTTP {status}"),
        }),
    }
}

/// Fetches one term over `span`, consulting and filling the on-disk cache.
///
/// Transport failures and 5xx responses are retried with exponential backoff;
/// HTTP 429 surfaces immediately as [`Error::Throttled`].
pub fn fetch_series(term: &str, span: &MonthRange, config: &EndpointConfig) -> Result<RawSeries> {
    if term.trim().is_empty() {
        return Err(Error::InvalidSpan("empty term".into()));
    }
    if let Some(dir) = &config.cache_dir {
        let path = cache_path(dir, term, span, &config.geo);
        if let Ok(bytes) = fs::read(&path) {
            return Ok(parse_raw_series(&bytes)?.with_term(term, None));
        }
    }
    let agent: ureq::Agent = ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(config.timeout))
        .build()
        .into();
    let mut backoff = config.initial_backoff;
    let mut last = String::new();
    let attempts = config.max_retries + 1;
    for attempt in 0..attempts {
        match request_once(&agent, config, term, span)? {
            Attempt::Done(body) => {
                let mut series = parse_raw_series(body.as_bytes())?.with_term(term, None);
                series.observations.retain(|(m, _)| span.contains(*m));
                if let Some(dir) = &config.cache_dir {
                    atomic_write(&cache_path(dir, term, span, &config.geo), series.to_csv().as_bytes())?;
                }
                return Ok(series);
            }
            Attempt::Retry(msg) => {
                last = msg;
                if attempt + 1 < attempts {
                    thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
    }
    Err(Error::Fetch {
        attempts,
        message: last,
    })
}

/// Fetches several terms concurrently; results keep input order.
pub fn fetch_all(terms: &[String], span: &MonthRange, config: &EndpointConfig) -> Vec<Result<RawSeries>> {
    thread::scope(|s| {
        let handles: Vec<_> = terms
            .iter()
            .map(|t| s.spawn(move || fetch_series(t, span, config)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(Error::Fetch { attempts: 0, message: "worker panicked".into() })))
            .collect()
    })
}
