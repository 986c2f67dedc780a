//! HTTP plumbing shared by the service clients: a transport abstraction with
//! a live (`ureq`) backend, fixture replay/recording, scripted responses for
//! tests, and a retrying, concurrency-bounded endpoint client.

use std::collections::VecDeque;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{EndpointConfig, ServiceError};
use crate::hashing::{hash_parts, sha256_hex};

static NETWORK_REQUESTS: AtomicU64 = AtomicU64::new(0);

/// Requests sent over a real socket by this process.
pub fn network_requests() -> u64 {
    NETWORK_REQUESTS.load(Ordering::SeqCst)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: Vec<u8>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TransportError {
    Timeout,
    /// Connection refused, DNS failure and the like.
    Connect(String),
    Other(String),
}

pub trait HttpTransport: Send + Sync {
    fn post(&self, req: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportError>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build();
        Self {
            agent: ureq::Agent::new_with_config(config),
        }
    }
}

const MAX_RESPONSE_BYTES: u64 = 256 * 1024 * 1024;

impl HttpTransport for UreqTransport {
    fn post(&self, req: &HttpRequest, _timeout: Duration) -> Result<HttpResponse, TransportError> {
        NETWORK_REQUESTS.fetch_add(1, Ordering::SeqCst);
        let started = Instant::now();
        let mut builder = self.agent.post(&req.url);
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        let map_err = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => TransportError::Connect(e.to_string()),
            ureq::Error::Io(io) => match io.kind() {
                std::io::ErrorKind::ConnectionRefused
                | std::io::ErrorKind::ConnectionReset
                | std::io::ErrorKind::NotConnected
                | std::io::ErrorKind::AddrNotAvailable => TransportError::Connect(io.to_string()),
                std::io::ErrorKind::TimedOut | std::io::ErrorKind::WouldBlock => TransportError::Timeout,
                _ => TransportError::Other(io.to_string()),
            },
            other => TransportError::Other(other.to_string()),
        };
        let mut resp = builder.send(&req.body[..]).map_err(map_err)?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .with_config()
            .limit(MAX_RESPONSE_BYTES)
            .read_to_vec()
            .map_err(map_err)?;
        Ok(HttpResponse {
            status,
            body,
            latency_ms: started.elapsed().as_millis() as u64,
        })
    }
}

/// One recorded outcome in a fixture response file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponse {
    #[serde(default)]
    pub status: u16,
    #[serde(default)]
    pub latency_ms: u64,
    #[serde(default)]
    pub body: String,
    /// `"timeout"` or `"connect"` for transport-level failures.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl RecordedResponse {
    fn outcome(&self) -> Result<HttpResponse, TransportError> {
        match self.error.as_deref() {
            Some("timeout") => Err(TransportError::Timeout),
            Some("connect") => Err(TransportError::Connect("recorded connection failure".into())),
            Some(other) => Err(TransportError::Other(other.to_string())),
            None => Ok(HttpResponse {
                status: self.status,
                body: self.body.clone().into_bytes(),
                latency_ms: self.latency_ms,
            }),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FixtureResponseFile {
    path: String,
    responses: Vec<RecordedResponse>,
}

struct Fixture {
    name: String,
    path: String,
    body_hash: String,
    responses: Vec<RecordedResponse>,
    served: AtomicUsize,
}

/// Serves paired fixtures: `<name>.request.json` holds the exact request
/// body, `<name>.response.json` holds `{"path", "responses": [...]}`. A
/// request matches on URL path suffix and body bytes; successive identical
/// requests walk through `responses`, repeating the last.
pub struct ReplayTransport {
    fixtures: Vec<Fixture>,
}

impl ReplayTransport {
    pub fn load(dir: &Path) -> std::io::Result<Self> {
        let mut fixtures = Vec::new();
        let mut names: Vec<PathBuf> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.to_string_lossy().ends_with(".request.json"))
            .collect();
        names.sort();
        for req_path in names {
            let file = req_path.file_name().unwrap().to_string_lossy().to_string();
            let name = file.trim_end_matches(".request.json").to_string();
            let body = fs::read(&req_path)?;
            let resp_path = dir.join(format!("{name}.response.json"));
            let text = fs::read_to_string(&resp_path)?;
            let resp: FixtureResponseFile = serde_json::from_str(&text).map_err(|e| {
                std::io::Error::new(std::io::ErrorKind::InvalidData, format!("{}: {e}", resp_path.display()))
            })?;
            fixtures.push(Fixture {
                name,
                path: resp.path,
                body_hash: sha256_hex(&body),
                responses: resp.responses,
                served: AtomicUsize::new(0),
            });
        }
        Ok(Self { fixtures })
    }

    pub fn len(&self) -> usize {
        self.fixtures.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fixtures.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.fixtures.iter().map(|f| f.name.as_str()).collect()
    }
}

impl HttpTransport for ReplayTransport {
    fn post(&self, req: &HttpRequest, _timeout: Duration) -> Result<HttpResponse, TransportError> {
        let body_hash = sha256_hex(&req.body);
        let f = self
            .fixtures
            .iter()
            .find(|f| f.body_hash == body_hash && req.url.ends_with(&f.path))
            .ok_or_else(|| TransportError::Other(format!("no recorded fixture for {}", req.url)))?;
        let i = f.served.fetch_add(1, Ordering::SeqCst);
        let r = f
            .responses
            .get(i)
            .or_else(|| f.responses.last())
            .ok_or_else(|| TransportError::Other(format!("fixture {} has no responses", f.name)))?;
        r.outcome()
    }
}

/// Forwards to an inner transport and writes each exchange as a fixture.
pub struct RecordingTransport<T: HttpTransport> {
    inner: T,
    dir: PathBuf,
    base_url: String,
    counter: AtomicUsize,
}

impl<T: HttpTransport> RecordingTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>, base_url: impl Into<String>) -> Self {
        Self {
            inner,
            dir: dir.into(),
            base_url: base_url.into(),
            counter: AtomicUsize::new(0),
        }
    }
}

impl<T: HttpTransport> HttpTransport for RecordingTransport<T> {
    fn post(&self, req: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportError> {
        let result = self.inner.post(req, timeout);
        let n = self.counter.fetch_add(1, Ordering::SeqCst);
        let name = format!("{n:04}");
        let recorded = match &result {
            Ok(r) => RecordedResponse {
                status: r.status,
                latency_ms: r.latency_ms,
                body: String::from_utf8_lossy(&r.body).into_owned(),
                error: None,
            },
            Err(e) => RecordedResponse {
                status: 0,
                latency_ms: 0,
                body: String::new(),
                error: Some(match e {
                    TransportError::Timeout => "timeout".into(),
                    TransportError::Connect(_) => "connect".into(),
                    TransportError::Other(m) => m.clone(),
                }),
            },
        };
        let path = req.url.strip_prefix(&self.base_url).unwrap_or(&req.url).to_string();
        let file = FixtureResponseFile {
            path,
            responses: vec![recorded],
        };
        let _ = fs::create_dir_all(&self.dir);
        let _ = fs::write(self.dir.join(format!("{name}.request.json")), &req.body);
        let _ = fs::write(
            self.dir.join(format!("{name}.response.json")),
            serde_json::to_string_pretty(&file).expect("fixture serializes"),
        );
        result
    }
}

/// Pops pre-programmed outcomes in order and keeps every request it saw.
#[derive(Default)]
pub struct ScriptedTransport {
    script: Mutex<VecDeque<Result<HttpResponse, TransportError>>>,
    seen: Mutex<Vec<HttpRequest>>,
    /// Simulated per-request service time.
    pub delay: Duration,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
}

impl ScriptedTransport {
    pub fn new(script: impl IntoIterator<Item = Result<HttpResponse, TransportError>>) -> Self {
        Self {
            script: Mutex::new(script.into_iter().collect()),
            ..Default::default()
        }
    }

    pub fn status(status: u16, body: &str) -> Result<HttpResponse, TransportError> {
        Ok(HttpResponse {
            status,
            body: body.as_bytes().to_vec(),
            latency_ms: 5,
        })
    }

    pub fn push(&self, outcome: Result<HttpResponse, TransportError>) {
        self.script.lock().unwrap().push_back(outcome);
    }

    pub fn requests(&self) -> Vec<HttpRequest> {
        self.seen.lock().unwrap().clone()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

impl HttpTransport for ScriptedTransport {
    fn post(&self, req: &HttpRequest, _timeout: Duration) -> Result<HttpResponse, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        self.seen.lock().unwrap().push(req.clone());
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        let next = self
            .script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or_else(|| Err(TransportError::Other("script exhausted".into())));
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        next
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested delays without waiting.
#[derive(Default)]
pub struct RecordingSleeper {
    slept: Mutex<Vec<Duration>>,
}

impl RecordingSleeper {
    pub fn delays(&self) -> Vec<Duration> {
        self.slept.lock().unwrap().clone()
    }
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.slept.lock().unwrap().push(d);
    }
}

/// Counting semaphore that also tracks its high-water mark.
struct Limiter {
    max: usize,
    state: Mutex<(usize, usize)>,
    cv: Condvar,
}

struct Permit<'a>(&'a Limiter);

impl Limiter {
    fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            state: Mutex::new((0, 0)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut s = self.state.lock().unwrap();
        while s.0 >= self.max {
            s = self.cv.wait(s).unwrap();
        }
        s.0 += 1;
        s.1 = s.1.max(s.0);
        Permit(self)
    }

    fn peak(&self) -> usize {
        self.state.lock().unwrap().1
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut s = self.0.state.lock().unwrap();
        s.0 -= 1;
        self.0.cv.notify_one();
    }
}

/// Retrying JSON POST client for one endpoint.
///
/// Retries 429, 5xx and timeouts with exponential backoff and deterministic
/// jitter; 401/403 and unreachable hosts fail immediately.
pub struct EndpointClient {
    pub config: EndpointConfig,
    transport: Arc<dyn HttpTransport>,
    sleeper: Arc<dyn Sleeper>,
    limiter: Limiter,
    token: Option<String>,
}

impl EndpointClient {
    pub fn new(config: EndpointConfig, transport: Arc<dyn HttpTransport>) -> Result<Self, ServiceError> {
        config.validate()?;
        let token = match &config.auth_token_env {
            Some(var) => Some(
                std::env::var(var)
                    .map_err(|_| ServiceError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        Ok(Self {
            limiter: Limiter::new(config.max_in_flight),
            config,
            transport,
            sleeper: Arc::new(ThreadSleeper),
            token,
        })
    }

    pub fn live(config: EndpointConfig) -> Result<Self, ServiceError> {
        let timeout = Duration::from_secs_f64(config.timeout_s.max(0.001));
        Self::new(config, Arc::new(UreqTransport::new(timeout)))
    }

    pub fn with_sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    /// Highest number of simultaneous requests observed.
    pub fn peak_in_flight(&self) -> usize {
        self.limiter.peak()
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{}", self.config.base_url.trim_end_matches('/'), path)
    }

    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, body: &[u8], retry: u32) -> Duration {
        let r = &self.config.retry;
        let base = r.base_backoff_ms as f64 * r.backoff_factor.powi(retry as i32 - 1);
        let h = hash_parts(&[body, &retry.to_le_bytes()]);
        let u = u64::from_le_bytes(h[..8].try_into().unwrap()) as f64 / u64::MAX as f64;
        let jitter = 1.0 + r.jitter_fraction * (2.0 * u - 1.0);
        Duration::from_secs_f64((base * jitter).max(0.0) / 1000.0)
    }

    /// POSTs `body` to `path`; returns the 2xx response and attempts used.
    pub fn post_json(&self, path: &str, body: Vec<u8>) -> Result<(HttpResponse, u32), ServiceError> {
        let mut headers = vec![("Content-Type".to_string(), "application/json".to_string())];
        if let Some(t) = &self.token {
            headers.push(("Authorization".to_string(), format!("Bearer {t}")));
        }
        let req = HttpRequest {
            url: self.url(path),
            headers,
            body,
        };
        let timeout = Duration::from_secs_f64(self.config.timeout_s);
        let max = self.config.retry.max_attempts.max(1);
        let mut last = ServiceError::Timeout { attempts: 0 };
        for attempt in 1..=max {
            let outcome = {
                let _permit = self.limiter.acquire();
                self.transport.post(&req, timeout)
            };
            match outcome {
                Ok(r) if (200..300).contains(&r.status) => return Ok((r, attempt)),
                Ok(r) if r.status == 401 || r.status == 403 => return Err(ServiceError::Auth { status: r.status }),
                Ok(r) if r.status == 429 => last = ServiceError::RateLimited { attempts: attempt },
                Ok(r) if r.status >= 500 => {
                    last = ServiceError::ServerError {
                        status: r.status,
                        attempts: attempt,
                    }
                }
                Ok(r) => {
                    let mut body = String::from_utf8_lossy(&r.body).into_owned();
                    body.truncate(300);
                    return Err(ServiceError::Http { status: r.status, body });
                }
                Err(TransportError::Timeout) => last = ServiceError::Timeout { attempts: attempt },
                Err(TransportError::Connect(m)) => return Err(ServiceError::Unreachable(m)),
                Err(TransportError::Other(m)) => return Err(ServiceError::Protocol(m)),
            }
            log::debug!("{} attempt {attempt}/{max} failed: {last}", req.url);
            if attempt < max {
                self.sleeper.sleep(self.backoff(&req.body, attempt));
            }
        }
        Err(last)
    }
}
