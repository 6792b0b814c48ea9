//! Chat-completions client: the only network boundary of the crate.
//!
//! Requests go to `POST {base_url}/chat/completions` with the body
//! `{model, messages, temperature}`. The API key is read from
//! `AUTOEP_API_KEY` and is scrubbed from every error, log line and
//! returned text.

use std::fmt;
use std::io::Write as _;
use std::path::PathBuf;
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;
use serde_json::{json, Value};
use thiserror::Error;

pub const API_KEY_ENV: &str = "AUTOEP_API_KEY";
const SCRUBBED: &str = "[REDACTED]";

/// Secret string whose `Debug` and `Display` never show the value.
#[derive(Clone, PartialEq, Eq)]
pub struct ApiKey(String);

impl ApiKey {
    pub fn new(key: impl Into<String>) -> Self {
        Self(key.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()).map(Self)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("ApiKey([REDACTED])")
    }
}

impl fmt::Display for ApiKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(SCRUBBED)
    }
}

#[derive(Debug, Clone)]
pub struct LlmConfig {
    pub base_url: String,
    pub model_name: String,
    pub api_key: Option<ApiKey>,
    pub timeout_ms: u64,
    pub max_retries: u32,
    pub temperature: f64,
    pub concurrency_limit: usize,
    /// First backoff delay; doubles on every further retry.
    pub backoff_ms: u64,
    /// Mirror of every request and response, key-scrubbed.
    pub debug_log: Option<PathBuf>,
}

impl LlmConfig {
    pub fn new(base_url: impl Into<String>, model_name: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            model_name: model_name.into(),
            api_key: ApiKey::from_env(),
            timeout_ms: 60_000,
            max_retries: 1,
            temperature: 0.2,
            concurrency_limit: 4,
            backoff_ms: 250,
            debug_log: None,
        }
    }

    pub fn validate(&self) -> Result<(), LlmError> {
        if self.base_url.trim().is_empty() {
            return Err(LlmError::Config("base_url is empty".into()));
        }
        if self.timeout_ms == 0 {
            return Err(LlmError::Config("timeout_ms must be positive".into()));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(LlmError::Config(format!("temperature {} outside [0, 2]", self.temperature)));
        }
        if self.concurrency_limit == 0 {
            return Err(LlmError::Config("concurrency_limit must be positive".into()));
        }
        Ok(())
    }

    fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LlmError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("endpoint returned status {code}: {body}")]
    Status { code: u16, body: String },
    #[error("no response within {after_ms} ms")]
    Timeout { after_ms: u64 },
    #[error("could not decode response: {0}")]
    Decode(String),
}

impl LlmError {
    fn retryable(&self) -> bool {
        match self {
            LlmError::Network(_) | LlmError::Timeout { .. } => true,
            LlmError::Status { code, .. } => *code == 429 || *code >= 500,
            LlmError::Config(_) | LlmError::Decode(_) => false,
        }
    }
}

/// Anything that can answer a system + user message pair.
pub trait ChatBackend: Send + Sync {
    fn chat(&self, system: &str, user: &str) -> Result<String, LlmError>;
}

/// Upper edges (ms) of the latency histogram buckets; the last bucket is open.
pub const LATENCY_BUCKETS_MS: [u64; 7] = [10, 50, 100, 500, 1_000, 5_000, 30_000];

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CallStats {
    pub calls: u64,
    pub failures: u64,
    pub total_latency_ms: f64,
    pub histogram: [u64; LATENCY_BUCKETS_MS.len() + 1],
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl CallStats {
    pub fn mean_latency_ms(&self) -> Option<f64> {
        (self.calls > 0).then(|| self.total_latency_ms / self.calls as f64)
    }

    fn record(&mut self, latency: Duration, ok: bool) {
        let ms = latency.as_secs_f64() * 1e3;
        self.calls += 1;
        self.failures += u64::from(!ok);
        self.total_latency_ms += ms;
        let bucket = LATENCY_BUCKETS_MS.iter().position(|&edge| ms < edge as f64).unwrap_or(LATENCY_BUCKETS_MS.len());
        self.histogram[bucket] += 1;
    }
}

struct Limiter {
    free: Mutex<usize>,
    cv: Condvar,
}

impl Limiter {
    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap_or_else(|e| e.into_inner());
        while *free == 0 {
            free = self.cv.wait(free).unwrap_or_else(|e| e.into_inner());
        }
        *free -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

pub struct LlmClient {
    config: LlmConfig,
    agent: ureq::Agent,
    stats: Mutex<CallStats>,
    limiter: Limiter,
    debug: Mutex<()>,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient").field("config", &self.config).finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        config.validate()?;
        let agent = ureq::AgentBuilder::new().timeout(Duration::from_millis(config.timeout_ms)).build();
        let limiter = Limiter { free: Mutex::new(config.concurrency_limit), cv: Condvar::new() };
        Ok(Self { config, agent, stats: Mutex::new(CallStats::default()), limiter, debug: Mutex::new(()) })
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn stats(&self) -> CallStats {
        self.stats.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Replaces every occurrence of the API key with a marker.
    pub fn scrub(&self, text: &str) -> String {
        match &self.config.api_key {
            Some(k) if !k.expose().is_empty() => text.replace(k.expose(), SCRUBBED),
            _ => text.to_string(),
        }
    }

    fn mirror(&self, direction: &str, text: &str) {
        let Some(path) = &self.config.debug_log else { return };
        let line = json!({ "direction": direction, "text": self.scrub(text) });
        let _guard = self.debug.lock().unwrap_or_else(|e| e.into_inner());
        let written = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::warn!("cannot write LLM debug log {}: {e}", path.display());
        }
    }

    fn attempt(&self, body: &Value) -> Result<String, LlmError> {
        let mut request = self.agent.post(&self.config.endpoint()).set("Content-Type", "application/json");
        if let Some(key) = &self.config.api_key {
            request = request.set("Authorization", &format!("Bearer {}", key.expose()));
        }
        let started = Instant::now();
        let response = match request.send_json(body.clone()) {
            Ok(r) => r,
            Err(ureq::Error::Status(code, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(LlmError::Status { code, body: self.scrub(&body) });
            }
            Err(ureq::Error::Transport(t)) => {
                let message = self.scrub(&t.to_string());
                let deadline = Duration::from_millis(self.config.timeout_ms);
                return Err(if message.contains("timed out") || started.elapsed() >= deadline {
                    LlmError::Timeout { after_ms: self.config.timeout_ms }
                } else {
                    LlmError::Network(message)
                });
            }
        };
        let text = response.into_string().map_err(|e| {
            if e.kind() == std::io::ErrorKind::TimedOut || e.kind() == std::io::ErrorKind::WouldBlock {
                LlmError::Timeout { after_ms: self.config.timeout_ms }
            } else {
                LlmError::Network(self.scrub(&e.to_string()))
            }
        })?;
        self.mirror("response", &text);
        let value: Value = serde_json::from_str(&text).map_err(|e| LlmError::Decode(e.to_string()))?;
        let content = value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Decode("missing choices[0].message.content".into()))?;
        if let Some(usage) = value.get("usage") {
            let mut stats = self.stats.lock().unwrap_or_else(|e| e.into_inner());
            stats.prompt_tokens += usage.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0);
            stats.completion_tokens += usage.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0);
        }
        Ok(self.scrub(content))
    }
}

impl ChatBackend for LlmClient {
    fn chat(&self, system: &str, user: &str) -> Result<String, LlmError> {
        let body = json!({
            "model": self.config.model_name,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": user },
            ],
            "temperature": self.config.temperature,
        });
        self.mirror("request", &body.to_string());
        let _permit = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            let started = Instant::now();
            let result = self.attempt(&body);
            self.stats.lock().unwrap_or_else(|e| e.into_inner()).record(started.elapsed(), result.is_ok());
            match result {
                Err(e) if e.retryable() && attempt < self.config.max_retries => {
                    let delay = self.config.backoff_ms.saturating_mul(1 << attempt.min(16));
                    log::warn!("LLM call failed ({e}); retrying in {delay} ms");
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => {
                    log::warn!("LLM call failed after {} attempt(s): {e}", attempt + 1);
                    return Err(e);
                }
                Ok(text) => return Ok(text),
            }
        }
    }
}

/// Minimal HTTP stub standing in for a chat-completions endpoint.
pub mod stub {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::{SocketAddr, TcpListener, TcpStream};
    use std::sync::atomic::{AtomicBool, Ordering};
    use std::sync::{Arc, Mutex};
    use std::thread::JoinHandle;
    use std::time::Duration;

    use serde_json::json;

    #[derive(Debug, Clone, PartialEq)]
    pub struct StubRequest {
        pub path: String,
        pub headers: Vec<(String, String)>,
        pub body: String,
    }

    impl StubRequest {
        pub fn header(&self, name: &str) -> Option<&str> {
            self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
        }
    }

    #[derive(Debug, Clone)]
    pub struct StubResponse {
        pub status: u16,
        pub body: String,
        pub delay: Duration,
    }

    impl StubResponse {
        /// A successful completion carrying `content`.
        pub fn completion(content: &str) -> Self {
            let body = json!({
                "choices": [{ "index": 0, "message": { "role": "assistant", "content": content } }],
                "usage": { "prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15 },
            });
            Self { status: 200, body: body.to_string(), delay: Duration::ZERO }
        }

        pub fn status(status: u16) -> Self {
            Self { status, body: "{\"error\":\"stub\"}".into(), delay: Duration::ZERO }
        }

        pub fn delayed(mut self, delay: Duration) -> Self {
            self.delay = delay;
            self
        }
    }

    type Handler = dyn Fn(&StubRequest) -> StubResponse + Send + Sync;

    pub struct StubServer {
        addr: SocketAddr,
        stop: Arc<AtomicBool>,
        requests: Arc<Mutex<Vec<StubRequest>>>,
        thread: Option<JoinHandle<()>>,
    }

    impl StubServer {
        pub fn start(handler: impl Fn(&StubRequest) -> StubResponse + Send + Sync + 'static) -> std::io::Result<Self> {
            let listener = TcpListener::bind("127.0.0.1:0")?;
            let addr = listener.local_addr()?;
            let stop = Arc::new(AtomicBool::new(false));
            let requests = Arc::new(Mutex::new(Vec::new()));
            let handler: Arc<Handler> = Arc::new(handler);
            let (stop2, requests2) = (stop.clone(), requests.clone());
            let thread = std::thread::spawn(move || {
                for stream in listener.incoming() {
                    if stop2.load(Ordering::SeqCst) {
                        break;
                    }
                    let Ok(stream) = stream else { continue };
                    let (handler, requests) = (handler.clone(), requests2.clone());
                    std::thread::spawn(move || {
                        let _ = serve(stream, &*handler, &requests);
                    });
                }
            });
            Ok(Self { addr, stop, requests, thread: Some(thread) })
        }

        pub fn base_url(&self) -> String {
            format!("http://{}", self.addr)
        }

        pub fn requests(&self) -> Vec<StubRequest> {
            self.requests.lock().unwrap().clone()
        }
    }

    impl Drop for StubServer {
        fn drop(&mut self) {
            self.stop.store(true, Ordering::SeqCst);
            let _ = TcpStream::connect(self.addr);
            if let Some(t) = self.thread.take() {
                let _ = t.join();
            }
        }
    }

    fn serve(stream: TcpStream, handler: &Handler, requests: &Mutex<Vec<StubRequest>>) -> std::io::Result<()> {
        let mut reader = BufReader::new(stream.try_clone()?);
        let mut line = String::new();
        reader.read_line(&mut line)?;
        let path = line.split_whitespace().nth(1).unwrap_or("").to_string();
        let mut headers = Vec::new();
        loop {
            line.clear();
            if reader.read_line(&mut line)? == 0 || line.trim().is_empty() {
                break;
            }
            if let Some((k, v)) = line.split_once(':') {
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
        }
        let len = headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
            .and_then(|(_, v)| v.parse().ok())
            .unwrap_or(0);
        let mut body = vec![0; len];
        reader.read_exact(&mut body)?;
        let request = StubRequest { path, headers, body: String::from_utf8_lossy(&body).into_owned() };
        let response = handler(&request);
        requests.lock().unwrap().push(request);
        std::thread::sleep(response.delay);
        let mut stream = stream;
        write!(
            stream,
            "HTTP/1.1 {} STUB\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{}",
            response.status,
            response.body.len(),
            response.body
        )?;
        stream.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::stub::{StubResponse, StubServer};
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::sync::Arc;

    fn config(server: &StubServer) -> LlmConfig {
        let mut c = LlmConfig::new(server.base_url(), "stub-model");
        c.api_key = Some(ApiKey::new("sk-test-secret-123"));
        c.backoff_ms = 5;
        c.timeout_ms = 2_000;
        c
    }

    #[test]
    fn echo_completion() {
        let server = StubServer::start(|_| StubResponse::completion("{\"axis\": \"Hold\"}")).unwrap();
        let client = LlmClient::new(config(&server)).unwrap();
        assert_eq!(client.chat("sys", "user").unwrap(), "{\"axis\": \"Hold\"}");
        let reqs = server.requests();
        assert_eq!(reqs.len(), 1);
        assert_eq!(reqs[0].path, "/chat/completions");
        let body: Value = serde_json::from_str(&reqs[0].body).unwrap();
        assert_eq!(body["model"], "stub-model");
        assert_eq!(body["messages"][0]["role"], "system");
        assert_eq!(body["messages"][1]["content"], "user");
        assert_eq!(body["temperature"], 0.2);
        assert_eq!(reqs[0].header("authorization"), Some("Bearer sk-test-secret-123"));
        let stats = client.stats();
        assert_eq!((stats.calls, stats.prompt_tokens, stats.completion_tokens), (1, 10, 5));
        assert_eq!(stats.histogram.iter().sum::<u64>(), 1);
    }

    #[test]
    fn server_error_exhausts_retries() {
        let hits = Arc::new(AtomicUsize::new(0));
        let h = hits.clone();
        let server = StubServer::start(move |_| {
            h.fetch_add(1, Ordering::SeqCst);
            StubResponse::status(500)
        })
        .unwrap();
        let client = LlmClient::new(config(&server)).unwrap();
        let err = client.chat("s", "u").unwrap_err();
        assert!(matches!(err, LlmError::Status { code: 500, .. }), "{err:?}");
        assert_eq!(hits.load(Ordering::SeqCst), 2);
        assert_eq!(client.stats().failures, 2);
    }

    #[test]
    fn client_errors_are_not_retried() {
        let server = StubServer::start(|_| StubResponse::status(400)).unwrap();
        let client = LlmClient::new(config(&server)).unwrap();
        assert!(matches!(client.chat("s", "u"), Err(LlmError::Status { code: 400, .. })));
        assert_eq!(server.requests().len(), 1);
    }

    #[test]
    fn slow_server_times_out() {
        let server = StubServer::start(|_| StubResponse::completion("late").delayed(Duration::from_millis(600))).unwrap();
        let mut c = config(&server);
        c.timeout_ms = 150;
        c.max_retries = 0;
        let client = LlmClient::new(c).unwrap();
        assert_eq!(client.chat("s", "u"), Err(LlmError::Timeout { after_ms: 150 }));
    }

    #[test]
    fn malformed_body_is_decode_error() {
        let server = StubServer::start(|_| StubResponse { status: 200, body: "[]".into(), delay: Duration::ZERO }).unwrap();
        let client = LlmClient::new(config(&server)).unwrap();
        assert!(matches!(client.chat("s", "u"), Err(LlmError::Decode(_))));
    }

    #[test]
    fn key_is_scrubbed_everywhere() {
        // A hostile endpoint echoes the Authorization header back.
        let server = StubServer::start(|req| {
            let auth = req.header("authorization").unwrap_or("").to_string();
            if req.body.contains("fail") {
                StubResponse { status: 503, body: auth, delay: Duration::ZERO }
            } else {
                StubResponse::completion(&auth)
            }
        })
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let log_path = dir.path().join("llm.log");
        let mut c = config(&server);
        c.debug_log = Some(log_path.clone());
        c.max_retries = 0;
        let client = LlmClient::new(c.clone()).unwrap();
        let text = client.chat("s", "u").unwrap();
        assert!(!text.contains("sk-test-secret-123"));
        let err = client.chat("s", "fail").unwrap_err();
        assert!(!err.to_string().contains("sk-test-secret-123"));
        assert!(!format!("{c:?}").contains("sk-test-secret-123"));
        assert!(!format!("{client:?}").contains("sk-test-secret-123"));
        let log = std::fs::read_to_string(log_path).unwrap();
        assert!(log.contains(SCRUBBED));
        assert!(!log.contains("sk-test-secret-123"));
    }

    #[test]
    fn unreachable_endpoint_is_network_error() {
        let addr = {
            let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
            l.local_addr().unwrap()
        };
        let mut c = LlmConfig::new(format!("http://{addr}"), "m");
        c.max_retries = 0;
        let client = LlmClient::new(c).unwrap();
        assert!(matches!(client.chat("s", "u"), Err(LlmError::Network(_))));
    }

    #[test]
    fn config_validation() {
        assert!(LlmConfig::new("", "m").validate().is_err());
        let mut c = LlmConfig::new("http://x", "m");
        c.temperature = 2.5;
        assert!(c.validate().is_err());
        c.temperature = 0.2;
        assert!(c.validate().is_ok());
        assert_eq!((c.timeout_ms, c.max_retries, c.concurrency_limit), (60_000, 1, 4));
    }
}
