//! Completion backends: a hosted chat-completions endpoint, a replay store
//! keyed on content hashes, and a scripted mock.
//!
//! Fixture files are line-delimited JSON, one `FixtureRecord` per line:
//!
//! ```text
//! {"key":"<sha256 hex>","model":"gpt-4o","prompt":"...","completion":"...","timestamp":"..."}
//! ```
//!
//! The key is `sha256(len(model) ":" model prompt)` in lowercase hex, so
//! fixtures for several models can share a file.

use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, OnceLock};
use std::time::{Duration, Instant};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_MODEL: &str = "gpt-4o";
pub const MAX_TRIES: u32 = 3;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("no replay fixture for key {key}")]
    ReplayMiss { key: String },
    #[error("scripted mock has no responses left")]
    MockExhausted,
    #[error("fixture storage failure: {0}")]
    StorageFailure(String),
    #[error("fixture parse error at line {line}: {message}")]
    FixtureParse { line: usize, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRequest {
    pub prompt: String,
    pub model_name: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub timeout: Duration,
}

impl CompletionRequest {
    pub fn new(prompt: impl Into<String>) -> Self {
        Self {
            prompt: prompt.into(),
            model_name: DEFAULT_MODEL.to_owned(),
            temperature: 0.0,
            max_output_tokens: 1024,
            timeout: Duration::from_secs(60),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model_name = model.into();
        self
    }

    fn validate(&self) -> Result<(), GatewayError> {
        if self.prompt.is_empty() {
            return Err(GatewayError::InvalidRequest("prompt is empty".into()));
        }
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn key(&self) -> String {
        fixture_key(&self.model_name, &self.prompt)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub backend_id: String,
    pub latency: Duration,
    pub from_cache: bool,
}

pub trait CompletionBackend: Send + Sync {
    fn id(&self) -> &str;
    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError>;
}

pub fn fixture_key(model: &str, prompt: &str) -> String {
    let mut h = Sha256::new();
    h.update(model.len().to_string().as_bytes());
    h.update(b":");
    h.update(model.as_bytes());
    h.update(prompt.as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureRecord {
    pub key: String,
    pub model: String,
    pub prompt: String,
    pub completion: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<DateTime<Utc>>,
}

impl FixtureRecord {
    pub fn new(model: &str, prompt: &str, completion: &str) -> Self {
        Self {
            key: fixture_key(model, prompt),
            model: model.to_owned(),
            prompt: prompt.to_owned(),
            completion: completion.to_owned(),
            timestamp: None,
        }
    }
}

/// Reads a fixture file. Blank lines are skipped; anything else that does
/// not parse, or whose key does not match its content, is an error.
pub fn load_fixtures(path: &Path) -> Result<Vec<FixtureRecord>, GatewayError> {
    let file = File::open(path).map_err(|e| GatewayError::StorageFailure(format!("{}: {e}", path.display())))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| GatewayError::FixtureParse { line: line_no, message: e.to_string() })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: FixtureRecord = serde_json::from_str(&line)
            .map_err(|e| GatewayError::FixtureParse { line: line_no, message: e.to_string() })?;
        if rec.key != fixture_key(&rec.model, &rec.prompt) {
            return Err(GatewayError::FixtureParse { line: line_no, message: "key does not match model/prompt".into() });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Append-only fixture writer. First write for a key wins.
#[derive(Debug)]
pub struct FixtureWriter {
    path: PathBuf,
    inner: Mutex<(File, std::collections::HashSet<String>)>,
}

impl FixtureWriter {
    pub fn open(path: &Path) -> Result<Self, GatewayError> {
        let keys = if path.exists() {
            load_fixtures(path)?.into_iter().map(|r| r.key).collect()
        } else {
            Default::default()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| GatewayError::StorageFailure(e.to_string()))?;
        Ok(Self { path: path.to_owned(), inner: Mutex::new((file, keys)) })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Returns whether a new record was appended.
    pub fn record(&self, req: &CompletionRequest, result: &CompletionResult) -> Result<bool, GatewayError> {
        let key = req.key();
        let mut guard = self.inner.lock().unwrap();
        let (file, keys) = &mut *guard;
        if keys.contains(&key) {
            return Ok(false);
        }
        let rec = FixtureRecord {
            key: key.clone(),
            model: req.model_name.clone(),
            prompt: req.prompt.clone(),
            completion: result.text.clone(),
            timestamp: Some(Utc::now()),
        };
        let mut line = serde_json::to_string(&rec).map_err(|e| GatewayError::StorageFailure(e.to_string()))?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.sync_data())
            .map_err(|e| GatewayError::StorageFailure(e.to_string()))?;
        keys.insert(key);
        Ok(true)
    }
}

/// Answers only from recorded fixtures; never falls through to a live call.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    entries: HashMap<String, String>,
}

impl ReplayBackend {
    pub fn load(path: &Path) -> Result<Self, GatewayError> {
        Ok(Self::from_records(load_fixtures(path)?))
    }

    pub fn from_records(records: impl IntoIterator<Item = FixtureRecord>) -> Self {
        let mut entries = HashMap::new();
        for r in records {
            entries.entry(r.key).or_insert(r.completion);
        }
        Self { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl CompletionBackend for ReplayBackend {
    fn id(&self) -> &str {
        "replay"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        req.validate()?;
        let start = Instant::now();
        let key = req.key();
        match self.entries.get(&key) {
            Some(text) => Ok(CompletionResult {
                text: text.clone(),
                backend_id: self.id().to_owned(),
                latency: start.elapsed(),
                from_cache: true,
            }),
            None => Err(GatewayError::ReplayMiss { key }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MockReply {
    Text(String),
    Unavailable,
}

/// Returns queued replies in order, and remembers every prompt it saw.
#[derive(Debug, Default)]
pub struct ScriptedMock {
    queue: Mutex<VecDeque<MockReply>>,
    calls: Mutex<Vec<String>>,
}

impl ScriptedMock {
    pub fn new(replies: impl IntoIterator<Item = MockReply>) -> Self {
        Self { queue: Mutex::new(replies.into_iter().collect()), calls: Mutex::default() }
    }

    pub fn with_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| MockReply::Text(t.into())))
    }

    pub fn push(&self, reply: MockReply) {
        self.queue.lock().unwrap().push_back(reply);
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }
}

impl CompletionBackend for ScriptedMock {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        req.validate()?;
        self.calls.lock().unwrap().push(req.prompt.clone());
        match self.queue.lock().unwrap().pop_front() {
            Some(MockReply::Text(text)) => Ok(CompletionResult {
                text,
                backend_id: self.id().to_owned(),
                latency: Duration::ZERO,
                from_cache: false,
            }),
            Some(MockReply::Unavailable) => Err(GatewayError::BackendUnavailable("scripted outage".into())),
            None => Err(GatewayError::MockExhausted),
        }
    }
}

/// Settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LiveConfig {
    pub endpoint: String,
    pub model: String,
    pub api_key_env: String,
}

impl Default for LiveConfig {
    fn default() -> Self {
        Self {
            endpoint: "https://api.openai.com/v1/chat/completions".into(),
            model: DEFAULT_MODEL.into(),
            api_key_env: "OPENAI_API_KEY".into(),
        }
    }
}

pub struct LiveBackend {
    config: LiveConfig,
    api_key: String,
    client: OnceLock<reqwest::blocking::Client>,
    recorder: Option<FixtureWriter>,
    base_backoff: Duration,
}

#[derive(Serialize)]
struct ChatRequest<'a> {
    model: &'a str,
    messages: [ChatMessage<'a>; 1],
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct ChatMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatReply,
}

#[derive(Deserialize)]
struct ChatReply {
    #[serde(default)]
    content: Option<String>,
}

enum TryError {
    Retry(String),
    Fatal(String),
}

impl LiveBackend {
    /// Reads the API key from the configured environment variable.
    pub fn from_env(config: LiveConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| GatewayError::BackendUnavailable(format!("environment variable {} not set", config.api_key_env)))?;
        Ok(Self::new(config, api_key))
    }

    pub fn new(config: LiveConfig, api_key: String) -> Self {
        Self { config, api_key, client: OnceLock::new(), recorder: None, base_backoff: Duration::from_millis(500) }
    }

    pub fn with_recorder(mut self, recorder: FixtureWriter) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn with_base_backoff(mut self, backoff: Duration) -> Self {
        self.base_backoff = backoff;
        self
    }

    pub fn model(&self) -> &str {
        &self.config.model
    }

    fn try_once(&self, req: &CompletionRequest, timeout: Duration) -> Result<String, TryError> {
        let client = self.client.get_or_init(reqwest::blocking::Client::new);
        let body = ChatRequest {
            model: &req.model_name,
            messages: [ChatMessage { role: "user", content: &req.prompt }],
            temperature: req.temperature,
            max_tokens: req.max_output_tokens,
        };
        let resp = client
            .post(&self.config.endpoint)
            .bearer_auth(&self.api_key)
            .timeout(timeout)
            .json(&body)
            .send()
            .map_err(|e| TryError::Retry(e.to_string()))?;
        let status = resp.status();
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(TryError::Retry(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(TryError::Fatal(format!("HTTP {status}")));
        }
        let parsed: ChatResponse = resp.json().map_err(|e| TryError::Retry(e.to_string()))?;
        Ok(parsed.choices.into_iter().next().and_then(|c| c.message.content).unwrap_or_default())
    }
}

impl CompletionBackend for LiveBackend {
    fn id(&self) -> &str {
        "live"
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        req.validate()?;
        let start = Instant::now();
        let deadline = start + req.timeout * MAX_TRIES;
        let mut last = String::new();
        for attempt in 0..MAX_TRIES {
            let remaining = deadline.saturating_duration_since(Instant::now());
            if remaining.is_zero() {
                break;
            }
            match self.try_once(req, req.timeout.min(remaining)) {
                Ok(text) => {
                    let result = CompletionResult {
                        text,
                        backend_id: self.id().to_owned(),
                        latency: start.elapsed(),
                        from_cache: false,
                    };
                    if let Some(rec) = &self.recorder {
                        rec.record(req, &result)?;
                    }
                    return Ok(result);
                }
                Err(TryError::Fatal(e)) => return Err(GatewayError::BackendUnavailable(e)),
                Err(TryError::Retry(e)) => {
                    tracing::warn!(attempt, error = %e, "completion request failed");
                    last = e;
                }
            }
            if attempt + 1 < MAX_TRIES {
                let pause = self.base_backoff * 2u32.pow(attempt);
                if Instant::now() + pause >= deadline {
                    break;
                }
                std::thread::sleep(pause);
            }
        }
        Err(GatewayError::BackendUnavailable(last))
    }
}

/// Wraps a backend and appends the key of every request to a log file.
/// Used to audit how many calls a run actually made.
pub struct LoggedBackend<B> {
    inner: B,
    log: Mutex<File>,
}

impl<B: CompletionBackend> LoggedBackend<B> {
    pub fn new(inner: B, log_path: &Path) -> Result<Self, GatewayError> {
        let log = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log_path)
            .map_err(|e| GatewayError::StorageFailure(e.to_string()))?;
        Ok(Self { inner, log: Mutex::new(log) })
    }
}

impl<B: CompletionBackend> CompletionBackend for LoggedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        {
            let mut log = self.log.lock().unwrap();
            writeln!(log, "{}", req.key())
                .and_then(|_| log.flush())
                .map_err(|e| GatewayError::StorageFailure(e.to_string()))?;
        }
        self.inner.complete(req)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for std::sync::Arc<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        (**self).complete(req)
    }
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Box<B> {
    fn id(&self) -> &str {
        (**self).id()
    }

    fn complete(&self, req: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        (**self).complete(req)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record_one(writer: &FixtureWriter, prompt: &str, text: &str) -> bool {
        let req = CompletionRequest::new(prompt);
        let result = CompletionResult { text: text.into(), backend_id: "live".into(), latency: Duration::ZERO, from_cache: false };
        writer.record(&req, &result).unwrap()
    }

    #[test]
    fn replay_hit_and_miss() {
        let p = "Generate a Python function called `foo' ...";
        let rec = FixtureRecord {
            key: fixture_key(DEFAULT_MODEL, p),
            model: DEFAULT_MODEL.into(),
            prompt: p.into(),
            completion: "def foo(s): ...".into(),
            timestamp: None,
        };
        let replay = ReplayBackend::from_records([rec]);
        let hit = replay.complete(&CompletionRequest::new(p)).unwrap();
        assert_eq!(hit.text, "def foo(s): ...");
        assert!(hit.from_cache);
        let miss = replay.complete(&CompletionRequest::new("unknown"));
        assert!(matches!(miss, Err(GatewayError::ReplayMiss { .. })));
        // same prompt, different model: separate key
        let other = replay.complete(&CompletionRequest::new(p).with_model("other"));
        assert!(matches!(other, Err(GatewayError::ReplayMiss { .. })));
    }

    #[test]
    fn mock_exhausts() {
        let mock = ScriptedMock::with_texts(["a", "b"]);
        let req = CompletionRequest::new("p");
        assert_eq!(mock.complete(&req).unwrap().text, "a");
        assert_eq!(mock.complete(&req).unwrap().text, "b");
        assert_eq!(mock.complete(&req), Err(GatewayError::MockExhausted));
        assert_eq!(mock.call_count(), 3);
    }

    #[test]
    fn empty_prompt_rejected() {
        let mock = ScriptedMock::with_texts(["a"]);
        assert!(matches!(mock.complete(&CompletionRequest::new("")), Err(GatewayError::InvalidRequest(_))));
    }

    #[test]
    fn first_write_wins_and_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let writer = FixtureWriter::open(&path).unwrap();
        assert!(record_one(&writer, "same", "first"));
        assert!(!record_one(&writer, "same", "second"));
        drop(writer);
        // reopening keeps the existing keys
        let writer = FixtureWriter::open(&path).unwrap();
        assert!(!record_one(&writer, "same", "third"));
        assert_eq!(load_fixtures(&path).unwrap().len(), 1);

        let replay = ReplayBackend::load(&path).unwrap();
        assert_eq!(replay.complete(&CompletionRequest::new("same")).unwrap().text, "first");
    }

    #[test]
    fn truncated_fixture_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("fixtures.jsonl");
        let writer = FixtureWriter::open(&path).unwrap();
        record_one(&writer, "one", "def foo(): return 1");
        record_one(&writer, "two", "def foo(): return 2");
        record_one(&writer, "three", "def foo(): return 3");
        drop(writer);
        let bytes = std::fs::read(&path).unwrap();
        let first_two = bytes.iter().enumerate().filter(|(_, b)| **b == b'\n').nth(1).unwrap().0 + 1;
        // cut the third record at every byte position inside it
        for cut in first_two + 1..bytes.len() - 1 {
            std::fs::write(&path, &bytes[..cut]).unwrap();
            match load_fixtures(&path) {
                Err(GatewayError::FixtureParse { line, .. }) => assert_eq!(line, 3, "cut at {cut}"),
                other => panic!("cut at {cut}: {other:?}"),
            }
        }
    }

    #[test]
    fn tampered_key_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.jsonl");
        std::fs::write(&path, "\n{\"key\":\"00\",\"model\":\"m\",\"prompt\":\"p\",\"completion\":\"c\"}\n").unwrap();
        assert!(matches!(load_fixtures(&path), Err(GatewayError::FixtureParse { line: 2, .. })));
    }

    #[test]
    fn live_backend_unreachable_is_bounded() {
        // nothing listens on port 9 on loopback; connection is refused quickly
        let backend = LiveBackend::new(
            LiveConfig { endpoint: "http://127.0.0.1:9/v1/chat/completions".into(), ..Default::default() },
            "k".into(),
        )
        .with_base_backoff(Duration::from_millis(10));
        let mut req = CompletionRequest::new("p");
        req.timeout = Duration::from_millis(300);
        let start = Instant::now();
        assert!(matches!(backend.complete(&req), Err(GatewayError::BackendUnavailable(_))));
        assert!(start.elapsed() <= req.timeout * MAX_TRIES + Duration::from_millis(200));
    }

    #[test]
    fn logged_backend_counts_calls() {
        let dir = tempfile::tempdir().unwrap();
        let log = dir.path().join("calls.log");
        let backend = LoggedBackend::new(ScriptedMock::with_texts(["x"]), &log).unwrap();
        backend.complete(&CompletionRequest::new("p")).unwrap();
        let _ = backend.complete(&CompletionRequest::new("p"));
        assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 2);
    }
}
