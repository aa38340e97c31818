//! Backend gateway: chat/extract/embed client traits, deterministic mocks
//! for offline runs, an HTTP client for real providers, bounded in-flight
//! concurrency, and retry with exponential backoff.
//!
//! Secrets are never read from config values: HTTP backends name an
//! environment variable and the key is resolved at client build time.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::coc::{NodeKind, NodeTriple, TripleExtraction, TripleExtractor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Chat,
    Extract,
    Embed,
    Judge,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub role: Role,
    pub text: String,
}

/// A conversational backend. `history` carries the full prior dialogue in
/// order; implementations must be shareable across concurrent callers.
pub trait ChatClient: Send + Sync {
    fn chat(&self, system_prompt: &str, history: &[ChatTurn], user_turn: &str) -> Result<String>;
    fn name(&self) -> &str;
}

/// Echoes the user turn back; the simplest deterministic mock.
#[derive(Debug, Default)]
pub struct EchoChat;

impl ChatClient for EchoChat {
    fn chat(&self, _system: &str, _history: &[ChatTurn], user_turn: &str) -> Result<String> {
        Ok(user_turn.to_string())
    }

    fn name(&self) -> &str {
        "echo"
    }
}

/// Always returns the same reply; useful as a mock judge.
#[derive(Debug, Clone)]
pub struct FixedChat {
    pub reply: String,
}

impl ChatClient for FixedChat {
    fn chat(&self, _system: &str, _history: &[ChatTurn], _user_turn: &str) -> Result<String> {
        Ok(self.reply.clone())
    }

    fn name(&self) -> &str {
        "fixed"
    }
}

/// Canned answers keyed by the exact user turn (the interview wires
/// question ids to question texts when it builds this mock).
#[derive(Debug, Clone)]
pub struct ScriptedChat {
    answers: BTreeMap<String, String>,
}

impl ScriptedChat {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        ScriptedChat { answers: pairs.into_iter().collect() }
    }
}

impl ChatClient for ScriptedChat {
    fn chat(&self, _system: &str, _history: &[ChatTurn], user_turn: &str) -> Result<String> {
        self.answers
            .get(user_turn)
            .cloned()
            .ok_or_else(|| Error::backend("scripted", format!("no scripted answer for {user_turn:?}")))
    }

    fn name(&self) -> &str {
        "scripted"
    }
}

/// Pops replies in order; handy for re-ask tests.
#[derive(Debug)]
pub struct SequenceChat {
    replies: Mutex<std::collections::VecDeque<String>>,
}

impl SequenceChat {
    pub fn new(replies: impl IntoIterator<Item = String>) -> Self {
        SequenceChat { replies: Mutex::new(replies.into_iter().collect()) }
    }
}

impl ChatClient for SequenceChat {
    fn chat(&self, _system: &str, _history: &[ChatTurn], _user_turn: &str) -> Result<String> {
        self.replies
            .lock()
            .expect("sequence mock poisoned")
            .pop_front()
            .ok_or_else(|| Error::backend("sequence", "reply sequence exhausted"))
    }

    fn name(&self) -> &str {
        "sequence"
    }
}

/// Fails the first `failures` calls, then delegates to an inner echo.
#[derive(Debug, Default)]
pub struct FlakyChat {
    failures: usize,
    calls: AtomicUsize,
}

impl FlakyChat {
    pub fn new(failures: usize) -> Self {
        FlakyChat { failures, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl ChatClient for FlakyChat {
    fn chat(&self, _system: &str, _history: &[ChatTurn], user_turn: &str) -> Result<String> {
        let attempt = self.calls.fetch_add(1, Ordering::SeqCst);
        if attempt < self.failures {
            return Err(Error::backend("flaky", format!("transient failure {attempt}")));
        }
        Ok(user_turn.to_string())
    }

    fn name(&self) -> &str {
        "flaky"
    }
}

/// Records the maximum number of concurrent in-flight calls; used to
/// assert the gateway bound.
pub struct InstrumentedChat<C> {
    inner: C,
    current: AtomicUsize,
    max_seen: AtomicUsize,
    hold: Duration,
}

impl<C> InstrumentedChat<C> {
    pub fn new(inner: C, hold: Duration) -> Self {
        InstrumentedChat {
            inner,
            current: AtomicUsize::new(0),
            max_seen: AtomicUsize::new(0),
            hold,
        }
    }

    pub fn max_in_flight_seen(&self) -> usize {
        self.max_seen.load(Ordering::SeqCst)
    }
}

impl<C: ChatClient> ChatClient for InstrumentedChat<C> {
    fn chat(&self, system: &str, history: &[ChatTurn], user_turn: &str) -> Result<String> {
        let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_seen.fetch_max(now, Ordering::SeqCst);
        std::thread::sleep(self.hold);
        let out = self.inner.chat(system, history, user_turn);
        self.current.fetch_sub(1, Ordering::SeqCst);
        out
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

/// Counting semaphore bounding concurrent backend calls.
pub struct FlightLimiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

impl FlightLimiter {
    pub fn new(max: usize) -> Self {
        assert!(max >= 1, "max_in_flight must be >= 1");
        FlightLimiter { max, in_flight: Mutex::new(0), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> FlightGuard<'_> {
        let mut count = self.in_flight.lock().expect("limiter poisoned");
        while *count >= self.max {
            count = self.freed.wait(count).expect("limiter poisoned");
        }
        *count += 1;
        FlightGuard { limiter: self }
    }
}

pub struct FlightGuard<'a> {
    limiter: &'a FlightLimiter,
}

impl Drop for FlightGuard<'_> {
    fn drop(&mut self) {
        let mut count = self.limiter.in_flight.lock().expect("limiter poisoned");
        *count -= 1;
        self.limiter.freed.notify_one();
    }
}

/// Bounded exponential backoff: up to `max_retries` retries after the
/// first attempt, sleeping `base_delay_ms * 2^attempt` between attempts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_retries: 2, base_delay_ms: 200 }
    }
}

impl RetryPolicy {
    pub fn execute<T>(&self, mut op: impl FnMut() -> Result<T>) -> Result<T> {
        let mut attempt: u32 = 0;
        loop {
            match op() {
                Ok(value) => return Ok(value),
                Err(err) => {
                    if attempt >= self.max_retries {
                        return Err(err);
                    }
                    let delay = self.base_delay_ms.saturating_mul(1u64 << attempt.min(16));
                    std::thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
            }
        }
    }
}

/// Uniform wrapper applied to every configured chat backend: enforces the
/// in-flight bound, then retries transient failures.
pub struct BoundedChat {
    inner: Arc<dyn ChatClient>,
    limiter: Arc<FlightLimiter>,
    retry: RetryPolicy,
}

impl BoundedChat {
    pub fn new(inner: Arc<dyn ChatClient>, max_in_flight: usize, retry: RetryPolicy) -> Self {
        BoundedChat { inner, limiter: Arc::new(FlightLimiter::new(max_in_flight)), retry }
    }
}

impl ChatClient for BoundedChat {
    fn chat(&self, system: &str, history: &[ChatTurn], user_turn: &str) -> Result<String> {
        let _guard = self.limiter.acquire();
        self.retry.execute(|| self.inner.chat(system, history, user_turn))
    }

    fn name(&self) -> &str {
        self.inner.name()
    }
}

// ---------------------------------------------------------------------------
// HTTP backends (chat-completions shaped; see README for the field mapping)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpBackendConfig {
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub auth_env: Option<String>,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_timeout_secs() -> u64 {
    60
}

pub struct HttpChat {
    config: HttpBackendConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
    label: String,
}

fn resolve_token(auth_env: &Option<String>) -> Result<Option<String>> {
    match auth_env {
        None => Ok(None),
        Some(var) => match std::env::var(var) {
            Ok(value) if !value.is_empty() => Ok(Some(value)),
            _ => Err(Error::Config(format!("environment variable {var} is not set"))),
        },
    }
}

fn http_client(timeout_secs: u64) -> Result<reqwest::blocking::Client> {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(timeout_secs))
        .build()
        .map_err(|e| Error::backend("http", format!("client build failed: {e}")))
}

impl HttpChat {
    pub fn new(label: &str, config: HttpBackendConfig) -> Result<Self> {
        let token = resolve_token(&config.auth_env)?;
        let client = http_client(config.timeout_secs)?;
        Ok(HttpChat { config, token, client, label: label.to_string() })
    }
}

#[derive(Serialize)]
struct ChatRequestMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<ChatChoice>,
}

#[derive(Deserialize)]
struct ChatChoice {
    message: ChatResponseMessage,
}

#[derive(Deserialize)]
struct ChatResponseMessage {
    content: String,
}

impl ChatClient for HttpChat {
    fn chat(&self, system: &str, history: &[ChatTurn], user_turn: &str) -> Result<String> {
        let mut messages = vec![ChatRequestMessage { role: "system", content: system }];
        for turn in history {
            messages.push(ChatRequestMessage {
                role: match turn.role {
                    Role::User => "user",
                    Role::Assistant => "assistant",
                },
                content: &turn.text,
            });
        }
        messages.push(ChatRequestMessage { role: "user", content: user_turn });

        let body = serde_json::json!({ "model": self.config.model, "messages": messages });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| Error::backend(&self.label, format!("transport: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::backend(&self.label, format!("http status {status}")));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| Error::backend(&self.label, format!("bad response body: {e}")))?;
        parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .ok_or_else(|| Error::backend(&self.label, "response had no choices"))
    }

    fn name(&self) -> &str {
        &self.label
    }
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

/// One embedded text: the vector plus the sha-256 hash of the source text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub text_hash: String,
    pub vector: Vec<f64>,
}

/// Lowercase hex sha-256 of the UTF-8 text; the key used by embedding files.
pub fn text_hash(text: &str) -> String {
    use sha2::Digest;
    hex::encode(sha2::Sha256::digest(text.as_bytes()))
}

pub trait Embedder: Send + Sync {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>>;
    fn dim(&self) -> usize;
    fn name(&self) -> &str;
}

/// Deterministic stub: hashes each text to a unit vector. Not a semantic
/// embedding; exists so offline runs exercise the full metric path.
#[derive(Debug, Clone)]
pub struct HashEmbedder {
    pub dim: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        HashEmbedder { dim: 16 }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        use rand::Rng;
        use rand::SeedableRng;
        use sha2::Digest;
        texts
            .iter()
            .map(|text| {
                let digest = sha2::Sha256::digest(text.as_bytes());
                let seed: [u8; 32] = digest.into();
                let mut rng = rand_chacha::ChaCha20Rng::from_seed(seed);
                let mut vector: Vec<f64> =
                    (0..self.dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let norm = vector.iter().map(|x| x * x).sum::<f64>().sqrt();
                assert!(norm > 0.0, "zero draw is measure-zero for dim >= 1");
                for x in &mut vector {
                    *x /= norm;
                }
                Ok(Embedding { text_hash: hex::encode(digest), vector })
            })
            .collect()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        "hash-stub"
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingFileHeader {
    dim: usize,
    model_id: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct EmbeddingFileRecord {
    text_hash: String,
    vector: Vec<f64>,
}

/// Precomputed embeddings keyed by text hash; performs no network I/O.
pub struct FileEmbedder {
    map: BTreeMap<String, Vec<f64>>,
    dim: usize,
    label: String,
}

impl FileEmbedder {
    pub fn load(path: &Path) -> Result<Self> {
        let raw = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut lines = raw.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header_line) = lines
            .next()
            .ok_or_else(|| Error::schema(path, 1, "empty embedding file"))?;
        let header: EmbeddingFileHeader = serde_json::from_str(header_line)
            .map_err(|e| Error::schema(path, 1, format!("bad header: {e}")))?;
        if header.dim == 0 {
            return Err(Error::schema(path, 1, "embedding dim must be >= 1"));
        }
        let mut map = BTreeMap::new();
        for (idx, line) in lines {
            let record: EmbeddingFileRecord = serde_json::from_str(line)
                .map_err(|e| Error::schema(path, idx + 1, e.to_string()))?;
            if record.vector.len() != header.dim {
                return Err(Error::schema(
                    path,
                    idx + 1,
                    format!("vector len {} != header dim {}", record.vector.len(), header.dim),
                ));
            }
            map.insert(record.text_hash, record.vector);
        }
        Ok(FileEmbedder {
            map,
            dim: header.dim,
            label: format!("file:{}", header.model_id),
        })
    }
}

impl Embedder for FileEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        texts
            .iter()
            .map(|text| {
                let hash = text_hash(text);
                let vector = self.map.get(&hash).cloned().ok_or_else(|| {
                    Error::backend(
                        &self.label,
                        format!("no precomputed vector for text hash {hash}"),
                    )
                })?;
                Ok(Embedding { text_hash: hash, vector })
            })
            .collect()
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        &self.label
    }
}

/// Writes an embedding file: header line then one record per text.
pub fn write_embedding_file(
    path: &Path,
    dim: usize,
    model_id: &str,
    entries: &[(String, Vec<f64>)],
) -> Result<()> {
    let mut out = String::new();
    let header = EmbeddingFileHeader { dim, model_id: model_id.to_string() };
    out.push_str(&serde_json::to_string(&header).expect("header serializes"));
    out.push('\n');
    for (text, vector) in entries {
        if vector.len() != dim {
            return Err(Error::invalid(format!(
                "vector for {text:?} has len {} != dim {dim}",
                vector.len()
            )));
        }
        let record = EmbeddingFileRecord { text_hash: text_hash(text), vector: vector.clone() };
        out.push_str(&serde_json::to_string(&record).expect("record serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Embeddings over HTTP; request/response field mapping mirrors the common
/// embeddings endpoint shape.
pub struct HttpEmbedder {
    config: HttpBackendConfig,
    token: Option<String>,
    client: reqwest::blocking::Client,
    dim: usize,
    label: String,
}

impl HttpEmbedder {
    pub fn new(label: &str, config: HttpBackendConfig, dim: usize) -> Result<Self> {
        let token = resolve_token(&config.auth_env)?;
        let client = http_client(config.timeout_secs)?;
        Ok(HttpEmbedder { config, token, client, dim, label: label.to_string() })
    }
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f64>,
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String]) -> Result<Vec<Embedding>> {
        let body = serde_json::json!({ "model": self.config.model, "input": texts });
        let mut request = self.client.post(&self.config.endpoint).json(&body);
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request
            .send()
            .map_err(|e| Error::backend(&self.label, format!("transport: {e}")))?;
        let status = response.status();
        if !status.is_success() {
            return Err(Error::backend(&self.label, format!("http status {status}")));
        }
        let parsed: EmbedResponse = response
            .json()
            .map_err(|e| Error::backend(&self.label, format!("bad response body: {e}")))?;
        if parsed.data.len() != texts.len() {
            return Err(Error::backend(
                &self.label,
                format!("{} vectors for {} texts", parsed.data.len(), texts.len()),
            ));
        }
        Ok(texts
            .iter()
            .zip(parsed.data)
            .map(|(text, datum)| Embedding { text_hash: text_hash(text), vector: datum.embedding })
            .collect())
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn name(&self) -> &str {
        &self.label
    }
}

// ---------------------------------------------------------------------------
// Structured triple extraction over chat
// ---------------------------------------------------------------------------

const EXTRACT_SYSTEM_PROMPT: &str = "You turn one dated mention from a personal timeline into a \
structured record. Reply with a single fenced json block and nothing else. For a symptom mention \
use fields {\"subject\", \"experience\", \"severity_frequency\", \"summary\"}; for a life event \
use fields {\"actor\", \"action\", \"impact\", \"summary\"}. If the text does not actually \
describe the labelled item, reply with the single word None.";

#[derive(Deserialize)]
struct ExtractPayload {
    subject: Option<String>,
    experience: Option<String>,
    severity_frequency: Option<String>,
    actor: Option<String>,
    action: Option<String>,
    impact: Option<String>,
    summary: Option<String>,
}

fn fenced_block(reply: &str) -> Option<&str> {
    let start = reply.find("```")?;
    let after = &reply[start + 3..];
    let body_start = after.find('\n')? + 1;
    let body = &after[body_start..];
    let end = body.find("```")?;
    Some(body[..end].trim())
}

/// Wraps a chat backend with the extraction prompt and fenced-JSON parsing.
/// Unparseable or mismatched replies count a warning and yield `None`.
pub struct LlmExtractor {
    chat: Arc<dyn ChatClient>,
    warnings: AtomicU64,
}

impl LlmExtractor {
    pub fn new(chat: Arc<dyn ChatClient>) -> Self {
        LlmExtractor { chat, warnings: AtomicU64::new(0) }
    }

    pub fn warnings(&self) -> u64 {
        self.warnings.load(Ordering::SeqCst)
    }

    fn warn(&self, msg: &str) {
        self.warnings.fetch_add(1, Ordering::SeqCst);
        log::warn!("extractor: {msg}");
    }
}

impl TripleExtractor for LlmExtractor {
    fn extract(&self, kind: NodeKind, label: &str, text: &str) -> Result<Option<TripleExtraction>> {
        let kind_word = match kind {
            NodeKind::Symptom => "symptom",
            NodeKind::LifeEvent => "life event",
        };
        let user_turn = format!("Kind: {kind_word}\nLabel: {label}\nText: {text}");
        let reply = self.chat.chat(EXTRACT_SYSTEM_PROMPT, &[], &user_turn)?;
        let trimmed = reply.trim();
        if trimmed.eq_ignore_ascii_case("none") {
            return Ok(None);
        }
        let Some(block) = fenced_block(trimmed) else {
            self.warn(&format!("no fenced block in reply for {label:?}"));
            return Ok(None);
        };
        let payload: ExtractPayload = match serde_json::from_str(block) {
            Ok(p) => p,
            Err(e) => {
                self.warn(&format!("unparseable extraction for {label:?}: {e}"));
                return Ok(None);
            }
        };
        let triple = match kind {
            NodeKind::Symptom => match (payload.subject, payload.experience, payload.severity_frequency) {
                (Some(subject), Some(experience), Some(severity_frequency)) => {
                    NodeTriple::Symptom { subject, experience, severity_frequency }
                }
                _ => {
                    self.warn(&format!("symptom payload missing fields for {label:?}"));
                    return Ok(None);
                }
            },
            NodeKind::LifeEvent => match (payload.actor, payload.action, payload.impact) {
                (Some(actor), Some(action), Some(impact)) => {
                    NodeTriple::Event { actor, action, impact }
                }
                _ => {
                    self.warn(&format!("event payload missing fields for {label:?}"));
                    return Ok(None);
                }
            },
        };
        Ok(Some(TripleExtraction { triple, summary: payload.summary }))
    }
}

/// Deterministic extraction mock: builds a triple from the label alone.
#[derive(Debug, Default)]
pub struct MockExtractor;

impl TripleExtractor for MockExtractor {
    fn extract(&self, kind: NodeKind, label: &str, _text: &str) -> Result<Option<TripleExtraction>> {
        let triple = match kind {
            NodeKind::Symptom => NodeTriple::Symptom {
                subject: "self".into(),
                experience: label.to_string(),
                severity_frequency: "recurring".into(),
            },
            NodeKind::LifeEvent => NodeTriple::Event {
                actor: "self".into(),
                action: label.to_string(),
                impact: "affected daily life".into(),
            },
        };
        Ok(Some(TripleExtraction { triple, summary: None }))
    }
}
