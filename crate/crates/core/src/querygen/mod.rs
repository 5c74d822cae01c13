//! LLM query generation through an OpenAI-compatible chat-completion
//! endpoint.
//!
//! A patient note is substituted into a prompt template, sent as a single
//! user message, and the first choice's text is kept verbatim as the raw
//! generation. Everything downstream of the raw text is deterministic
//! post-processing, so stored generations can be re-processed offline.

mod cache;
mod transport;

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;
use sha2::{Digest, Sha256};
use url::Url;

use crate::corpus::{topic_order, PatientTopic};
use crate::textproc::{strip_list_markers, tokenize, Analyzer, ProcessedQuery, Stoplist};

pub use cache::{cache_key, note_hash, CachedGeneration, GenerationCache};
pub use transport::{HttpTransport, RecordingTransport, Transport, TransportError};

/// Bundled default prompt.
pub const DEFAULT_TEMPLATE: &str = include_str!("../../data/default_prompt.txt");
pub const NOTE_PLACEHOLDER: &str = "{NOTE}";

#[derive(Debug, thiserror::Error)]
pub enum QueryGenError {
    #[error("prompt template must contain {NOTE_PLACEHOLDER} exactly once (found {0})")]
    Template(usize),
    #[error("invalid LLM config: {0}")]
    Config(String),
    #[error("topic {topic_id}: request failed after {attempts} attempt(s): {source}")]
    Transport {
        topic_id: String,
        attempts: usize,
        #[source]
        source: TransportError,
    },
    #[error("topic {topic_id}: unexpected response shape: {message}")]
    Protocol { topic_id: String, message: String },
    #[error("topic {topic_id}: model returned an empty completion; fall back to the original note")]
    DegenerateOutput { topic_id: String },
    #[error("topic {topic_id}: empty note")]
    EmptyNote { topic_id: String },
    #[error("topic {topic_id}: no cached generation and offline mode is on")]
    CacheMiss { topic_id: String },
    #[error("every topic failed ({} failures)", .0.len())]
    BatchFailed(Vec<TopicFailure>),
    #[error("{0}")]
    Io(String),
}

impl QueryGenError {
    pub fn topic_id(&self) -> Option<&str> {
        match self {
            QueryGenError::Transport { topic_id, .. }
            | QueryGenError::Protocol { topic_id, .. }
            | QueryGenError::DegenerateOutput { topic_id }
            | QueryGenError::EmptyNote { topic_id }
            | QueryGenError::CacheMiss { topic_id } => Some(topic_id),
            _ => None,
        }
    }
}

fn default_temperature() -> f64 {
    0.0
}
fn default_max_tokens() -> u32 {
    512
}
fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> usize {
    2
}

/// Whether a URL points at this machine.
pub fn is_local_url(url: &Url) -> bool {
    match url.host() {
        Some(url::Host::Domain(d)) => d.eq_ignore_ascii_case("localhost"),
        Some(url::Host::Ipv4(ip)) => ip.is_loopback(),
        Some(url::Host::Ipv6(ip)) => ip.is_loopback(),
        None => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmConfig {
    /// Endpoint root; requests go to `{base_url}/chat/completions`.
    pub base_url: Url,
    pub model_name: String,
    /// Name of the environment variable holding the API key. The key itself
    /// is never stored.
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout")]
    pub timeout_s: f64,
    #[serde(default = "default_retries")]
    pub max_retries: usize,
    /// Permit endpoints that are not on localhost. Off by default so that
    /// patient notes stay on the machine unless explicitly allowed.
    #[serde(default)]
    pub allow_remote: bool,
}

impl LlmConfig {
    pub fn local(base_url: Url, model_name: &str) -> Self {
        LlmConfig {
            base_url,
            model_name: model_name.to_string(),
            api_key_env: String::new(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            timeout_s: default_timeout(),
            max_retries: default_retries(),
            allow_remote: false,
        }
    }

    pub fn validate(&self) -> Result<(), QueryGenError> {
        let bad = |m: String| Err(QueryGenError::Config(m));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if !(self.timeout_s > 0.0 && self.timeout_s.is_finite()) {
            return bad(format!("timeout_s must be > 0, got {}", self.timeout_s));
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name is empty".into());
        }
        if !matches!(self.base_url.scheme(), "http" | "https") {
            return bad(format!("base_url must be http(s): {}", self.base_url));
        }
        if !self.allow_remote && !is_local_url(&self.base_url) {
            return bad(format!(
                "{} is not a local endpoint; set allow_remote to send notes to it",
                self.base_url
            ));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> Url {
        let mut s = self.base_url.as_str().trim_end_matches('/').to_string();
        s.push_str("/chat/completions");
        Url::parse(&s).expect("base_url plus path stays a valid URL")
    }

    /// The API key from the environment, if one is configured and set.
    pub fn api_key(&self) -> Option<String> {
        if self.api_key_env.is_empty() {
            return None;
        }
        std::env::var(&self.api_key_env).ok().filter(|k| !k.is_empty())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct PromptTemplate {
    template_text: String,
    template_id: String,
}

impl PromptTemplate {
    pub fn new(text: impl Into<String>) -> Result<Self, QueryGenError> {
        let template_text = text.into();
        let n = template_text.matches(NOTE_PLACEHOLDER).count();
        if n != 1 {
            return Err(QueryGenError::Template(n));
        }
        let template_id = hex::encode(Sha256::digest(template_text.as_bytes()));
        Ok(PromptTemplate {
            template_text,
            template_id,
        })
    }

    pub fn load(path: &Path) -> Result<Self, QueryGenError> {
        let text = std::fs::read_to_string(path).map_err(|e| QueryGenError::Io(format!("{}: {e}", path.display())))?;
        Self::new(text)
    }

    pub fn text(&self) -> &str {
        &self.template_text
    }

    /// SHA-256 of the template text.
    pub fn id(&self) -> &str {
        &self.template_id
    }

    pub fn render(&self, note: &str) -> String {
        let (head, tail) = self
            .template_text
            .split_once(NOTE_PLACEHOLDER)
            .expect("validated on construction");
        let mut out = String::with_capacity(head.len() + note.len() + tail.len());
        out.push_str(head);
        out.push_str(note);
        out.push_str(tail);
        out
    }
}

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate::new(DEFAULT_TEMPLATE).expect("bundled template is valid")
    }
}

impl TryFrom<String> for PromptTemplate {
    type Error = QueryGenError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        PromptTemplate::new(s)
    }
}

impl From<PromptTemplate> for String {
    fn from(t: PromptTemplate) -> String {
        t.template_text
    }
}

pub fn render_prompt(template: &PromptTemplate, note: &str) -> String {
    template.render(note)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryBundle {
    pub topic_id: String,
    pub original_note: String,
    /// The model's text exactly as returned.
    pub raw_generation: String,
    pub processed: ProcessedQuery,
    /// Wall-clock seconds of the successful HTTP exchange. For cache hits,
    /// the latency recorded when the generation was first made.
    pub latency_s: f64,
    pub term_count: usize,
    /// Tokens in the generation after list-marker removal, before stopword
    /// removal and stemming.
    pub raw_term_count: usize,
    pub model_name: String,
    pub template_id: String,
    #[serde(default)]
    pub from_cache: bool,
}

impl QueryBundle {
    /// Rebuild the processed query from the stored raw generation.
    pub fn reprocess(&self, analyzer: &Analyzer) -> ProcessedQuery {
        analyzer.postprocess_generated(&self.raw_generation)
    }
}

/// Tokens in a generation once list markers are stripped.
pub fn raw_term_count(raw: &str) -> usize {
    tokenize(&strip_list_markers(raw)).len()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicFailure {
    pub topic_id: String,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchStats {
    pub n_topics: usize,
    pub n_succeeded: usize,
    /// Means over successful topics.
    pub mean_latency_s: f64,
    pub mean_term_count: f64,
    pub mean_raw_term_count: f64,
    pub failures: Vec<TopicFailure>,
    pub model_name: String,
    pub template_id: String,
}

impl BatchStats {
    pub fn from_bundles(n_topics: usize, bundles: &[QueryBundle], failures: Vec<TopicFailure>, model_name: &str, template_id: &str) -> Self {
        let n = bundles.len();
        let mean = |f: &dyn Fn(&QueryBundle) -> f64| {
            if n == 0 {
                0.0
            } else {
                bundles.iter().map(f).sum::<f64>() / n as f64
            }
        };
        BatchStats {
            n_topics,
            n_succeeded: n,
            mean_latency_s: mean(&|b| b.latency_s),
            mean_term_count: mean(&|b| b.term_count as f64),
            mean_raw_term_count: mean(&|b| b.raw_term_count as f64),
            failures,
            model_name: model_name.to_string(),
            template_id: template_id.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutput {
    /// In topic-id order.
    pub bundles: Vec<QueryBundle>,
    pub stats: BatchStats,
}

/// Chat-completion client. Shareable across threads.
pub struct QueryGenerator {
    config: LlmConfig,
    template: PromptTemplate,
    analyzer: Analyzer,
    transport: Arc<dyn Transport>,
    cache: Option<Arc<GenerationCache>>,
    offline: bool,
}

impl std::fmt::Debug for QueryGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueryGenerator")
            .field("config", &self.config)
            .field("template_id", &self.template.id())
            .field("offline", &self.offline)
            .finish()
    }
}

impl QueryGenerator {
    pub fn new(config: LlmConfig, template: PromptTemplate, analyzer: Analyzer) -> Result<Self, QueryGenError> {
        Self::with_transport(config, template, analyzer, Arc::new(HttpTransport))
    }

    pub fn with_transport(
        config: LlmConfig,
        template: PromptTemplate,
        analyzer: Analyzer,
        transport: Arc<dyn Transport>,
    ) -> Result<Self, QueryGenError> {
        config.validate()?;
        Ok(QueryGenerator {
            config,
            template,
            analyzer,
            transport,
            cache: None,
            offline: false,
        })
    }

    pub fn with_cache(mut self, cache: Arc<GenerationCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    /// Serve only from the cache; a miss is an error, not a request.
    pub fn offline(mut self, offline: bool) -> Self {
        self.offline = offline;
        self
    }

    pub fn config(&self) -> &LlmConfig {
        &self.config
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn analyzer(&self) -> &Analyzer {
        &self.analyzer
    }

    fn request_body(&self, prompt: &str) -> serde_json::Value {
        json!({
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
            "max_tokens": self.config.max_tokens,
        })
    }

    /// One chat completion with retries. Returns the text and the latency of
    /// the exchange that succeeded.
    fn complete(&self, topic_id: &str, prompt: &str) -> Result<(String, f64), QueryGenError> {
        let url = self.config.endpoint();
        let body = self.request_body(prompt);
        let key = self.config.api_key();
        let timeout = Duration::from_secs_f64(self.config.timeout_s);
        let max_attempts = 1 + self.config.max_retries;
        let mut attempts = 0;
        let reply = loop {
            attempts += 1;
            let start = Instant::now();
            match self.transport.post_json(&url, key.as_deref(), &body, timeout) {
                Ok(v) => break (v, start.elapsed().as_secs_f64()),
                Err(e) => {
                    tracing::debug!(topic_id, attempts, error = %e, "chat completion failed");
                    if attempts >= max_attempts || !e.is_retryable() {
                        return Err(QueryGenError::Transport {
                            topic_id: topic_id.to_string(),
                            attempts,
                            source: e,
                        });
                    }
                    std::thread::sleep(Duration::from_millis(100 * attempts as u64));
                }
            }
        };
        let (value, latency) = reply;
        let content = value
            .pointer("/choices/0/message/content")
            .ok_or_else(|| QueryGenError::Protocol {
                topic_id: topic_id.to_string(),
                message: "no choices[0].message.content".into(),
            })?;
        let text = match content {
            serde_json::Value::String(s) => s.clone(),
            serde_json::Value::Null => String::new(),
            other => {
                return Err(QueryGenError::Protocol {
                    topic_id: topic_id.to_string(),
                    message: format!("content is not a string: {other}"),
                })
            }
        };
        Ok((text, latency))
    }

    pub fn generate(&self, topic: &PatientTopic) -> Result<QueryBundle, QueryGenError> {
        if topic.note_text.trim().is_empty() {
            return Err(QueryGenError::EmptyNote {
                topic_id: topic.topic_id.clone(),
            });
        }
        let nh = note_hash(&topic.note_text);
        let key = cache_key(&self.config.model_name, self.template.id(), &nh);
        let cached = self.cache.as_ref().and_then(|c| c.get(&key));
        let (raw, latency, from_cache) = match cached {
            Some(hit) => (hit.raw_generation, hit.latency_s, true),
            None if self.offline => {
                return Err(QueryGenError::CacheMiss {
                    topic_id: topic.topic_id.clone(),
                })
            }
            None => {
                let prompt = self.template.render(&topic.note_text);
                let (raw, latency) = self.complete(&topic.topic_id, &prompt)?;
                (raw, latency, false)
            }
        };
        if raw.trim().is_empty() {
            return Err(QueryGenError::DegenerateOutput {
                topic_id: topic.topic_id.clone(),
            });
        }
        if !from_cache {
            if let Some(cache) = &self.cache {
                cache.put(CachedGeneration {
                    key,
                    model_name: self.config.model_name.clone(),
                    template_id: self.template.id().to_string(),
                    note_hash: nh,
                    raw_generation: raw.clone(),
                    latency_s: latency,
                })?;
            }
        }
        let processed = self.analyzer.postprocess_generated(&raw);
        Ok(QueryBundle {
            topic_id: topic.topic_id.clone(),
            original_note: topic.note_text.clone(),
            term_count: processed.term_count(),
            raw_term_count: raw_term_count(&raw),
            processed,
            raw_generation: raw,
            latency_s: latency,
            model_name: self.config.model_name.clone(),
            template_id: self.template.id().to_string(),
            from_cache,
        })
    }

    /// Generate for every topic with up to `parallelism` requests in flight.
    /// Per-topic failures are collected; the batch fails only if no topic
    /// succeeds.
    pub fn batch(&self, topics: &[PatientTopic], parallelism: usize) -> Result<BatchOutput, QueryGenError> {
        if parallelism == 0 {
            return Err(QueryGenError::Config("parallelism must be >= 1".into()));
        }
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<(usize, Result<QueryBundle, QueryGenError>)>> = Mutex::new(Vec::new());
        std::thread::scope(|s| {
            for _ in 0..parallelism.min(topics.len()) {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(topic) = topics.get(i) else { break };
                    let r = self.generate(topic);
                    results.lock().unwrap().push((i, r));
                });
            }
        });
        let mut results = results.into_inner().unwrap();
        results.sort_by(|a, b| topic_order(&topics[a.0].topic_id, &topics[b.0].topic_id).then(a.0.cmp(&b.0)));

        let mut bundles = Vec::new();
        let mut failures = Vec::new();
        for (i, r) in results {
            match r {
                Ok(b) => bundles.push(b),
                Err(e) => {
                    tracing::warn!("{e}");
                    failures.push(TopicFailure {
                        topic_id: topics[i].topic_id.clone(),
                        error: e.to_string(),
                    });
                }
            }
        }
        if bundles.is_empty() && !topics.is_empty() {
            return Err(QueryGenError::BatchFailed(failures));
        }
        let stats = BatchStats::from_bundles(topics.len(), &bundles, failures, &self.config.model_name, self.template.id());
        Ok(BatchOutput { bundles, stats })
    }
}

/// Single generation over HTTP.
pub fn generate_query(
    cfg: &LlmConfig,
    template: &PromptTemplate,
    topic: &PatientTopic,
    stoplist: &Stoplist,
) -> Result<QueryBundle, QueryGenError> {
    QueryGenerator::new(cfg.clone(), template.clone(), Analyzer::new(stoplist.clone()))?.generate(topic)
}

/// Batch generation over HTTP.
pub fn batch_generate(
    cfg: &LlmConfig,
    template: &PromptTemplate,
    topics: &[PatientTopic],
    stoplist: &Stoplist,
    parallelism: usize,
) -> Result<BatchOutput, QueryGenError> {
    QueryGenerator::new(cfg.clone(), template.clone(), Analyzer::new(stoplist.clone()))?.batch(topics, parallelism)
}

pub fn write_bundles(path: &Path, bundles: &[QueryBundle]) -> Result<(), QueryGenError> {
    let mut out = String::new();
    for b in bundles {
        out.push_str(&serde_json::to_string(b).expect("bundle serializes"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| QueryGenError::Io(format!("{}: {e}", path.display())))
}

pub fn read_bundles(path: &Path) -> Result<Vec<QueryBundle>, QueryGenError> {
    let text = std::fs::read_to_string(path).map_err(|e| QueryGenError::Io(format!("{}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| QueryGenError::Io(format!("{}: line {}: {e}", path.display(), i + 1)))
        })
        .collect()
}
