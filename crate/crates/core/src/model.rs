//! Multimodal / text model adapter contract.
//!
//! Every request carries a [`GenerationConfig`]. The default configuration
//! is locked to greedy decoding (temperature 0.0, top-p 0.1, top-k 1); other
//! values can only be built through [`GenerationConfig::with_override`].

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::recording::request_hash;

pub const DEFAULT_FAST_MODEL: &str = "gemini-2.5-flash";
pub const DEFAULT_PRO_MODEL: &str = "gemini-2.5-pro";
/// Environment variable holding live model credentials.
pub const MODEL_API_KEY_VAR: &str = "MODEL_API_KEY";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    temperature: f64,
    top_p: f64,
    top_k: u32,
    overridden: bool,
}

/// Marker acknowledging that a non-deterministic configuration is wanted.
#[derive(Debug, Clone, Copy)]
pub struct ExplicitOverride;

impl GenerationConfig {
    pub const LOCKED_TEMPERATURE: f64 = 0.0;
    pub const LOCKED_TOP_P: f64 = 0.1;
    pub const LOCKED_TOP_K: u32 = 1;

    pub const fn locked() -> Self {
        Self {
            temperature: Self::LOCKED_TEMPERATURE,
            top_p: Self::LOCKED_TOP_P,
            top_k: Self::LOCKED_TOP_K,
            overridden: false,
        }
    }

    pub fn with_override(temperature: f64, top_p: f64, top_k: u32, _ack: ExplicitOverride) -> Self {
        Self { temperature, top_p, top_k: top_k.max(1), overridden: true }
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn top_p(&self) -> f64 {
        self.top_p
    }

    pub fn top_k(&self) -> u32 {
        self.top_k
    }

    pub fn is_overridden(&self) -> bool {
        self.overridden
    }
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self::locked()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub model: String,
    pub prompt: String,
    pub image: Option<Vec<u8>>,
    pub config: GenerationConfig,
}

impl ModelRequest {
    /// Transcript key for the prompt and image (model id is keyed separately).
    pub fn content_hash(&self) -> String {
        request_hash(&[self.prompt.as_bytes(), self.image.as_deref().unwrap_or_default()])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelResponse {
    pub text: String,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum AdapterError {
    #[error("no recorded response for model {model} (request {key})")]
    NotRecorded { model: String, key: String },
    #[error("model transport error: {0}")]
    Transport(String),
    #[error("missing credentials: set {0}")]
    MissingCredentials(String),
}

pub trait ModelAdapter: Send + Sync {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, AdapterError>;

    /// Adapters that cannot take concurrent calls return false and are
    /// wrapped in [`Serialized`] by the engine.
    fn concurrency_safe(&self) -> bool {
        true
    }
}

impl<A: ModelAdapter + ?Sized> ModelAdapter for std::sync::Arc<A> {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, AdapterError> {
        (**self).generate(request)
    }

    fn concurrency_safe(&self) -> bool {
        (**self).concurrency_safe()
    }
}

/// Shares an adapter across threads, serializing it first when it cannot
/// take concurrent calls.
pub fn shared<A: ModelAdapter + 'static>(adapter: A) -> std::sync::Arc<dyn ModelAdapter> {
    if adapter.concurrency_safe() {
        std::sync::Arc::new(adapter)
    } else {
        std::sync::Arc::new(Serialized::new(adapter))
    }
}

/// Serializes calls into an adapter that is not safe for concurrent use.
pub struct Serialized<A> {
    inner: Mutex<A>,
}

impl<A> Serialized<A> {
    pub fn new(inner: A) -> Self {
        Self { inner: Mutex::new(inner) }
    }
}

impl<A: ModelAdapter> ModelAdapter for Serialized<A> {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, AdapterError> {
        let guard = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        guard.generate(request)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedModelEntry {
    /// First line of the prompt, for humans reading the file.
    #[serde(default)]
    pub label: String,
    pub text: String,
}

/// `{ "format_version": 1, "responses": { model_id: { content_hash: entry } } }`
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelTranscript {
    pub format_version: u32,
    pub responses: BTreeMap<String, BTreeMap<String, RecordedModelEntry>>,
}

impl ModelTranscript {
    pub fn new() -> Self {
        Self { format_version: 1, responses: BTreeMap::new() }
    }

    pub fn insert(&mut self, request: &ModelRequest, text: impl Into<String>) {
        let label = request.prompt.lines().next().unwrap_or_default().to_string();
        self.responses
            .entry(request.model.clone())
            .or_default()
            .insert(request.content_hash(), RecordedModelEntry { label, text: text.into() });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("transcript serializes");
        s.push('\n');
        s
    }

    pub fn from_path(path: impl AsRef<Path>) -> std::io::Result<Self> {
        let bytes = std::fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

/// Replays responses from a [`ModelTranscript`]; unknown requests fail.
#[derive(Debug, Clone)]
pub struct RecordedModelAdapter {
    transcript: ModelTranscript,
}

impl RecordedModelAdapter {
    pub fn new(transcript: ModelTranscript) -> Self {
        Self { transcript }
    }

    pub fn from_path(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::new(ModelTranscript::from_path(path)?))
    }
}

impl ModelAdapter for RecordedModelAdapter {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, AdapterError> {
        let key = request.content_hash();
        self.transcript
            .responses
            .get(&request.model)
            .and_then(|by_hash| by_hash.get(&key))
            .map(|entry| ModelResponse { text: entry.text.clone() })
            .ok_or_else(|| AdapterError::NotRecorded { model: request.model.clone(), key })
    }
}

/// Returns fixed text (or a fixed failure) and keeps every request it saw.
#[derive(Debug, Default)]
pub struct StubModelAdapter {
    reply: Option<String>,
    failing_models: Vec<String>,
    requests: Mutex<Vec<ModelRequest>>,
}

impl StubModelAdapter {
    pub fn replying(text: impl Into<String>) -> Self {
        Self { reply: Some(text.into()), ..Self::default() }
    }

    pub fn failing() -> Self {
        Self::default()
    }

    /// Fail only for the listed model ids.
    pub fn failing_for(mut self, models: &[&str]) -> Self {
        self.failing_models = models.iter().map(|m| m.to_string()).collect();
        self
    }

    pub fn requests(&self) -> Vec<ModelRequest> {
        self.requests.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl ModelAdapter for StubModelAdapter {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, AdapterError> {
        self.requests.lock().unwrap_or_else(|p| p.into_inner()).push(request.clone());
        if self.failing_models.contains(&request.model) {
            return Err(AdapterError::Transport(format!("{} unavailable", request.model)));
        }
        match &self.reply {
            Some(text) => Ok(ModelResponse { text: text.clone() }),
            None => Err(AdapterError::Transport("stub configured to fail".into())),
        }
    }
}

/// Wraps a live or scripted adapter and records every successful exchange.
pub struct RecordingModelAdapter<A> {
    inner: A,
    transcript: Mutex<ModelTranscript>,
}

impl<A: ModelAdapter> RecordingModelAdapter<A> {
    pub fn new(inner: A) -> Self {
        Self { inner, transcript: Mutex::new(ModelTranscript::new()) }
    }

    pub fn transcript(&self) -> ModelTranscript {
        self.transcript.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl<A: ModelAdapter> ModelAdapter for RecordingModelAdapter<A> {
    fn generate(&self, request: &ModelRequest) -> Result<ModelResponse, AdapterError> {
        let response = self.inner.generate(request)?;
        self.transcript.lock().unwrap_or_else(|p| p.into_inner()).insert(request, response.text.clone());
        Ok(response)
    }
}
