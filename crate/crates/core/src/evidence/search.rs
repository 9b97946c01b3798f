//! Search-client contract plus the recorded-transcript implementation.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Channel, EvidenceItem};
use crate::recording::request_hash;

/// Environment variable holding the live search credentials.
pub const SEARCH_API_KEY_VAR: &str = "SEARCH_API_KEY";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchRequest {
    pub channel: Channel,
    pub query: String,
}

impl SearchRequest {
    pub fn hash(&self) -> String {
        request_hash(&[self.channel.key().as_bytes(), self.query.as_bytes()])
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SearchError {
    #[error("missing credentials: set {0}")]
    MissingCredentials(String),
    #[error("search transport error: {0}")]
    Transport(String),
    #[error("no recorded response for {channel} query {query:?}")]
    NotRecorded { channel: Channel, query: String },
}

pub trait SearchClient: Send + Sync {
    fn search(&self, request: &SearchRequest) -> Result<Vec<EvidenceItem>, SearchError>;

    /// Clients that cannot take concurrent calls return false; channels are
    /// then fetched one after another.
    fn concurrency_safe(&self) -> bool {
        true
    }
}

impl<C: SearchClient + ?Sized> SearchClient for std::sync::Arc<C> {
    fn search(&self, request: &SearchRequest) -> Result<Vec<EvidenceItem>, SearchError> {
        (**self).search(request)
    }

    fn concurrency_safe(&self) -> bool {
        (**self).concurrency_safe()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordedSearch {
    pub channel: Channel,
    pub query: String,
    #[serde(default)]
    pub items: Vec<EvidenceItem>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// `{ "format_version": 1, "responses": { request_hash: recorded_search } }`
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchTranscript {
    pub format_version: u32,
    pub responses: BTreeMap<String, RecordedSearch>,
}

impl SearchTranscript {
    pub fn new() -> Self {
        Self { format_version: 1, responses: BTreeMap::new() }
    }

    pub fn insert(&mut self, request: &SearchRequest, outcome: Result<Vec<EvidenceItem>, String>) {
        let (items, error) = match outcome {
            Ok(items) => (items, None),
            Err(e) => (Vec::new(), Some(e)),
        };
        self.responses.insert(
            request.hash(),
            RecordedSearch { channel: request.channel, query: request.query.clone(), items, error },
        );
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

#[derive(Debug, Clone)]
pub struct RecordedSearchClient {
    transcript: SearchTranscript,
}

impl RecordedSearchClient {
    pub fn new(transcript: SearchTranscript) -> Self {
        Self { transcript }
    }

    pub fn from_path(path: impl AsRef<Path>) -> std::io::Result<Self> {
        Ok(Self::new(SearchTranscript::from_path(path)?))
    }
}

impl SearchClient for RecordedSearchClient {
    fn search(&self, request: &SearchRequest) -> Result<Vec<EvidenceItem>, SearchError> {
        match self.transcript.responses.get(&request.hash()) {
            Some(RecordedSearch { error: Some(e), .. }) => Err(SearchError::Transport(e.clone())),
            Some(recorded) => Ok(recorded.items.clone()),
            None => Err(SearchError::NotRecorded { channel: request.channel, query: request.query.clone() }),
        }
    }
}

/// Stand-in for a live backend: reports missing credentials when the key is
/// unset and a transport error otherwise, since no live backend is bundled.
#[derive(Debug, Clone, Default)]
pub struct UnconfiguredSearchClient {
    api_key: Option<String>,
}

impl UnconfiguredSearchClient {
    pub fn from_env() -> Self {
        Self { api_key: std::env::var(SEARCH_API_KEY_VAR).ok().filter(|k| !k.trim().is_empty()) }
    }
}

impl SearchClient for UnconfiguredSearchClient {
    fn search(&self, _request: &SearchRequest) -> Result<Vec<EvidenceItem>, SearchError> {
        match self.api_key {
            None => Err(SearchError::MissingCredentials(SEARCH_API_KEY_VAR.into())),
            Some(_) => Err(SearchError::Transport(
                "no live search backend in this build; supply a recorded search transcript".into(),
            )),
        }
    }
}

/// Fails every request with a transport error.
#[derive(Debug, Clone, Default)]
pub struct FailingSearchClient;

impl SearchClient for FailingSearchClient {
    fn search(&self, request: &SearchRequest) -> Result<Vec<EvidenceItem>, SearchError> {
        Err(SearchError::Transport(format!("{} channel unreachable", request.channel)))
    }
}

/// Wraps another client and records every exchange.
pub struct RecordingSearchClient<C> {
    inner: C,
    transcript: Mutex<SearchTranscript>,
}

impl<C: SearchClient> RecordingSearchClient<C> {
    pub fn new(inner: C) -> Self {
        Self { inner, transcript: Mutex::new(SearchTranscript::new()) }
    }

    pub fn transcript(&self) -> SearchTranscript {
        self.transcript.lock().unwrap_or_else(|p| p.into_inner()).clone()
    }
}

impl<C: SearchClient> SearchClient for RecordingSearchClient<C> {
    fn search(&self, request: &SearchRequest) -> Result<Vec<EvidenceItem>, SearchError> {
        let outcome = self.inner.search(request);
        let stored = outcome.clone().map_err(|e| e.to_string());
        self.transcript.lock().unwrap_or_else(|p| p.into_inner()).insert(request, stored);
        outcome
    }

    fn concurrency_safe(&self) -> bool {
        self.inner.concurrency_safe()
    }
}
