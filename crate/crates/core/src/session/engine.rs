//! Shared, read-only dependencies of every session.

use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clock::{Clock, SystemClock};
use crate::evidence::{RecordedSearchClient, SearchClient, UnconfiguredSearchClient, SEARCH_API_KEY_VAR};
use crate::kb::{KbError, KnowledgeBase};
use crate::model::{self, ModelAdapter, RecordedModelAdapter, DEFAULT_FAST_MODEL, DEFAULT_PRO_MODEL, MODEL_API_KEY_VAR};
use crate::vision::{load_descriptors_from_path, shipped_descriptors, DefectDescriptor, VisionError};

/// Environment variable naming an alternative knowledge-base file.
pub const KB_PATH_VAR: &str = "DEFECT_SAGE_KB";
pub const DEFAULT_MATERIAL: &str = "IN625";
pub const DEFAULT_LISTEN_ADDR: &str = "127.0.0.1:8080";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureFlags {
    pub external_retrieval_enabled: bool,
    pub image_flow_enabled: bool,
}

impl FeatureFlags {
    pub const ALL_ON: FeatureFlags = FeatureFlags { external_retrieval_enabled: true, image_flow_enabled: true };
    /// Pure-KB mode.
    pub const OFFLINE: FeatureFlags = FeatureFlags { external_retrieval_enabled: false, image_flow_enabled: false };
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self::ALL_ON
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    /// `None` uses the shipped knowledge base.
    pub kb_path: Option<PathBuf>,
    pub descriptors_path: Option<PathBuf>,
    pub search_api_key_var: String,
    pub model_api_key_var: String,
    pub fast_model: String,
    pub pro_model: String,
    pub listen_addr: String,
    pub flags: FeatureFlags,
    /// Material used without prompting; `None` prompts with IN625 as default.
    pub material: Option<String>,
    pub search_transcript: Option<PathBuf>,
    pub model_transcript: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            kb_path: None,
            descriptors_path: None,
            search_api_key_var: SEARCH_API_KEY_VAR.into(),
            model_api_key_var: MODEL_API_KEY_VAR.into(),
            fast_model: DEFAULT_FAST_MODEL.into(),
            pro_model: DEFAULT_PRO_MODEL.into(),
            listen_addr: DEFAULT_LISTEN_ADDR.into(),
            flags: FeatureFlags::default(),
            material: None,
            search_transcript: None,
            model_transcript: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Kb(#[from] KbError),
    #[error(transparent)]
    Descriptors(#[from] VisionError),
    #[error("cannot load transcript {path}: {source}")]
    Transcript { path: PathBuf, source: std::io::Error },
}

/// Per-session settings derived from the service configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionSettings {
    pub flags: FeatureFlags,
    pub material: Option<String>,
    pub fast_model: String,
    pub pro_model: String,
}

impl Default for SessionSettings {
    fn default() -> Self {
        Self {
            flags: FeatureFlags::default(),
            material: None,
            fast_model: DEFAULT_FAST_MODEL.into(),
            pro_model: DEFAULT_PRO_MODEL.into(),
        }
    }
}

#[derive(Clone)]
pub struct Engine {
    pub kb: Arc<KnowledgeBase>,
    pub descriptors: Arc<Vec<DefectDescriptor>>,
    pub search: Option<Arc<dyn SearchClient>>,
    pub model: Option<Arc<dyn ModelAdapter>>,
    pub clock: Arc<dyn Clock>,
    pub settings: SessionSettings,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("leaves", &self.kb.leaf_count())
            .field("search", &self.search.is_some())
            .field("model", &self.model.is_some())
            .field("settings", &self.settings)
            .finish()
    }
}

impl Engine {
    /// Knowledge base only: no search client, no model, system clock.
    pub fn kb_only(kb: KnowledgeBase) -> Self {
        let descriptors = shipped_descriptors(&kb).unwrap_or_default();
        Self {
            kb: Arc::new(kb),
            descriptors: Arc::new(descriptors),
            search: None,
            model: None,
            clock: Arc::new(SystemClock),
            settings: SessionSettings { flags: FeatureFlags::OFFLINE, ..SessionSettings::default() },
        }
    }

    pub fn with_search(mut self, client: Arc<dyn SearchClient>) -> Self {
        self.search = Some(client);
        self
    }

    pub fn with_model(mut self, adapter: Arc<dyn ModelAdapter>) -> Self {
        self.model = Some(adapter);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_settings(mut self, settings: SessionSettings) -> Self {
        self.settings = settings;
        self
    }

    /// Loads the knowledge base, descriptors and any recorded transcripts.
    /// Without a search transcript the search client reports missing
    /// credentials or an unavailable backend; without a model transcript no
    /// model is attached.
    pub fn from_config(config: &ServiceConfig, clock: Arc<dyn Clock>) -> Result<Self, EngineError> {
        let kb = match &config.kb_path {
            Some(path) => KnowledgeBase::from_path(path)?,
            None => KnowledgeBase::shipped(),
        };
        let descriptors = match &config.descriptors_path {
            Some(path) => load_descriptors_from_path(path, &kb)?,
            None => shipped_descriptors(&kb)?,
        };
        let search: Option<Arc<dyn SearchClient>> = match &config.search_transcript {
            Some(path) => Some(Arc::new(
                RecordedSearchClient::from_path(path)
                    .map_err(|source| EngineError::Transcript { path: path.clone(), source })?,
            )),
            None if config.flags.external_retrieval_enabled => Some(Arc::new(UnconfiguredSearchClient::from_env())),
            None => None,
        };
        let model = match &config.model_transcript {
            Some(path) => Some(model::shared(
                RecordedModelAdapter::from_path(path)
                    .map_err(|source| EngineError::Transcript { path: path.clone(), source })?,
            )),
            None => None,
        };
        Ok(Self {
            kb: Arc::new(kb),
            descriptors: Arc::new(descriptors),
            search,
            model,
            clock,
            settings: SessionSettings {
                flags: config.flags,
                material: config.material.clone().filter(|m| !m.trim().is_empty()),
                fast_model: config.fast_model.clone(),
                pro_model: config.pro_model.clone(),
            },
        })
    }
}
