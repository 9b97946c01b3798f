//! Knowledge-driven decision support for laser powder bed fusion (LPBF) defects.
//!
//! The crate is organised around an immutable [`kb::KnowledgeBase`] (defect
//! hierarchy, causal relations, material-scoped mitigation rules) and the
//! engines that read it:
//!
//! - [`query`]: substring + gestalt fuzzy interpretation of free text and
//!   disambiguation of broad categories into leaf defects.
//! - [`evidence`]: external evidence retrieval through a pluggable search
//!   client, parameter-claim extraction and ontology-first conflict resolution.
//! - [`vision`]: hypothesis-guided micrograph assessment through a multimodal
//!   model adapter with a locked generation configuration.
//! - [`eval`]: confusion matrices, macro metrics, Cohen's kappa and ablation
//!   reports.
//! - [`session`]: the interactive diagnostic state machine shared by the REPL
//!   and the HTTP service, plus HTML report export.

pub mod clock;
pub mod eval;
pub mod evidence;
pub mod kb;
pub mod model;
pub mod query;
pub mod recording;
pub mod session;
pub mod text;
pub mod vision;

pub use kb::{KnowledgeBase, SourceOrigin};
