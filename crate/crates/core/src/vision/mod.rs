//! Hypothesis-guided micrograph assessment through a multimodal model.
//!
//! No image processing happens here: the image travels as opaque bytes to a
//! [`ModelAdapter`] together with a prompt built from the descriptor table,
//! and the free-text answer is parsed into semantic alignment scores.

mod descriptors;
mod parse;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kb::{CuratedGuidance, KnowledgeBase, MitigationLookup};
use crate::model::{GenerationConfig, ModelAdapter, ModelRequest, DEFAULT_FAST_MODEL, DEFAULT_PRO_MODEL};
use crate::SourceOrigin;

pub use descriptors::{
    load_descriptors, load_descriptors_from_path, offline_alignment_score, shipped_descriptors, Alignment,
    DefectDescriptor, Dimension, FeatureObservation, SHIPPED_DESCRIPTORS_JSON,
};
pub use parse::{correction_strategy, match_defect, parse_alignment_response, region_annotations, ParsedHypothesis};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VisionError {
    #[error("unknown hypothesis {0:?}: not a defect in the knowledge base")]
    UnknownHypothesis(String),
    #[error("image is empty")]
    EmptyImage,
    #[error("model selector has no variants")]
    NoVariants,
    #[error("all model variants failed: {}", .attempts.join("; "))]
    AllVariantsFailed { attempts: Vec<String> },
    #[error("model response contained no scored hypothesis")]
    Unparseable { raw: String },
    #[error("invalid descriptor table: {0}")]
    InvalidDescriptors(String),
}

/// Cycles deterministically through model variants (fast first, then pro).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSelector {
    variants: Vec<String>,
    attempt_index: usize,
}

impl ModelSelector {
    pub fn new(variants: Vec<String>) -> Result<Self, VisionError> {
        if variants.is_empty() {
            return Err(VisionError::NoVariants);
        }
        Ok(Self { variants, attempt_index: 0 })
    }

    pub fn fast_then_pro(fast: impl Into<String>, pro: impl Into<String>) -> Self {
        Self { variants: vec![fast.into(), pro.into()], attempt_index: 0 }
    }

    pub fn variants(&self) -> &[String] {
        &self.variants
    }

    pub fn attempt_index(&self) -> usize {
        self.attempt_index
    }

    pub fn select_model(&mut self) -> String {
        let model = self.variants[self.attempt_index % self.variants.len()].clone();
        self.attempt_index = self.attempt_index.wrapping_add(1);
        model
    }
}

impl Default for ModelSelector {
    fn default() -> Self {
        Self::fast_then_pro(DEFAULT_FAST_MODEL, DEFAULT_PRO_MODEL)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisScore {
    /// Leaf defect name, or the name as written when it did not resolve.
    pub defect: String,
    pub matched: bool,
    pub score: f64,
    pub evidence: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReportMitigation {
    Curated(CuratedGuidance),
    External {
        defect: String,
        material: String,
        /// The model's correction strategy, when it gave one.
        text: Option<String>,
        source_origin: SourceOrigin,
    },
}

impl ReportMitigation {
    pub fn source_origin(&self) -> SourceOrigin {
        match self {
            ReportMitigation::Curated(g) => g.source_origin,
            ReportMitigation::External { source_origin, .. } => *source_origin,
        }
    }
}

/// Parsed assessment. Carries no model id or timestamp, so a replayed
/// response always serializes to the same bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub hypothesis: Option<String>,
    pub hypotheses: Vec<HypothesisScore>,
    pub annotations: Vec<String>,
    pub mitigation: Option<ReportMitigation>,
}

impl AlignmentReport {
    pub fn top(&self) -> Option<&HypothesisScore> {
        self.hypotheses.first()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assessment {
    pub report: AlignmentReport,
    pub model: String,
    /// `model: error` for each failed attempt before the successful one.
    pub failed_attempts: Vec<String>,
    pub raw_response: String,
}

/// Prompt for one assessment. With a hypothesis the prompt targets that
/// defect; otherwise it asks for a general identification. Both embed the
/// descriptor table and the instruction to keep advice inside KB bounds.
pub fn build_assessment_prompt(
    hypothesis: Option<&str>,
    descriptors: &[DefectDescriptor],
    kb: &KnowledgeBase,
    material: Option<&str>,
) -> Result<String, VisionError> {
    let mut p = String::from("You are assessing a laser powder bed fusion (LPBF) micrograph (image attached).\n");
    match hypothesis {
        Some(h) => {
            let leaf = kb.canonical_leaf(h).ok_or_else(|| VisionError::UnknownHypothesis(h.to_string()))?;
            p.push_str(&format!(
                "The user suspects '{leaf}'. Evaluate how well the image matches this defect, dimension by dimension.\n"
            ));
            match descriptors.iter().find(|d| d.defect == leaf) {
                Some(d) => {
                    p.push_str("Expected features:\n");
                    p.push_str(&d.render());
                    let others: Vec<_> = descriptors.iter().filter(|o| o.defect != leaf).collect();
                    if !others.is_empty() {
                        p.push_str("Alternative defects to score as well:\n");
                        for o in others {
                            p.push_str(&o.render());
                        }
                    }
                }
                None => {
                    p.push_str("No curated descriptor exists for this defect. Reference descriptors:\n");
                    for d in descriptors {
                        p.push_str(&d.render());
                    }
                }
            }
        }
        None => {
            p.push_str("Identify which LPBF defects the image shows. Reference descriptors:\n");
            for d in descriptors {
                p.push_str(&d.render());
            }
        }
    }
    p.push_str(
        "Compare the image against morphology, edge profile, interior content and layer orientation.\n\
         Answer with one numbered line per candidate defect, formatted `N. **Defect name**: score`, \
         where score is a semantic alignment score between 0 and 1 (not a calibrated probability), \
         followed by a `Visual Evidence:` line describing the features you see.\n\
         Any process-parameter advice must stay within the curated knowledge-base bounds and go under a \
         `--- Correction Strategy ---` heading.\n",
    );
    if let (Some(h), Some(material)) = (hypothesis, material) {
        if let Ok(MitigationLookup::Curated(g)) = kb.mitigation_for(h, material) {
            let bounded: Vec<String> = g
                .rules
                .iter()
                .filter_map(|r| r.bounds.map(|b| format!("- {}: {}", r.parameter.label(), b.describe(&r.units))))
                .collect();
            if !bounded.is_empty() {
                p.push_str(&format!("Curated bounds for {} ({}):\n", g.defect, g.material));
                for line in bounded {
                    p.push_str(&line);
                    p.push('\n');
                }
            }
        }
    }
    Ok(p)
}

/// Everything an assessment needs besides the per-call inputs.
pub struct Assessor<'a> {
    pub kb: &'a KnowledgeBase,
    pub descriptors: &'a [DefectDescriptor],
    pub adapter: &'a dyn ModelAdapter,
    pub config: GenerationConfig,
}

impl<'a> Assessor<'a> {
    pub fn new(kb: &'a KnowledgeBase, descriptors: &'a [DefectDescriptor], adapter: &'a dyn ModelAdapter) -> Self {
        Self { kb, descriptors, adapter, config: GenerationConfig::locked() }
    }

    /// Sends prompt + image; on failure advances the selector and tries each
    /// remaining variant once. The top hypothesis gets curated guidance when
    /// the material is known, or the model's own correction strategy tagged
    /// as external retrieval when no curated rules exist.
    pub fn assess(
        &self,
        image: &[u8],
        hypothesis: Option<&str>,
        material: Option<&str>,
        selector: &mut ModelSelector,
    ) -> Result<Assessment, VisionError> {
        if image.is_empty() {
            return Err(VisionError::EmptyImage);
        }
        let hypothesis = match hypothesis {
            Some(h) => {
                Some(self.kb.canonical_leaf(h).ok_or_else(|| VisionError::UnknownHypothesis(h.to_string()))?)
            }
            None => None,
        };
        let prompt = build_assessment_prompt(hypothesis.as_deref(), self.descriptors, self.kb, material)?;
        let mut failed_attempts = Vec::new();
        let mut answered = None;
        for _ in 0..selector.variants().len() {
            let model = selector.select_model();
            let request = ModelRequest {
                model: model.clone(),
                prompt: prompt.clone(),
                image: Some(image.to_vec()),
                config: self.config,
            };
            match self.adapter.generate(&request) {
                Ok(response) => {
                    answered = Some((model, response.text));
                    break;
                }
                Err(e) => failed_attempts.push(format!("{model}: {e}")),
            }
        }
        let Some((model, raw)) = answered else {
            return Err(VisionError::AllVariantsFailed { attempts: failed_attempts });
        };
        let report = self.build_report(&raw, hypothesis, material)?;
        Ok(Assessment { report, model, failed_attempts, raw_response: raw })
    }

    pub fn build_report(
        &self,
        raw: &str,
        hypothesis: Option<String>,
        material: Option<&str>,
    ) -> Result<AlignmentReport, VisionError> {
        let parsed = parse_alignment_response(raw, self.kb)?;
        let annotations = region_annotations(&parsed);
        let mut hypotheses: Vec<HypothesisScore> = parsed
            .into_iter()
            .map(|p| HypothesisScore {
                matched: p.defect.is_some(),
                defect: p.defect.unwrap_or(p.name),
                score: p.score,
                evidence: p.evidence,
            })
            .collect();
        hypotheses.sort_by(|a, b| b.score.total_cmp(&a.score));
        let mitigation = match (hypotheses.first(), material.map(str::trim).filter(|m| !m.is_empty())) {
            (Some(top), Some(material)) if top.matched => match self.kb.mitigation_for(&top.defect, material) {
                Ok(MitigationLookup::Curated(g)) => Some(ReportMitigation::Curated(g)),
                Ok(MitigationLookup::FallbackNeeded(f)) => Some(ReportMitigation::External {
                    defect: f.defect,
                    material: f.material,
                    text: correction_strategy(raw),
                    source_origin: f.source_origin,
                }),
                Err(_) => None,
            },
            _ => None,
        };
        Ok(AlignmentReport { hypothesis, hypotheses, annotations, mitigation })
    }
}

/// Percent rendering used at presentation time: `0.9` → `90%`.
pub fn percent(score: f64) -> String {
    let p = (score * 1000.0).round() / 10.0;
    if p.fract() == 0.0 {
        format!("{}%", p as i64)
    } else {
        format!("{p:.1}%")
    }
}
