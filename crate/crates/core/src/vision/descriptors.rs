//! Four-dimension visual descriptors for the defects the image flow targets.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::VisionError;
use crate::kb::KnowledgeBase;

pub const SHIPPED_DESCRIPTORS_JSON: &str = include_str!("../../../../kb/descriptors.json");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Dimension {
    Morphology,
    EdgeProfile,
    InteriorContent,
    LayerOrientation,
}

impl Dimension {
    pub const ALL: [Dimension; 4] =
        [Dimension::Morphology, Dimension::EdgeProfile, Dimension::InteriorContent, Dimension::LayerOrientation];

    pub fn label(self) -> &'static str {
        match self {
            Dimension::Morphology => "Morphology",
            Dimension::EdgeProfile => "Edge profile",
            Dimension::InteriorContent => "Interior content",
            Dimension::LayerOrientation => "Layer orientation",
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectDescriptor {
    pub defect: String,
    pub dimensions: BTreeMap<Dimension, String>,
    pub provenance: String,
}

impl DefectDescriptor {
    pub fn render(&self) -> String {
        let mut out = format!("{}:\n", self.defect);
        for (dimension, text) in &self.dimensions {
            out.push_str(&format!("  - {}: {}\n", dimension.label(), text));
        }
        out
    }
}

#[derive(Debug, Deserialize)]
struct DescriptorFile {
    descriptors: Vec<DefectDescriptor>,
}

/// Parses a descriptor table and checks it against the knowledge base:
/// every defect must be a leaf, appear once, and carry all four dimensions.
pub fn load_descriptors(bytes: &[u8], kb: &KnowledgeBase) -> Result<Vec<DefectDescriptor>, VisionError> {
    let file: DescriptorFile =
        serde_json::from_slice(bytes).map_err(|e| VisionError::InvalidDescriptors(e.to_string()))?;
    let mut out: Vec<DefectDescriptor> = Vec::with_capacity(file.descriptors.len());
    for mut d in file.descriptors {
        let canonical = kb
            .canonical_leaf(&d.defect)
            .ok_or_else(|| VisionError::InvalidDescriptors(format!("{:?} is not a leaf defect", d.defect)))?;
        if out.iter().any(|o| o.defect == canonical) {
            return Err(VisionError::InvalidDescriptors(format!("{canonical:?} described twice")));
        }
        for dimension in Dimension::ALL {
            match d.dimensions.get(&dimension) {
                Some(text) if !text.trim().is_empty() => {}
                _ => {
                    return Err(VisionError::InvalidDescriptors(format!(
                        "{canonical:?} lacks the {} dimension",
                        dimension.label()
                    )))
                }
            }
        }
        d.defect = canonical;
        out.push(d);
    }
    Ok(out)
}

pub fn load_descriptors_from_path(path: impl AsRef<Path>, kb: &KnowledgeBase) -> Result<Vec<DefectDescriptor>, VisionError> {
    let bytes = std::fs::read(path.as_ref()).map_err(|e| VisionError::InvalidDescriptors(e.to_string()))?;
    load_descriptors(&bytes, kb)
}

pub fn shipped_descriptors(kb: &KnowledgeBase) -> Result<Vec<DefectDescriptor>, VisionError> {
    load_descriptors(SHIPPED_DESCRIPTORS_JSON.as_bytes(), kb)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    High,
    Low,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureObservation {
    pub dimension: Dimension,
    pub observed: String,
    pub alignment: Alignment,
}

/// Rule-based test double: the share of the descriptor's dimensions observed
/// with high alignment. Dimensions without an observation count as low, and
/// repeated observations of one dimension count once.
pub fn offline_alignment_score(observations: &[FeatureObservation], descriptor: &DefectDescriptor) -> f64 {
    let total = descriptor.dimensions.len();
    if total == 0 {
        return 0.0;
    }
    let high = descriptor
        .dimensions
        .keys()
        .filter(|d| observations.iter().any(|o| o.dimension == **d && o.alignment == Alignment::High))
        .count();
    high as f64 / total as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shipped_descriptors_are_complete() {
        let kb = KnowledgeBase::shipped();
        let d = shipped_descriptors(&kb).unwrap();
        let names: Vec<_> = d.iter().map(|d| d.defect.as_str()).collect();
        assert_eq!(names, vec!["Lack of fusion porosity", "Keyhole porosity", "Gas porosity", "Balling"]);
        assert!(d.iter().all(|d| d.dimensions.len() == 4));
        assert_eq!(d[0].dimensions[&Dimension::Morphology], "Irregular, sharp-edged voids");
    }

    #[test]
    fn incomplete_or_unknown_descriptors_are_rejected() {
        let kb = KnowledgeBase::shipped();
        let missing = br#"{"descriptors":[{"defect":"Balling","dimensions":{"morphology":"beads"},"provenance":"x"}]}"#;
        assert!(load_descriptors(missing, &kb).is_err());
        let unknown = br#"{"descriptors":[{"defect":"Rust","dimensions":{},"provenance":"x"}]}"#;
        assert!(load_descriptors(unknown, &kb).is_err());
    }

    #[test]
    fn offline_score_fractions() {
        let kb = KnowledgeBase::shipped();
        let d = &shipped_descriptors(&kb).unwrap()[0];
        let obs = |dim, alignment| FeatureObservation { dimension: dim, observed: String::new(), alignment };
        let all_high: Vec<_> = Dimension::ALL.iter().map(|&x| obs(x, Alignment::High)).collect();
        assert_eq!(offline_alignment_score(&all_high, d), 1.0);
        assert_eq!(offline_alignment_score(&[], d), 0.0);
        let half = [obs(Dimension::Morphology, Alignment::High), obs(Dimension::EdgeProfile, Alignment::High), obs(Dimension::InteriorContent, Alignment::Low)];
        assert_eq!(offline_alignment_score(&half, d), 0.5);
    }
}
