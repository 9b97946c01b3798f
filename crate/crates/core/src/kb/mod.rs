//! Knowledge store: loads, validates and serves the LPBF defect knowledge base.
//!
//! The file format is a UTF-8 JSON document:
//!
//! ```json
//! {
//!   "schema_version": 1,
//!   "tree": { "Surface defects": { "Main": ["Balling", "Surface roughness"] } },
//!   "profiles": { "Balling": { "causes": ["High scan speed"], "notes": "", "provenance": "hasan2023" } },
//!   "causal": [ { "source": "Balling", "target": "Surface roughness", "kind": "defect_leads_to_defect" } ],
//!   "mitigations": [ { "material": "IN625", "defect": "Balling", "parameter": "laser_power",
//!                      "directive": "increase", "units": "W", "rationale": "...", "provenance": "..." } ]
//! }
//! ```
//!
//! A category maps to either an object of sub-categories or an array of leaf
//! defect names. Object key order is document order and is preserved.

mod mitigation;
mod tree;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::text::normalize;

pub use mitigation::{
    format_number, material_key, Bounds, CuratedGuidance, Directive, FallbackNeeded,
    MitigationLookup, MitigationRule, Parameter,
};
pub use tree::{
    CategoryNode, CategoryPath, Children, DefectTree, DirectoryEntry, DirectoryListing, EntryKind,
};

/// Highest `schema_version` this loader understands.
pub const SCHEMA_VERSION: u32 = 1;

/// The knowledge base shipped with the crate (`kb/lpbf_defects.json`).
pub const SHIPPED_KB_JSON: &str = include_str!("../../../../kb/lpbf_defects.json");

/// Where a piece of guidance came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceOrigin {
    Ontology,
    ExternalRetrieval,
}

impl SourceOrigin {
    pub fn label(self) -> &'static str {
        match self {
            SourceOrigin::Ontology => "Ontology",
            SourceOrigin::ExternalRetrieval => "External Retrieval",
        }
    }
}

impl fmt::Display for SourceOrigin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DefectProfile {
    pub defect: String,
    pub causes: Vec<String>,
    pub notes: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_hint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CausalKind {
    FactorLeadsToDefect,
    DefectLeadsToDefect,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CausalRelation {
    pub source: String,
    pub target: String,
    pub kind: CausalKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
}

impl CausalRelation {
    /// `Energy density → Balling`
    pub fn display(&self) -> String {
        format!("{} → {}", self.source, self.target)
    }
}

#[derive(Debug, Error)]
pub enum KbError {
    #[error("failed to read knowledge base: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed knowledge base document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("malformed knowledge base at {path}: {reason}")]
    Malformed { path: String, reason: String },
    #[error("unsupported schema_version {found} (this build reads up to {supported})")]
    UnsupportedSchemaVersion { found: u64, supported: u32 },
    #[error("duplicate leaf defect {name:?} at {second} (first seen at {first})")]
    DuplicateLeaf { name: String, first: String, second: String },
    #[error("{section} entry {location} references unknown defect {name:?}")]
    DanglingReference { section: &'static str, location: String, name: String },
    #[error("unknown defect {0:?}")]
    UnknownDefect(String),
}

/// Immutable, validated knowledge base. Share it behind an `Arc`.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeBase {
    tree: DefectTree,
    profiles: BTreeMap<String, DefectProfile>,
    causal: Vec<CausalRelation>,
    mitigations: Vec<MitigationRule>,
    schema_version: u32,
    leaf_index: HashMap<String, String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    schema_version: u64,
    tree: Value,
    #[serde(default)]
    profiles: serde_json::Map<String, Value>,
    #[serde(default)]
    causal: Vec<CausalRelation>,
    #[serde(default)]
    mitigations: Vec<MitigationRule>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    #[serde(default)]
    causes: Vec<String>,
    #[serde(default)]
    notes: String,
    #[serde(default)]
    image_hint: Option<String>,
    #[serde(default)]
    provenance: Option<String>,
}

impl KnowledgeBase {
    /// Parses and validates a knowledge base document.
    pub fn load(mut source: impl Read) -> Result<Self, KbError> {
        let mut bytes = Vec::new();
        source.read_to_end(&mut bytes)?;
        Self::from_slice(&bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, KbError> {
        let raw: RawDocument = serde_json::from_slice(bytes)?;
        if raw.schema_version == 0 || raw.schema_version > u64::from(SCHEMA_VERSION) {
            return Err(KbError::UnsupportedSchemaVersion {
                found: raw.schema_version,
                supported: SCHEMA_VERSION,
            });
        }
        let tree = parse_tree(&raw.tree)?;

        let mut leaf_index: HashMap<String, String> = HashMap::new();
        let mut leaf_paths: HashMap<String, String> = HashMap::new();
        for root in &tree.roots {
            index_leaves(root, root.name.clone(), &mut leaf_index, &mut leaf_paths)?;
        }

        let mut kb = KnowledgeBase {
            tree,
            profiles: BTreeMap::new(),
            causal: Vec::new(),
            mitigations: Vec::new(),
            schema_version: raw.schema_version as u32,
            leaf_index,
        };

        for (name, value) in raw.profiles {
            let location = format!("profiles.{name}");
            let profile: RawProfile = serde_json::from_value(value).map_err(|e| {
                KbError::Malformed { path: location.clone(), reason: e.to_string() }
            })?;
            let canonical = kb.canonical_leaf(&name).ok_or_else(|| KbError::DanglingReference {
                section: "profiles",
                location: location.clone(),
                name: name.clone(),
            })?;
            kb.profiles.insert(
                canonical.clone(),
                DefectProfile {
                    defect: canonical,
                    causes: profile.causes,
                    notes: profile.notes,
                    image_hint: profile.image_hint,
                    provenance: profile.provenance,
                },
            );
        }

        for (i, relation) in raw.causal.iter().enumerate() {
            let location = format!("causal[{i}]");
            if normalize(&relation.source) == normalize(&relation.target) {
                return Err(KbError::Malformed {
                    path: location,
                    reason: format!("self-loop on {:?}", relation.source),
                });
            }
            let source_leaf = kb.canonical_leaf(&relation.source);
            let target_leaf = kb.canonical_leaf(&relation.target);
            let dangling = match relation.kind {
                CausalKind::DefectLeadsToDefect => {
                    if source_leaf.is_none() {
                        Some(&relation.source)
                    } else if target_leaf.is_none() {
                        Some(&relation.target)
                    } else {
                        None
                    }
                }
                CausalKind::FactorLeadsToDefect => target_leaf.is_none().then_some(&relation.target),
            };
            if let Some(name) = dangling {
                return Err(KbError::DanglingReference {
                    section: "causal",
                    location,
                    name: name.clone(),
                });
            }
            let mut relation = relation.clone();
            if let Some(s) = source_leaf {
                relation.source = s;
            }
            if let Some(t) = target_leaf {
                relation.target = t;
            }
            kb.causal.push(relation);
        }

        for (i, rule) in raw.mitigations.iter().enumerate() {
            let location = format!("mitigations[{i}]");
            let canonical =
                kb.canonical_leaf(&rule.defect).ok_or_else(|| KbError::DanglingReference {
                    section: "mitigations",
                    location: location.clone(),
                    name: rule.defect.clone(),
                })?;
            if rule.directive == Directive::MaintainWithin && rule.bounds.is_none() {
                return Err(KbError::Malformed {
                    path: location,
                    reason: "maintain_within requires bounds".into(),
                });
            }
            if let Some(b) = rule.bounds {
                if !(b.low.is_finite() && b.high.is_finite()) || b.low > b.high {
                    return Err(KbError::Malformed {
                        path: location,
                        reason: format!("invalid bounds {}..{}", b.low, b.high),
                    });
                }
            }
            if rule.units.trim().is_empty() || rule.material.trim().is_empty() {
                return Err(KbError::Malformed {
                    path: location,
                    reason: "material and units must be non-empty".into(),
                });
            }
            let mut rule = rule.clone();
            rule.defect = canonical;
            kb.mitigations.push(rule);
        }

        Ok(kb)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, KbError> {
        let bytes = std::fs::read(path)?;
        Self::from_slice(&bytes)
    }

    /// The knowledge base compiled into the crate.
    pub fn shipped() -> Self {
        Self::from_slice(SHIPPED_KB_JSON.as_bytes()).expect("shipped knowledge base is valid")
    }

    pub fn tree(&self) -> &DefectTree {
        &self.tree
    }

    pub fn schema_version(&self) -> u32 {
        self.schema_version
    }

    pub fn profiles(&self) -> impl Iterator<Item = &DefectProfile> {
        self.profiles.values()
    }

    pub fn causal_relations(&self) -> &[CausalRelation] {
        &self.causal
    }

    pub fn mitigation_rules(&self) -> &[MitigationRule] {
        &self.mitigations
    }

    /// KB casing for a leaf name, matched case-insensitively.
    pub fn canonical_leaf(&self, name: &str) -> Option<String> {
        self.leaf_index.get(&normalize(name)).cloned()
    }

    pub fn is_leaf(&self, name: &str) -> bool {
        self.leaf_index.contains_key(&normalize(name))
    }

    pub fn leaf_count(&self) -> usize {
        self.leaf_index.len()
    }

    pub fn traverse_defect_categories(&self) -> DirectoryListing {
        self.tree.traverse()
    }

    pub fn find_path(&self, target: &str) -> Option<CategoryPath> {
        self.tree.find_path(target)
    }

    pub fn flatten_vocabulary(&self, scope: VocabularyScope) -> Vec<String> {
        let mut terms: Vec<String> = Vec::new();
        match scope {
            VocabularyScope::LeavesOnly => {
                terms.extend(self.tree.leaves().into_iter().map(str::to_string));
            }
            VocabularyScope::AllTerms => {
                let mut seen = std::collections::HashSet::new();
                for entry in self.tree.traverse().entries {
                    if seen.insert(entry.name.clone()) {
                        terms.push(entry.name);
                    }
                }
            }
        }
        terms
    }

    pub fn profile(&self, defect: &str) -> Option<&DefectProfile> {
        let canonical = self.canonical_leaf(defect)?;
        self.profiles.get(&canonical)
    }

    /// Incoming relations (`X → defect`) in KB order.
    pub fn causes_of(&self, defect: &str) -> Result<Vec<&CausalRelation>, KbError> {
        let canonical = self.require_leaf(defect)?;
        Ok(self.causal.iter().filter(|r| r.target == canonical).collect())
    }

    /// Outgoing relations (`defect → Y`) in KB order.
    pub fn consequences_of(&self, defect: &str) -> Result<Vec<&CausalRelation>, KbError> {
        let canonical = self.require_leaf(defect)?;
        Ok(self.causal.iter().filter(|r| r.source == canonical).collect())
    }

    /// Curated rules for (defect, material) tagged as ontology-sourced, or a
    /// signal that the external-retrieval path is required.
    pub fn mitigation_for(&self, defect: &str, material: &str) -> Result<MitigationLookup, KbError> {
        let canonical = self.require_leaf(defect)?;
        let key = material_key(material);
        let rules: Vec<MitigationRule> = self
            .mitigations
            .iter()
            .filter(|r| r.defect == canonical && material_key(&r.material) == key)
            .cloned()
            .collect();
        if rules.is_empty() {
            Ok(MitigationLookup::FallbackNeeded(FallbackNeeded {
                defect: canonical,
                material: material.trim().to_string(),
                source_origin: SourceOrigin::ExternalRetrieval,
            }))
        } else {
            let material = rules[0].material.clone();
            Ok(MitigationLookup::Curated(CuratedGuidance {
                defect: canonical,
                material,
                rules,
                source_origin: SourceOrigin::Ontology,
            }))
        }
    }

    /// Materials with at least one curated rule, in KB order.
    pub fn curated_materials(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for rule in &self.mitigations {
            if !out.iter().any(|m| material_key(m) == material_key(&rule.material)) {
                out.push(&rule.material);
            }
        }
        out
    }

    fn require_leaf(&self, defect: &str) -> Result<String, KbError> {
        self.canonical_leaf(defect).ok_or_else(|| KbError::UnknownDefect(defect.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VocabularyScope {
    LeavesOnly,
    AllTerms,
}

fn parse_tree(value: &Value) -> Result<DefectTree, KbError> {
    let map = value.as_object().ok_or_else(|| KbError::Malformed {
        path: "tree".into(),
        reason: "expected an object of top-level families".into(),
    })?;
    let mut roots = Vec::with_capacity(map.len());
    for (name, child) in map {
        roots.push(parse_category(name, child, &format!("tree.{name}"))?);
    }
    Ok(DefectTree::new(roots))
}

fn parse_category(name: &str, value: &Value, path: &str) -> Result<CategoryNode, KbError> {
    if name.trim().is_empty() {
        return Err(KbError::Malformed { path: path.into(), reason: "empty category name".into() });
    }
    let children = match value {
        Value::Object(map) => {
            let mut children = Vec::with_capacity(map.len());
            for (child_name, child) in map {
                children.push(parse_category(child_name, child, &format!("{path}.{child_name}"))?);
            }
            if children.is_empty() {
                return Err(KbError::Malformed { path: path.into(), reason: "category has no children".into() });
            }
            Children::Categories(children)
        }
        Value::Array(items) => {
            if items.is_empty() {
                return Err(KbError::Malformed { path: path.into(), reason: "category has no children".into() });
            }
            let mut leaves = Vec::with_capacity(items.len());
            for (i, item) in items.iter().enumerate() {
                match item.as_str() {
                    Some(s) if !s.trim().is_empty() => leaves.push(s.to_string()),
                    _ => {
                        return Err(KbError::Malformed {
                            path: format!("{path}[{i}]"),
                            reason: "leaf defects must be non-empty strings".into(),
                        })
                    }
                }
            }
            Children::Leaves(leaves)
        }
        _ => {
            return Err(KbError::Malformed {
                path: path.into(),
                reason: "expected an object of categories or an array of defect names".into(),
            })
        }
    };
    Ok(CategoryNode { name: name.to_string(), children })
}

fn index_leaves(
    node: &CategoryNode,
    path: String,
    index: &mut HashMap<String, String>,
    paths: &mut HashMap<String, String>,
) -> Result<(), KbError> {
    match &node.children {
        Children::Leaves(leaves) => {
            for leaf in leaves {
                let key = normalize(leaf);
                if let Some(first) = paths.get(&key) {
                    return Err(KbError::DuplicateLeaf {
                        name: leaf.clone(),
                        first: first.clone(),
                        second: path.clone(),
                    });
                }
                paths.insert(key.clone(), path.clone());
                index.insert(key, leaf.clone());
            }
        }
        Children::Categories(children) => {
            for child in children {
                index_leaves(child, format!("{path} → {}", child.name), index, paths)?;
            }
        }
    }
    Ok(())
}
