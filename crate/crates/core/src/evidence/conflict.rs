//! Ontology-first conflict resolution for retrieved parameter claims.

use serde::{Deserialize, Serialize};

use super::claims::ParameterClaim;
use super::{AuditAction, AuditRecord};
use crate::clock::Clock;
use crate::kb::{format_number, KnowledgeBase, MitigationLookup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub claim: ParameterClaim,
    pub reason: String,
}

/// Every input claim lands in exactly one of the three lists.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConflictResolution {
    /// Within every curated bound for the parameter.
    pub kept: Vec<Decision>,
    /// Outside a curated bound; never surfaced as guidance.
    pub discarded: Vec<Decision>,
    /// No curated bound to check against.
    pub unverified: Vec<Decision>,
    pub audit: Vec<AuditRecord>,
}

impl ConflictResolution {
    pub fn len(&self) -> usize {
        self.kept.len() + self.discarded.len() + self.unverified.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

enum Verdict {
    Keep(String),
    Discard(String),
    Unverified(String),
}

fn judge(claim: &ParameterClaim, lookup: &MitigationLookup) -> Verdict {
    let value = format!("{} {}", format_number(claim.value), claim.units);
    let guidance = match lookup {
        MitigationLookup::Curated(g) => g,
        MitigationLookup::FallbackNeeded(f) => {
            return Verdict::Unverified(format!(
                "{value}: no curated rules for {} on {}",
                f.defect, f.material
            ))
        }
    };
    let bounded: Vec<_> = guidance.bounds_for(claim.parameter).collect();
    if bounded.is_empty() {
        return Verdict::Unverified(format!(
            "{value}: no curated bound for {} ({})",
            claim.parameter.label(),
            guidance.material
        ));
    }
    let comparable: Vec<_> = bounded.iter().filter(|r| r.units == claim.units).collect();
    if comparable.is_empty() {
        return Verdict::Unverified(format!(
            "{value}: units differ from the curated bound in {}",
            bounded[0].units
        ));
    }
    for rule in &comparable {
        let bounds = rule.bounds.expect("filtered on bounds");
        if !bounds.contains(claim.value) {
            return Verdict::Discard(format!(
                "{value} violates {} ({} {}, {})",
                bounds.describe(&rule.units),
                guidance.material,
                rule.parameter.label(),
                guidance.defect
            ));
        }
    }
    let bounds = comparable[0].bounds.expect("filtered on bounds");
    Verdict::Keep(format!("{value} within {}", bounds.describe(&comparable[0].units)))
}

/// Checks each claim against the curated bounds for (defect, material).
/// Unknown defects are treated like an uncurated pair: every claim is
/// unverified.
pub fn resolve_conflicts(
    claims: &[ParameterClaim],
    kb: &KnowledgeBase,
    defect: &str,
    material: &str,
    clock: &dyn Clock,
) -> ConflictResolution {
    let lookup = kb.mitigation_for(defect, material).unwrap_or_else(|_| {
        MitigationLookup::FallbackNeeded(crate::kb::FallbackNeeded {
            defect: defect.to_string(),
            material: material.to_string(),
            source_origin: crate::SourceOrigin::ExternalRetrieval,
        })
    });
    let mut out = ConflictResolution::default();
    for claim in claims {
        let (action, reason, bucket) = match judge(claim, &lookup) {
            Verdict::Keep(r) => (AuditAction::Used, r, &mut out.kept),
            Verdict::Discard(r) => (AuditAction::Discarded, r, &mut out.discarded),
            Verdict::Unverified(r) => (AuditAction::Unverified, r, &mut out.unverified),
        };
        bucket.push(Decision { claim: claim.clone(), reason: reason.clone() });
        out.audit.push(AuditRecord {
            source_title: claim.source.title.clone(),
            source_url: claim.source.url.clone(),
            action,
            reason,
            timestamp: clock.now(),
        });
    }
    out
}
