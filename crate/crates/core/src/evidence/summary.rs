//! Consolidated summary of retrieved literature through a text model.

use serde::{Deserialize, Serialize};

use super::{redacted_snippet, AuditAction, AuditRecord, Channel, ConflictResolution, EvidenceBundle, EvidenceItem};
use crate::clock::Clock;
use crate::kb::CuratedGuidance;
use crate::model::{GenerationConfig, ModelAdapter, ModelRequest};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reference {
    pub channel: Channel,
    pub title: String,
    pub url: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConsolidatedSummary {
    /// Absent when the model call failed or there was nothing to summarize.
    pub text: Option<String>,
    pub references: Vec<Reference>,
    pub audit: Vec<AuditRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Items handed to the model: scholar results, or web results when the
/// scholar channel returned nothing. Image results are never summarized.
pub fn summary_sources(bundle: &EvidenceBundle) -> Vec<&EvidenceItem> {
    let scholar: Vec<_> = bundle.items_for(Channel::Scholar).collect();
    if !scholar.is_empty() {
        return scholar;
    }
    bundle.items_for(Channel::Web).collect()
}

pub fn build_summary_prompt(defect: &str, sources: &[(String, String)], guidance: Option<&CuratedGuidance>) -> String {
    let mut p = format!(
        "Summarize what the following laser powder bed fusion sources say about '{defect}' in one paragraph.\n\
         Use only the sources below. Do not recommend process parameter values outside the curated knowledge-base bounds.\n"
    );
    if let Some(g) = guidance {
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
    p.push_str("Sources:\n");
    for (i, (title, snippet)) in sources.iter().enumerate() {
        p.push_str(&format!("{}. {}\n{}\n", i + 1, title, snippet));
    }
    p
}

/// Prompts the model with the (redacted) snippets of the summary sources and
/// pairs the answer with their titles and urls. The bundle's own audit is
/// carried over; each supplied item adds a `used` record.
pub fn consolidate_summary(
    bundle: &EvidenceBundle,
    resolution: Option<&ConflictResolution>,
    guidance: Option<&CuratedGuidance>,
    adapter: &dyn ModelAdapter,
    model: &str,
    clock: &dyn Clock,
) -> ConsolidatedSummary {
    let mut out = ConsolidatedSummary { audit: bundle.audit.clone(), ..Default::default() };
    let sources = summary_sources(bundle);
    if sources.is_empty() {
        return out;
    }
    let texts: Vec<(String, String)> =
        sources.iter().map(|item| (item.title.clone(), redacted_snippet(item, resolution))).collect();
    let request = ModelRequest {
        model: model.to_string(),
        prompt: build_summary_prompt(&bundle.defect, &texts, guidance),
        image: None,
        config: GenerationConfig::locked(),
    };
    match adapter.generate(&request) {
        Ok(response) => {
            out.text = Some(response.text.trim().to_string());
            for item in sources {
                out.references.push(Reference { channel: item.channel, title: item.title.clone(), url: item.url.clone() });
                out.audit.push(AuditRecord {
                    source_title: item.title.clone(),
                    source_url: item.url.clone(),
                    action: AuditAction::Used,
                    reason: "supplied to consolidated summary".into(),
                    timestamp: clock.now(),
                });
            }
        }
        Err(e) => {
            out.error = Some(e.to_string());
            out.audit.push(AuditRecord {
                source_title: format!("Consolidated summary for '{}'", bundle.defect),
                source_url: String::new(),
                action: AuditAction::Unverified,
                reason: format!("summary omitted: {e}"),
                timestamp: clock.now(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clock::SteppingClock;
    use crate::model::StubModelAdapter;

    fn bundle() -> EvidenceBundle {
        let item = |channel, title: &str| EvidenceItem {
            channel,
            title: title.into(),
            url: format!("https://example.org/{}", title.replace(' ', "-")),
            snippet: format!("{title} snippet"),
        };
        EvidenceBundle {
            defect: "Balling".into(),
            query: "Balling laser powder bed fusion".into(),
            items: vec![item(Channel::Image, "img"), item(Channel::Web, "web a"), item(Channel::Scholar, "paper a"), item(Channel::Scholar, "paper b")],
            claims: Vec::new(),
            audit: Vec::new(),
        }
    }

    #[test]
    fn summary_lists_scholar_references_and_audits_them() {
        let clock = SteppingClock::fixture();
        let stub = StubModelAdapter::replying("  The melt pool becomes unstable.\n");
        let s = consolidate_summary(&bundle(), None, None, &stub, "fast", &clock);
        assert_eq!(s.text.as_deref(), Some("The melt pool becomes unstable."));
        let titles: Vec<_> = s.references.iter().map(|r| r.title.as_str()).collect();
        assert_eq!(titles, vec!["paper a", "paper b"]);
        assert!(s.audit.iter().all(|a| a.action == AuditAction::Used));
        let prompt = &stub.requests()[0].prompt;
        assert!(prompt.contains("paper a snippet") && !prompt.contains("web a snippet"));
        assert!(prompt.contains("curated knowledge-base bounds"));
    }

    #[test]
    fn empty_bundle_skips_the_model() {
        let clock = SteppingClock::fixture();
        let stub = StubModelAdapter::replying("x");
        let s = consolidate_summary(&EvidenceBundle::default(), None, None, &stub, "fast", &clock);
        assert!(s.text.is_none() && s.references.is_empty());
        assert!(stub.requests().is_empty());
    }

    #[test]
    fn adapter_failure_keeps_audit() {
        let clock = SteppingClock::fixture();
        let mut b = bundle();
        b.audit.push(AuditRecord {
            source_title: "Web search".into(),
            source_url: String::new(),
            action: AuditAction::Unverified,
            reason: "fetch failure".into(),
            timestamp: clock.now(),
        });
        let s = consolidate_summary(&b, None, None, &StubModelAdapter::failing(), "fast", &clock);
        assert!(s.text.is_none() && s.references.is_empty());
        assert_eq!(s.audit.len(), 2);
        assert_eq!(s.audit[0].reason, "fetch failure");
    }
}
