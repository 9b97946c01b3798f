//! External evidence retrieval with ontology-first conflict resolution.
//!
//! Retrieved material is supplementary: parameter values found in snippets
//! are checked against the curated bounds in the knowledge base, values that
//! violate a bound are discarded and redacted, and every decision lands in an
//! audit trail.

mod claims;
mod conflict;
mod search;
mod summary;

use std::fmt;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::clock::Clock;

pub use claims::{extract_parameter_claims, normalize_units, ClaimSource, ParameterClaim, RECOGNIZED_UNITS};
pub use conflict::{resolve_conflicts, ConflictResolution, Decision};
pub use search::{
    FailingSearchClient, RecordedSearch, RecordedSearchClient, RecordingSearchClient, SearchClient,
    SearchError, SearchRequest, SearchTranscript, UnconfiguredSearchClient, SEARCH_API_KEY_VAR,
};
pub use summary::{
    build_summary_prompt, consolidate_summary, summary_sources, ConsolidatedSummary, Reference,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Web,
    Scholar,
    Image,
}

impl Channel {
    /// Display order used when every channel is requested.
    pub const ALL: [Channel; 3] = [Channel::Image, Channel::Web, Channel::Scholar];

    pub fn key(self) -> &'static str {
        match self {
            Channel::Web => "web",
            Channel::Scholar => "scholar",
            Channel::Image => "image",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::Web => "Web",
            Channel::Scholar => "Scholar",
            Channel::Image => "Image",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvidenceItem {
    pub channel: Channel,
    pub title: String,
    pub url: String,
    #[serde(default)]
    pub snippet: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditAction {
    Used,
    Discarded,
    Unverified,
}

impl AuditAction {
    pub fn label(self) -> &'static str {
        match self {
            AuditAction::Used => "used",
            AuditAction::Discarded => "discarded",
            AuditAction::Unverified => "unverified",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditRecord {
    pub source_title: String,
    pub source_url: String,
    pub action: AuditAction,
    pub reason: String,
    pub timestamp: DateTime<Utc>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvidenceBundle {
    pub defect: String,
    pub query: String,
    pub items: Vec<EvidenceItem>,
    pub claims: Vec<ParameterClaim>,
    pub audit: Vec<AuditRecord>,
}

impl EvidenceBundle {
    pub fn items_for(&self, channel: Channel) -> impl Iterator<Item = &EvidenceItem> {
        self.items.iter().filter(move |i| i.channel == channel)
    }
}

/// Sites the web channel is restricted to.
pub const SCHOLARLY_SITES: [&str; 6] = [
    "sciencedirect.com",
    "springer.com",
    "tandfonline.com",
    "mdpi.com",
    "asmedigitalcollection.asme.org",
    "researchgate.net",
];

/// `<defect> laser powder bed fusion`
pub fn base_query(defect: &str) -> String {
    format!("{defect} laser powder bed fusion")
}

pub fn channel_query(defect: &str, channel: Channel) -> String {
    let base = base_query(defect);
    match channel {
        Channel::Web => {
            let sites: Vec<String> = SCHOLARLY_SITES.iter().map(|s| format!("site:{s}")).collect();
            format!("{base} ({})", sites.join(" OR "))
        }
        Channel::Scholar | Channel::Image => base,
    }
}

/// One request per distinct channel, in the order given. A failing channel
/// is logged as an unverified audit record and the others still run; only
/// missing credentials abort the whole fetch.
pub fn fetch_evidence(
    defect: &str,
    channels: &[Channel],
    client: &dyn SearchClient,
    clock: &dyn Clock,
) -> Result<EvidenceBundle, SearchError> {
    let mut wanted: Vec<Channel> = Vec::new();
    for c in channels {
        if !wanted.contains(c) {
            wanted.push(*c);
        }
    }
    let requests: Vec<SearchRequest> =
        wanted.iter().map(|&channel| SearchRequest { channel, query: channel_query(defect, channel) }).collect();

    let outcomes: Vec<Result<Vec<EvidenceItem>, SearchError>> = if client.concurrency_safe() && requests.len() > 1 {
        std::thread::scope(|scope| {
            let handles: Vec<_> = requests.iter().map(|r| scope.spawn(move || client.search(r))).collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or_else(|_| Err(SearchError::Transport("search worker panicked".into()))))
                .collect()
        })
    } else {
        requests.iter().map(|r| client.search(r)).collect()
    };

    let mut bundle = EvidenceBundle { defect: defect.to_string(), query: base_query(defect), ..Default::default() };
    for (request, outcome) in requests.iter().zip(outcomes) {
        match outcome {
            Ok(items) => {
                for mut item in items {
                    item.channel = request.channel;
                    if item.title.trim().is_empty() || item.url.trim().is_empty() {
                        continue;
                    }
                    bundle.items.push(item);
                }
            }
            Err(SearchError::MissingCredentials(var)) => return Err(SearchError::MissingCredentials(var)),
            Err(e) => bundle.audit.push(AuditRecord {
                source_title: format!("{} search for '{}'", request.channel.label(), defect),
                source_url: String::new(),
                action: AuditAction::Unverified,
                reason: format!("fetch failure: {e}"),
                timestamp: clock.now(),
            }),
        }
    }
    bundle.claims = bundle.items.iter().flat_map(extract_parameter_claims).collect();
    Ok(bundle)
}

/// Placeholder left where a discarded value was cut out of a snippet.
pub const REDACTION: &str = "[value removed: outside curated bounds]";

/// The item's snippet with the text of every discarded claim cut out.
pub fn redacted_snippet(item: &EvidenceItem, resolution: Option<&ConflictResolution>) -> String {
    let text = normalize_units(&item.snippet);
    let Some(resolution) = resolution else { return text };
    let source = ClaimSource::of(item);
    let mut spans: Vec<(usize, usize)> = resolution
        .discarded
        .iter()
        .filter(|d| d.claim.source == source)
        .map(|d| d.claim.span)
        .filter(|&(s, e)| s < e && e <= text.len() && text.is_char_boundary(s) && text.is_char_boundary(e))
        .collect();
    spans.sort_unstable();
    spans.dedup();
    let mut out = String::with_capacity(text.len());
    let mut cursor = 0;
    for (start, end) in spans {
        if start < cursor {
            continue;
        }
        out.push_str(&text[cursor..start]);
        out.push_str(REDACTION);
        cursor = end;
    }
    out.push_str(&text[cursor..]);
    out
}
