//! Self-contained HTML export of a session transcript.

use std::fmt::Write;

use chrono::{DateTime, SecondsFormat, Utc};
use thiserror::Error;

use super::{Payload, Role, Transcript};
use crate::text::escape_html;
use crate::vision::percent;
use crate::SourceOrigin;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ReportError {
    #[error("nothing to export: the transcript is empty")]
    EmptyTranscript,
}

const STYLE: &str = "body{font-family:sans-serif;max-width:60rem;margin:2rem auto;color:#222}\
.entry{border-left:4px solid #ccc;padding:.4rem .8rem;margin:.8rem 0}\
.user{border-color:#3a7bd5}.agent{border-color:#4caf50}\
.meta{font-size:.8rem;color:#666}\
pre{white-space:pre-wrap;font-family:inherit;margin:.3rem 0}\
.badge{display:inline-block;font-size:.75rem;padding:0 .4rem;border-radius:.6rem;margin-left:.4rem;color:#fff}\
.ontology{background:#2e7d32}.external{background:#e65100}\
table{border-collapse:collapse;margin:.4rem 0}td,th{border:1px solid #bbb;padding:.2rem .6rem;text-align:left}";

fn ts(t: &DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Secs, true)
}

fn badge(origin: SourceOrigin) -> String {
    let class = match origin {
        SourceOrigin::Ontology => "ontology",
        SourceOrigin::ExternalRetrieval => "external",
    };
    format!("<span class=\"badge {class}\">{}</span>", escape_html(origin.label()))
}

/// Renders every transcript entry in order with its source-origin badges,
/// score tables for image assessments, and a closing audit section.
pub fn export_report(transcript: &Transcript) -> Result<String, ReportError> {
    let entries = transcript.entries();
    let (Some(first), Some(last)) = (entries.first(), entries.last()) else {
        return Err(ReportError::EmptyTranscript);
    };
    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n");
    html.push_str("<title>LPBF Defect Session Report</title>\n");
    let _ = writeln!(html, "<style>{STYLE}</style>\n</head>\n<body>");
    html.push_str("<h1>LPBF Defect Session Report</h1>\n");
    let _ = writeln!(
        html,
        "<p class=\"meta\">Session from {} to {} · {} entries</p>",
        ts(&first.timestamp),
        ts(&last.timestamp),
        entries.len()
    );
    html.push_str("<h2>Conversation</h2>\n");
    let mut audit = Vec::new();
    for e in entries {
        let (class, who) = match e.role {
            Role::User => ("user", "You"),
            Role::Agent => ("agent", "Agent"),
        };
        let _ = write!(html, "<div class=\"entry {class}\">\n<div class=\"meta\">{who} · {}", ts(&e.timestamp));
        for origin in &e.source_origins {
            html.push_str(&badge(*origin));
        }
        html.push_str("</div>\n");
        let _ = writeln!(html, "<pre>{}</pre>", escape_html(&e.text));
        for a in &e.attachments {
            let _ = writeln!(
                html,
                "<div class=\"meta\">Attachment: {} ({} bytes, sha256 {})</div>",
                escape_html(&a.filename),
                a.size,
                a.sha256
            );
        }
        match &e.payload {
            Some(Payload::AlignmentReport(view)) => {
                html.push_str("<table>\n<tr><th>Defect</th><th>Semantic alignment</th><th>Visual evidence</th></tr>\n");
                for h in &view.report.hypotheses {
                    let _ = writeln!(
                        html,
                        "<tr><td>{}</td><td>{}</td><td>{}</td></tr>",
                        escape_html(&h.defect),
                        percent(h.score),
                        escape_html(&h.evidence)
                    );
                }
                html.push_str("</table>\n");
            }
            Some(Payload::Audit { records }) => audit.extend(records.iter()),
            _ => {}
        }
        html.push_str("</div>\n");
    }
    html.push_str("<h2>Audit trail</h2>\n");
    if audit.is_empty() {
        html.push_str("<p>No external sources were consulted.</p>\n");
    } else {
        html.push_str("<table>\n<tr><th>Time</th><th>Action</th><th>Source</th><th>Reason</th></tr>\n");
        for r in audit {
            let source = if r.source_url.is_empty() {
                escape_html(&r.source_title)
            } else {
                format!("<a href=\"{}\">{}</a>", escape_html(&r.source_url), escape_html(&r.source_title))
            };
            let _ = writeln!(
                html,
                "<tr><td>{}</td><td>{}</td><td>{source}</td><td>{}</td></tr>",
                ts(&r.timestamp),
                r.action.label(),
                escape_html(&r.reason)
            );
        }
        html.push_str("</table>\n");
    }
    html.push_str("</body>\n</html>\n");
    Ok(html)
}
