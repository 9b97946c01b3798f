//! Structured agent output and its plain-text rendering.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::evidence::{AuditRecord, Channel, EvidenceItem, Reference};
use crate::kb::format_number;
use crate::vision::{percent, AlignmentReport, ReportMitigation};
use crate::SourceOrigin;

pub const BANNER: &str = "LPBF Defect Agent is (Smart NLP Search & Image Analysis) Ready!";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MenuOption {
    pub key: String,
    pub label: String,
}

pub fn main_menu_options() -> Vec<MenuOption> {
    [
        ("1", "Show main defect types"),
        ("2", "List categories"),
        ("3", "Classify a defect (Supports fuzzy search)"),
        ("4", "Explore a defect (Numeric Menu)"),
        ("5", "Export Output (HTML & PNG)"),
        ("6", "📷 Analyze User Image (AI Vision)"),
        ("0", "Back to Home"),
    ]
    .into_iter()
    .map(|(key, label)| MenuOption { key: key.into(), label: label.into() })
    .collect()
}

/// The options block of the main menu.
pub fn render_main_menu() -> String {
    let mut out = String::from("■ Available Options\n");
    for o in main_menu_options() {
        let _ = writeln!(out, "[{}] → {}", o.key, o.label);
    }
    out.pop();
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationLine {
    pub parameter: String,
    pub text: String,
    pub source_origin: SourceOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefectCard {
    pub defect: String,
    pub category_path: Vec<String>,
    pub causes: Vec<String>,
    pub notes: String,
    pub material: String,
    pub mitigation: Vec<MitigationLine>,
    /// Set when no curated rules exist for the material.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback_notice: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimLine {
    pub parameter: String,
    pub value: String,
    pub source_title: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceView {
    pub defect: String,
    /// Snippets have discarded values cut out.
    pub items: Vec<EvidenceItem>,
    pub summary: Option<String>,
    pub references: Vec<Reference>,
    /// Values with no curated bound, shown as unverified literature values.
    pub unverified_claims: Vec<ClaimLine>,
    pub discarded_claims: usize,
    pub source_origin: SourceOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentView {
    pub image_name: String,
    pub model: String,
    pub report: AlignmentReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Payload {
    Text { text: String },
    Notice { text: String },
    Menu { banner: Option<String>, options: Vec<MenuOption> },
    QuestionYesNo { question: String },
    QuestionChoice { prompt: String, options: Vec<String>, footer: Option<String> },
    DefectCard(DefectCard),
    EvidenceList(EvidenceView),
    Causal { defect: String, causes: Vec<String>, consequences: Vec<String> },
    AlignmentReport(AlignmentView),
    Audit { records: Vec<AuditRecord> },
    Report { filename: String },
}

impl Payload {
    pub fn kind(&self) -> &'static str {
        match self {
            Payload::Text { .. } => "text",
            Payload::Notice { .. } => "notice",
            Payload::Menu { .. } => "menu",
            Payload::QuestionYesNo { .. } => "question_yes_no",
            Payload::QuestionChoice { .. } => "question_choice",
            Payload::DefectCard(_) => "defect_card",
            Payload::EvidenceList(_) => "evidence_list",
            Payload::Causal { .. } => "causal",
            Payload::AlignmentReport(_) => "alignment_report",
            Payload::Audit { .. } => "audit",
            Payload::Report { .. } => "report",
        }
    }

    /// Source-origin tags carried by guidance in this payload.
    pub fn source_origins(&self) -> Vec<SourceOrigin> {
        let mut tags: Vec<SourceOrigin> = Vec::new();
        let mut add = |t: SourceOrigin| {
            if !tags.contains(&t) {
                tags.push(t);
            }
        };
        match self {
            Payload::DefectCard(card) => {
                add(SourceOrigin::Ontology);
                card.mitigation.iter().for_each(|m| add(m.source_origin));
            }
            Payload::Causal { .. } => add(SourceOrigin::Ontology),
            Payload::EvidenceList(view) => add(view.source_origin),
            Payload::AlignmentReport(view) => {
                if let Some(m) = &view.report.mitigation {
                    add(m.source_origin());
                }
            }
            _ => {}
        }
        tags
    }

    pub fn render(&self) -> String {
        match self {
            Payload::Text { text } | Payload::Notice { text } => text.clone(),
            Payload::Menu { banner, .. } => match banner {
                Some(b) => format!("{b}\n\n{}", render_main_menu()),
                None => render_main_menu(),
            },
            Payload::QuestionYesNo { question } => format!("❓ {question} (yes/no)"),
            Payload::QuestionChoice { prompt, options, footer } => {
                let mut out = prompt.clone();
                for (i, o) in options.iter().enumerate() {
                    let _ = write!(out, "\n[{}] {}", i + 1, o);
                }
                if let Some(f) = footer {
                    let _ = write!(out, "\n{f}");
                }
                out
            }
            Payload::DefectCard(card) => render_card(card),
            Payload::EvidenceList(view) => render_evidence(view),
            Payload::Causal { defect, causes, consequences } => render_causal(defect, causes, consequences),
            Payload::AlignmentReport(view) => render_alignment(view),
            Payload::Audit { records } => render_audit(records),
            Payload::Report { filename } => format!("✅ Report ready: {filename}"),
        }
    }
}

fn render_card(card: &DefectCard) -> String {
    let mut out = format!("Exploring: {}\n\n", card.defect);
    let _ = writeln!(out, "Category: {}", card.category_path.join(" → "));
    if !card.causes.is_empty() {
        let _ = writeln!(out, " Causes: {}", card.causes.join(", "));
    }
    if let Some(notice) = &card.fallback_notice {
        let _ = writeln!(out, " Optimization Parameters ({}):", card.material);
        let _ = writeln!(out, " - {notice}");
    } else if !card.mitigation.is_empty() {
        let origin = card.mitigation[0].source_origin;
        let _ = writeln!(out, " Optimization Parameters ({}, source: {}):", card.material, origin.label());
        for m in &card.mitigation {
            let _ = writeln!(out, " - {}: {}", m.parameter, m.text);
        }
    }
    if !card.notes.is_empty() {
        let _ = writeln!(out, " Note: {}", card.notes);
    }
    out.pop();
    out
}

fn channel_heading(channel: Channel, defect: &str) -> String {
    format!("{} search for '{}':", channel.label(), defect)
}

fn render_evidence(view: &EvidenceView) -> String {
    let mut out = String::from(" --- Additional fetched resources ---\n");
    for channel in Channel::ALL {
        let items: Vec<_> = view.items.iter().filter(|i| i.channel == channel).collect();
        if items.is_empty() {
            continue;
        }
        let _ = writeln!(out, "\n{}\n", channel_heading(channel, &view.defect));
        for (i, item) in items.iter().enumerate() {
            match channel {
                Channel::Image => {
                    let _ = writeln!(out, "{}. {}\n Source: {}", i + 1, item.title, item.url);
                }
                Channel::Web => {
                    let _ = writeln!(out, "{}. {}\n<{}>", i + 1, item.title, item.url);
                    if !item.snippet.is_empty() {
                        let _ = writeln!(out, " {}", item.snippet);
                    }
                }
                Channel::Scholar => {
                    let _ = writeln!(out, "{}. {} ... {}", i + 1, item.title, item.snippet);
                }
            }
        }
    }
    if !view.unverified_claims.is_empty() {
        out.push_str("\nParameter values reported in retrieved literature (unverified, no curated bound):\n");
        for c in &view.unverified_claims {
            let _ = writeln!(out, " - {}: {} ({})", c.parameter, c.value, c.source_title);
        }
    }
    if view.discarded_claims > 0 {
        let _ = writeln!(
            out,
            "\n{} retrieved parameter value(s) outside the curated bounds were discarded.",
            view.discarded_claims
        );
    }
    if let Some(summary) = &view.summary {
        let _ = writeln!(out, "\n--- Consolidated Summary (AI Synthesized) ---\n\n{summary}");
        if !view.references.is_empty() {
            out.push_str("\nReferences:\n");
            for (i, r) in view.references.iter().enumerate() {
                let _ = writeln!(out, "{}. {} <{}>", i + 1, r.title, r.url);
            }
        }
    }
    out.pop();
    out
}

fn render_causal(defect: &str, causes: &[String], consequences: &[String]) -> String {
    if causes.is_empty() && consequences.is_empty() {
        return format!("No causal relationships are encoded for '{defect}'.");
    }
    let mut out = String::new();
    if !causes.is_empty() {
        let _ = writeln!(out, "Factors leading to {defect}:");
        for c in causes {
            let _ = writeln!(out, "  • {c}");
        }
    }
    if !consequences.is_empty() {
        let _ = writeln!(out, "{defect} can lead to:");
        for c in consequences {
            let _ = writeln!(out, "  • {c}");
        }
    }
    out.pop();
    out
}

fn render_alignment(view: &AlignmentView) -> String {
    let report = &view.report;
    let mut out = format!("🔍 AI Analysis for: {}\n", view.image_name);
    match &report.hypothesis {
        Some(h) => {
            let _ = writeln!(out, "Hypothesis: Are you suspecting '{h}' defect? (targeted evaluation)");
        }
        None => out.push_str("Hypothesis: none (general identification)\n"),
    }
    out.push_str("\n--- Defect Analysis ---\n");
    for (i, h) in report.hypotheses.iter().enumerate() {
        let flag = if h.matched { "" } else { " (not in knowledge base)" };
        let _ = writeln!(
            out,
            "{}. {}{}: {} semantic alignment ({})",
            i + 1,
            h.defect,
            flag,
            percent(h.score),
            format_number((h.score * 1000.0).round() / 1000.0)
        );
        if !h.evidence.is_empty() {
            let _ = writeln!(out, "   Visual evidence: {}", h.evidence);
        }
    }
    if !report.annotations.is_empty() {
        out.push_str("\nRegions:\n");
        for a in &report.annotations {
            let _ = writeln!(out, " - {a}");
        }
    }
    match &report.mitigation {
        Some(ReportMitigation::Curated(g)) => {
            let _ = writeln!(out, "\n--- Correction Strategy ({}, source: {}) ---", g.material, g.source_origin.label());
            for r in &g.rules {
                let _ = writeln!(out, " - {}", r.display_line());
            }
        }
        Some(ReportMitigation::External { defect, material, text, source_origin }) => {
            let _ = writeln!(out, "\n--- Correction Strategy ({material}, source: {}) ---", source_origin.label());
            let _ = writeln!(
                out,
                "No curated mitigation mapping exists for {defect} on {material}; interpret this guidance with caution."
            );
            match text {
                Some(t) => {
                    let _ = writeln!(out, "{t}");
                }
                None => out.push_str("The model response contained no correction strategy.\n"),
            }
        }
        None => {}
    }
    out.push_str("\nScores are semantic alignment scores, not calibrated probabilities.");
    out
}

fn render_audit(records: &[AuditRecord]) -> String {
    let mut out = String::from("Audit trail:");
    for r in records {
        let url = if r.source_url.is_empty() { String::new() } else { format!(" <{}>", r.source_url) };
        let _ = write!(out, "\n - [{}] {}{}: {}", r.action.label(), r.source_title, url, r.reason);
    }
    out
}
