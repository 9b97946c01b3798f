//! Parsing of free-text model answers into scored hypotheses.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::VisionError;
use crate::kb::{KnowledgeBase, VocabularyScope};
use crate::query::{close_matches, contains_on_word_boundary, DEFAULT_CUTOFF};
use crate::text::{collapse_whitespace, normalize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParsedHypothesis {
    /// Name as the model wrote it, markdown stripped.
    pub name: String,
    /// Matching leaf defect, or `None` when the name did not resolve.
    pub defect: Option<String>,
    pub score: f64,
    pub evidence: String,
}

fn hypothesis_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"^\s*(?:\d+[.)]\s*)?(?:[-*•]\s+)?(?:\*\*)?\s*(?P<name>[A-Za-z][^:*\n]*?)\s*(?:\*\*)?\s*:\s*(?:\*\*)?\s*(?P<score>\d+(?:\.\d+)?)\s*(?P<pct>%)?(?P<rest>.*)$",
        )
        .expect("hypothesis pattern compiles")
    })
}

fn highlight() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)highlighted in ([a-z]+)").expect("highlight pattern compiles"))
}

// Shorter words first; the longest matching prefix wins.
const SCORE_WORDS: [&str; 6] = ["score", "alignment", "confidence", "probability", "alignment score", "semantic alignment score"];

/// Returns (score, inline evidence) when the remainder of a line is a valid
/// score suffix.
fn score_of(raw: &str, percent: bool, rest: &str) -> Option<(f64, String)> {
    let value: f64 = raw.parse().ok()?;
    let score = if percent {
        if !(0.0..=100.0).contains(&value) {
            return None;
        }
        value / 100.0
    } else {
        if !(0.0..=1.0).contains(&value) {
            return None;
        }
        value
    };
    let rest = rest.replace("**", "");
    let rest = rest.trim().trim_end_matches(['.', '*']).trim();
    let lower = rest.to_lowercase();
    let word = SCORE_WORDS.iter().rev().find(|w| lower.starts_with(**w)).map_or(0, |w| w.len());
    let inline = rest[word..].trim();
    if inline.is_empty() {
        return Some((score, String::new()));
    }
    for sep in ['-', '–', '—', '(', ','] {
        if let Some(tail) = inline.strip_prefix(sep) {
            return Some((score, tail.trim().trim_end_matches(')').trim().to_string()));
        }
    }
    None
}

fn is_heading(line: &str) -> bool {
    let t = line.trim();
    t.starts_with("---") || t.starts_with('#')
}

fn is_correction_heading(line: &str) -> bool {
    let lower = line.to_lowercase();
    lower.contains("correction strategy") && (is_heading(line) || lower.trim().trim_matches(['*', ':']).trim() == "correction strategy")
}

fn clean_markup(line: &str) -> String {
    let t = line.trim().trim_start_matches(['-', '*', '•', ' ']).replace("**", "");
    collapse_whitespace(t.trim())
}

fn evidence_from(lines: &[&str]) -> String {
    for line in lines {
        let cleaned = clean_markup(line);
        if let Some((label, text)) = cleaned.split_once(':') {
            if label.trim().eq_ignore_ascii_case("visual evidence") {
                return text.trim().to_string();
            }
        }
    }
    let parts: Vec<String> = lines.iter().map(|l| clean_markup(l)).filter(|l| !l.is_empty()).collect();
    parts.join(" ")
}

/// Maps a model-written defect name to a KB leaf: a leaf named inside it,
/// the single leaf containing it, or the closest fuzzy match.
pub fn match_defect(name: &str, kb: &KnowledgeBase) -> Option<String> {
    let probe = normalize(name);
    if probe.is_empty() {
        return None;
    }
    if let Some(leaf) = kb.canonical_leaf(&probe) {
        return Some(leaf);
    }
    let mut leaves = kb.flatten_vocabulary(VocabularyScope::LeavesOnly);
    leaves.sort_by_key(|l| std::cmp::Reverse(l.chars().count()));
    if let Some(leaf) = leaves.iter().find(|l| contains_on_word_boundary(&probe, &normalize(l))) {
        return Some(leaf.clone());
    }
    let containing: Vec<&String> = leaves.iter().filter(|l| contains_on_word_boundary(&normalize(l), &probe)).collect();
    if containing.len() == 1 {
        return Some(containing[0].clone());
    }
    let leaves = kb.flatten_vocabulary(VocabularyScope::LeavesOnly);
    close_matches(&probe, &leaves, 1, DEFAULT_CUTOFF).into_iter().next().map(|m| m.term)
}

/// Scored hypothesis lines such as `1. **Keyhole Porosity**: 90% Probability`
/// or `lack of fusion: 0.85`. Percentages become fractions. Evidence is the
/// `Visual Evidence` line below a hypothesis, or the text that follows it.
/// Parsing stops at a correction-strategy heading.
pub fn parse_alignment_response(raw: &str, kb: &KnowledgeBase) -> Result<Vec<ParsedHypothesis>, VisionError> {
    let lines: Vec<&str> = raw.lines().collect();
    let end = lines.iter().position(|l| is_correction_heading(l)).unwrap_or(lines.len());
    let mut found: Vec<(usize, String, f64, String)> = Vec::new();
    for (i, line) in lines[..end].iter().enumerate() {
        let Some(caps) = hypothesis_line().captures(line) else { continue };
        let name = clean_markup(&caps["name"]);
        if name.eq_ignore_ascii_case("visual evidence") || name.eq_ignore_ascii_case("reasoning") {
            continue;
        }
        if let Some((score, inline)) = score_of(&caps["score"], caps.name("pct").is_some(), &caps["rest"]) {
            found.push((i, name, score, inline));
        }
    }
    if found.is_empty() {
        return Err(VisionError::Unparseable { raw: raw.to_string() });
    }
    let mut out = Vec::with_capacity(found.len());
    for (k, (i, name, score, inline)) in found.iter().enumerate() {
        let stop = found.get(k + 1).map_or(end, |next| next.0);
        let body: Vec<&str> = lines[i + 1..stop].iter().copied().take_while(|l| !is_heading(l)).collect();
        let evidence = if inline.is_empty() { evidence_from(&body) } else { inline.clone() };
        out.push(ParsedHypothesis { name: name.clone(), defect: match_defect(name, kb), score: *score, evidence });
    }
    Ok(out)
}

/// Text of the correction-strategy section, if the response has one.
pub fn correction_strategy(raw: &str) -> Option<String> {
    let lines: Vec<&str> = raw.lines().collect();
    let start = lines.iter().position(|l| is_correction_heading(l))? + 1;
    let body: Vec<&str> = lines[start..].iter().copied().take_while(|l| !is_heading(l)).collect();
    let text = body.join("\n").trim().to_string();
    (!text.is_empty()).then_some(text)
}

/// `Keyhole porosity: highlighted in green` notes from the evidence text.
pub fn region_annotations(hypotheses: &[ParsedHypothesis]) -> Vec<String> {
    let mut notes = Vec::new();
    for h in hypotheses {
        for caps in highlight().captures_iter(&h.evidence) {
            let label = h.defect.as_deref().unwrap_or(&h.name);
            notes.push(format!("{label}: highlighted in {}", caps[1].to_lowercase()));
        }
    }
    notes
}
