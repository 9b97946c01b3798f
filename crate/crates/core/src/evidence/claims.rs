//! Number + unit extraction from retrieved snippets.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::EvidenceItem;
use crate::kb::Parameter;

/// Units the extractor recognizes, exactly as written.
pub const RECOGNIZED_UNITS: [&str; 5] = ["W", "mm/s", "μm", "%", "J/mm³"];

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClaimSource {
    pub title: String,
    pub url: String,
}

impl ClaimSource {
    pub fn of(item: &EvidenceItem) -> Self {
        Self { title: item.title.clone(), url: item.url.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterClaim {
    pub parameter: Parameter,
    pub value: f64,
    pub units: String,
    pub source: ClaimSource,
    /// Byte range of the matched text within the (normalized) snippet.
    pub span: (usize, usize),
}

fn pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r"(?x)
            (?P<low>\d+(?:\.\d+)?)
            (?:\s*(?:–|-|to)\s*(?P<high>\d+(?:\.\d+)?))?
            \s*
            (?P<unit>J/mm³|mm/s|μm|%|W\b)",
        )
        .expect("claim pattern compiles")
    })
}

/// Micro sign (U+00B5) and Greek mu (U+03BC) both appear in the wild.
pub fn normalize_units(text: &str) -> String {
    text.replace('\u{00B5}', "\u{03BC}")
}

fn sentence_around(text: &str, start: usize, end: usize) -> &str {
    let from = text[..start].rfind(['.', ';', '\n']).map_or(0, |i| i + 1);
    let to = text[end..].find(['.', ';', '\n']).map_or(text.len(), |i| end + i);
    &text[from..to]
}

fn parameter_for(unit: &str, sentence: &str) -> Option<Parameter> {
    let lower = sentence.to_lowercase();
    match unit {
        "W" => Some(Parameter::LaserPower),
        "mm/s" => Some(Parameter::ScanSpeed),
        "J/mm³" => Some(Parameter::VolumetricEnergyDensity),
        "μm" if lower.contains("hatch") => Some(Parameter::HatchSpacing),
        "μm" if lower.contains("layer") => Some(Parameter::LayerThickness),
        "%" if lower.contains("oxygen") || sentence.contains("O₂") || sentence.contains("O2") => {
            Some(Parameter::OxygenLevel)
        }
        _ => None,
    }
}

/// Scans the item's snippet for number + unit pairs. A range such as
/// `30–50 μm` yields one claim per endpoint. Micrometre and percent values
/// need a parameter word in the same sentence; without one they are skipped.
pub fn extract_parameter_claims(item: &EvidenceItem) -> Vec<ParameterClaim> {
    let text = normalize_units(&item.snippet);
    let source = ClaimSource::of(item);
    let mut claims = Vec::new();
    for caps in pattern().captures_iter(&text) {
        let whole = caps.get(0).expect("group 0");
        let unit = &caps["unit"];
        let Some(parameter) = parameter_for(unit, sentence_around(&text, whole.start(), whole.end())) else {
            continue;
        };
        let values = [caps.name("low"), caps.name("high")];
        for value in values.into_iter().flatten() {
            let Ok(v) = value.as_str().parse::<f64>() else { continue };
            if !v.is_finite() {
                continue;
            }
            claims.push(ParameterClaim {
                parameter,
                value: v,
                units: unit.to_string(),
                source: source.clone(),
                span: (whole.start(), whole.end()),
            });
        }
    }
    claims
}
