use std::fmt;

use serde::{Deserialize, Serialize};

use super::SourceOrigin;

/// Process parameters a mitigation rule (or a retrieved claim) can talk about.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    LaserPower,
    ScanSpeed,
    LayerThickness,
    HatchSpacing,
    OxygenLevel,
    VolumetricEnergyDensity,
    FocusOffset,
    GasFlow,
}

impl Parameter {
    pub const ALL: [Parameter; 8] = [
        Parameter::LaserPower,
        Parameter::ScanSpeed,
        Parameter::LayerThickness,
        Parameter::HatchSpacing,
        Parameter::OxygenLevel,
        Parameter::VolumetricEnergyDensity,
        Parameter::FocusOffset,
        Parameter::GasFlow,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Parameter::LaserPower => "Laser Power",
            Parameter::ScanSpeed => "Scan Speed",
            Parameter::LayerThickness => "Layer Thickness",
            Parameter::HatchSpacing => "Hatch Spacing",
            Parameter::OxygenLevel => "Oxygen Level",
            Parameter::VolumetricEnergyDensity => "Volumetric Energy Density (VED)",
            Parameter::FocusOffset => "Focus Offset",
            Parameter::GasFlow => "Gas Flow",
        }
    }
}

impl fmt::Display for Parameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Directive {
    Increase,
    Decrease,
    MaintainWithin,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub low: f64,
    pub high: f64,
}

impl Bounds {
    pub fn contains(&self, value: f64) -> bool {
        self.low <= value && value <= self.high
    }

    /// `65–90 J/mm³`
    pub fn describe(&self, units: &str) -> String {
        format!("{}–{} {}", format_number(self.low), format_number(self.high), units)
    }
}

/// Shortest decimal rendering: `65`, `0.1`, `2.5`.
pub fn format_number(value: f64) -> String {
    if value.fract() == 0.0 && value.abs() < 1e15 {
        format!("{}", value as i64)
    } else {
        let s = format!("{value}");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MitigationRule {
    pub material: String,
    pub defect: String,
    pub parameter: Parameter,
    pub directive: Directive,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<Bounds>,
    pub units: String,
    pub rationale: String,
    pub provenance: String,
}

impl MitigationRule {
    /// `Layer Thickness: Use thinner layers (30–50 μm)`
    pub fn display_line(&self) -> String {
        format!("{}: {}", self.parameter.label(), self.rationale)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CuratedGuidance {
    pub defect: String,
    pub material: String,
    pub rules: Vec<MitigationRule>,
    pub source_origin: SourceOrigin,
}

impl CuratedGuidance {
    /// Rules that carry numeric bounds for `parameter`.
    pub fn bounds_for(&self, parameter: Parameter) -> impl Iterator<Item = &MitigationRule> {
        self.rules.iter().filter(move |r| r.parameter == parameter && r.bounds.is_some())
    }
}

/// No curated rules exist for this (defect, material) pair; the caller should
/// take the external-retrieval path. Never carries parameter bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FallbackNeeded {
    pub defect: String,
    pub material: String,
    pub source_origin: SourceOrigin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MitigationLookup {
    Curated(CuratedGuidance),
    FallbackNeeded(FallbackNeeded),
}

impl MitigationLookup {
    pub fn source_origin(&self) -> SourceOrigin {
        match self {
            MitigationLookup::Curated(g) => g.source_origin,
            MitigationLookup::FallbackNeeded(f) => f.source_origin,
        }
    }

    pub fn curated(&self) -> Option<&CuratedGuidance> {
        match self {
            MitigationLookup::Curated(g) => Some(g),
            MitigationLookup::FallbackNeeded(_) => None,
        }
    }
}

/// Material ids compare case-insensitively, ignoring spaces and hyphens
/// (`IN625`, `in 625`, `IN-625`).
pub fn material_key(material: &str) -> String {
    material
        .chars()
        .filter(|c| !c.is_whitespace() && *c != '-' && *c != '_')
        .flat_map(char::to_uppercase)
        .collect()
}
