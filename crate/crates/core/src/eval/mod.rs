//! Classification metrics and inter-rater agreement.
//!
//! Rows of a [`ConfusionMatrix`] are reference classes, columns predicted
//! classes. Zero denominators make the affected precision, recall or F1
//! term 0, and such classes still count in the macro means.

mod ablation;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ablation::{
    load_manifest, read_records, render_csv, render_html, run_ablation, AblationEntry, AblationManifest,
    AblationReport, AblationRow, CSV_HEADER,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledRecord {
    pub item_id: String,
    pub reference: String,
    pub predicted: String,
}

impl LabeledRecord {
    pub fn new(item_id: impl Into<String>, reference: impl Into<String>, predicted: impl Into<String>) -> Self {
        Self { item_id: item_id.into(), reference: reference.into(), predicted: predicted.into() }
    }
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("no records to evaluate")]
    EmptyRecords,
    #[error("record {item_id:?} has an empty label")]
    EmptyLabel { item_id: String },
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("kappa is undefined: expected agreement is 1")]
    DegenerateAgreement,
    #[error("configuration {config_id}: {reason}")]
    Configuration { config_id: String, reason: String },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("writing report: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    /// Square matrix from explicit counts; `counts.len()` must equal
    /// `classes.len()` and every row must have that length.
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Option<Self> {
        let n = classes.len();
        (counts.len() == n && counts.iter().all(|r| r.len() == n)).then_some(Self { classes, counts })
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn row_total(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn column_total(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }
}

/// Classes in first-appearance order across references and predictions.
pub fn build_confusion(records: &[LabeledRecord]) -> Result<ConfusionMatrix, EvalError> {
    build_confusion_with_classes(records, &[])
}

/// Like [`build_confusion`], but `pinned` classes come first in the given
/// order; any other observed label follows in first-appearance order.
pub fn build_confusion_with_classes(records: &[LabeledRecord], pinned: &[String]) -> Result<ConfusionMatrix, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyRecords);
    }
    let mut classes: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |label: &str, classes: &mut Vec<String>| -> usize {
        if let Some(&i) = index.get(label) {
            return i;
        }
        classes.push(label.to_string());
        index.insert(label.to_string(), classes.len() - 1);
        classes.len() - 1
    };
    for label in pinned {
        intern(label, &mut classes);
    }
    let mut pairs = Vec::with_capacity(records.len());
    for r in records {
        if r.reference.trim().is_empty() || r.predicted.trim().is_empty() {
            return Err(EvalError::EmptyLabel { item_id: r.item_id.clone() });
        }
        let i = intern(&r.reference, &mut classes);
        let j = intern(&r.predicted, &mut classes);
        pairs.push((i, j));
    }
    let n = classes.len();
    let mut counts = vec![vec![0u64; n]; n];
    for (i, j) in pairs {
        counts[i][j] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

impl MetricsReport {
    pub fn class(&self, name: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|c| c.class == name)
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn compute_metrics(matrix: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let total = matrix.total();
    if total == 0 || matrix.classes.is_empty() {
        return Err(EvalError::EmptyMatrix);
    }
    let mut per_class = Vec::with_capacity(matrix.classes.len());
    for (c, class) in matrix.classes.iter().enumerate() {
        let tp = matrix.counts[c][c];
        let precision = ratio(tp, matrix.column_total(c));
        let recall = ratio(tp, matrix.row_total(c));
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class.push(ClassMetrics { class: class.clone(), precision, recall, f1, support: matrix.row_total(c) });
    }
    let n = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n;
    Ok(MetricsReport {
        accuracy: ratio(matrix.trace(), total),
        macro_precision: mean(|c| c.precision),
        macro_recall: mean(|c| c.recall),
        macro_f1: mean(|c| c.f1),
        per_class,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KappaResult {
    pub kappa: f64,
    pub p_o: f64,
    pub p_e: f64,
}

/// `(p_o − p_e) / (1 − p_e)` with `p_e` from the row and column marginals.
///
/// Evaluated as `(N·trace − Σ r·c) / (N² − Σ r·c)` in integers so the
/// quotient is rounded once.
pub fn cohens_kappa(matrix: &ConfusionMatrix) -> Result<KappaResult, EvalError> {
    let total = matrix.total();
    if total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let n = total as u128;
    let chance: u128 = (0..matrix.classes.len())
        .map(|c| matrix.row_total(c) as u128 * matrix.column_total(c) as u128)
        .sum();
    let n2 = n * n;
    if chance >= n2 {
        return Err(EvalError::DegenerateAgreement);
    }
    let agree = n * matrix.trace() as u128;
    let kappa = if agree >= chance {
        (agree - chance) as f64 / (n2 - chance) as f64
    } else {
        -((chance - agree) as f64 / (n2 - chance) as f64)
    };
    Ok(KappaResult { kappa, p_o: matrix.trace() as f64 / total as f64, p_e: chance as f64 / n2 as f64 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl KappaBand {
    /// Bands start at 0, 0.2, 0.4, 0.6 and 0.8; negative values are poor.
    pub fn of(kappa: f64) -> Self {
        match kappa {
            k if k < 0.0 => KappaBand::Poor,
            k if k < 0.2 => KappaBand::Slight,
            k if k < 0.4 => KappaBand::Fair,
            k if k < 0.6 => KappaBand::Moderate,
            k if k < 0.8 => KappaBand::Substantial,
            _ => KappaBand::AlmostPerfect,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            KappaBand::Poor => "poor agreement",
            KappaBand::Slight => "slight agreement",
            KappaBand::Fair => "fair agreement",
            KappaBand::Moderate => "moderate agreement",
            KappaBand::Substantial => "substantial agreement",
            KappaBand::AlmostPerfect => "almost perfect agreement",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn records(pairs: &[(&str, &str)]) -> Vec<LabeledRecord> {
        pairs.iter().enumerate().map(|(i, (r, p))| LabeledRecord::new(format!("r{i}"), *r, *p)).collect()
    }

    #[test]
    fn confusion_shapes() {
        let m = build_confusion(&records(&[("A", "A"), ("B", "B")])).unwrap();
        assert_eq!(m.counts, vec![vec![1, 0], vec![0, 1]]);
        let m = build_confusion(&records(&[("A", "B")])).unwrap();
        assert_eq!(m.classes, vec!["A", "B"]);
        assert_eq!(m.counts, vec![vec![0, 1], vec![0, 0]]);
        assert!(matches!(build_confusion(&[]), Err(EvalError::EmptyRecords)));
        assert!(matches!(build_confusion(&records(&[("A", " ")])), Err(EvalError::EmptyLabel { .. })));
    }

    #[test]
    fn hand_computed_macro_f1() {
        let m = build_confusion(&records(&[("A", "A"), ("A", "B"), ("B", "B")])).unwrap();
        let r = compute_metrics(&m).unwrap();
        assert!((r.class("A").unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.class("B").unwrap().f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.macro_f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn zero_division_counts_as_zero() {
        // class C is predicted but never a reference: recall 0/0 → 0
        let m = build_confusion(&records(&[("A", "A"), ("A", "C")])).unwrap();
        let r = compute_metrics(&m).unwrap();
        let c = r.class("C").unwrap();
        assert_eq!((c.precision, c.recall, c.f1), (0.0, 0.0, 0.0));
        assert!((r.macro_recall - 0.25).abs() < 1e-12);
    }

    #[test]
    fn kappa_examples() {
        let m = ConfusionMatrix::from_counts(vec!["a".into(), "b".into()], vec![vec![40, 10], vec![10, 40]]).unwrap();
        let k = cohens_kappa(&m).unwrap();
        assert_eq!((k.p_o, k.p_e), (0.8, 0.5));
        assert_eq!(k.kappa, 0.6);
        let perfect = build_confusion(&records(&[("A", "A"), ("B", "B")])).unwrap();
        assert_eq!(cohens_kappa(&perfect).unwrap().kappa, 1.0);
        let single = ConfusionMatrix::from_counts(vec!["a".into()], vec![vec![10]]).unwrap();
        assert!(matches!(cohens_kappa(&single), Err(EvalError::DegenerateAgreement)));
    }

    #[test]
    fn bands() {
        assert_eq!(KappaBand::of(0.66).label(), "substantial agreement");
        assert_eq!(KappaBand::of(0.60), KappaBand::Substantial);
        assert_eq!(KappaBand::of(0.454), KappaBand::Moderate);
        assert_eq!(KappaBand::of(-0.01), KappaBand::Poor);
        assert_eq!(KappaBand::of(1.0), KappaBand::AlmostPerfect);
    }
}
