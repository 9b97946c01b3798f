//! Multi-configuration ablation runs: manifest in, CSV + HTML out.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    build_confusion_with_classes, cohens_kappa, compute_metrics, ConfusionMatrix, EvalError, KappaBand, KappaResult,
    LabeledRecord, MetricsReport,
};
use crate::text::escape_html;

pub const CSV_HEADER: &str = "config_id,accuracy,macro_precision,macro_recall,macro_f1,kappa,kappa_band";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationEntry {
    pub config_id: String,
    #[serde(default)]
    pub description: String,
    /// Relative paths resolve against the manifest's directory.
    pub records_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AblationManifest {
    /// Optional fixed class order for matrices and tables.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub classes: Vec<String>,
    pub configurations: Vec<AblationEntry>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<AblationManifest, EvalError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
    let mut manifest: AblationManifest =
        serde_json::from_slice(&bytes).map_err(|e| EvalError::Manifest(format!("{}: {e}", path.display())))?;
    let mut seen = HashSet::new();
    for entry in &manifest.configurations {
        if entry.config_id.trim().is_empty() {
            return Err(EvalError::Manifest("empty config_id".into()));
        }
        if !seen.insert(entry.config_id.clone()) {
            return Err(EvalError::Manifest(format!("duplicate config_id {:?}", entry.config_id)));
        }
    }
    manifest.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(manifest)
}

#[derive(Debug, Deserialize)]
struct CsvRecord {
    item_id: String,
    reference: String,
    predicted: String,
}

/// Reads an `item_id,reference,predicted` CSV file.
pub fn read_records(path: &Path, config_id: &str) -> Result<Vec<LabeledRecord>, EvalError> {
    let fail = |reason: String| EvalError::Configuration { config_id: config_id.to_string(), reason };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(format!("cannot read {}: {e}", path.display())))?;
    let headers = reader.headers().map_err(|e| fail(format!("{}: {e}", path.display())))?.clone();
    if headers.iter().collect::<Vec<_>>() != ["item_id", "reference", "predicted"] {
        return Err(fail(format!("{}: header must be item_id,reference,predicted", path.display())));
    }
    let mut out = Vec::new();
    for (i, row) in reader.deserialize::<CsvRecord>().enumerate() {
        let line = i + 2;
        let row = row.map_err(|e| fail(format!("{} line {line}: {e}", path.display())))?;
        if row.item_id.is_empty() || row.reference.is_empty() || row.predicted.is_empty() {
            return Err(fail(format!("{} line {line}: empty field", path.display())));
        }
        out.push(LabeledRecord { item_id: row.item_id, reference: row.reference, predicted: row.predicted });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub config_id: String,
    pub description: String,
    pub records: usize,
    pub matrix: ConfusionMatrix,
    pub metrics: MetricsReport,
    /// `None` when kappa is undefined (expected agreement of 1).
    pub kappa: Option<KappaResult>,
}

impl AblationRow {
    pub fn band(&self) -> Option<KappaBand> {
        self.kappa.map(|k| KappaBand::of(k.kappa))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, config_id: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.config_id == config_id)
    }
}

fn evaluate(entry: &AblationEntry, manifest: &AblationManifest) -> Result<AblationRow, EvalError> {
    let path = if entry.records_path.is_absolute() {
        entry.records_path.clone()
    } else {
        manifest.base_dir.join(&entry.records_path)
    };
    let records = read_records(&path, &entry.config_id)?;
    let wrap = |e: EvalError| EvalError::Configuration { config_id: entry.config_id.clone(), reason: e.to_string() };
    let matrix = build_confusion_with_classes(&records, &manifest.classes).map_err(wrap)?;
    let metrics = compute_metrics(&matrix).map_err(wrap)?;
    let kappa = match cohens_kappa(&matrix) {
        Ok(k) => Some(k),
        Err(EvalError::DegenerateAgreement) => None,
        Err(e) => return Err(wrap(e)),
    };
    Ok(AblationRow {
        config_id: entry.config_id.clone(),
        description: entry.description.clone(),
        records: records.len(),
        matrix,
        metrics,
        kappa,
    })
}

/// Evaluates every configuration (concurrently) and, when `out_dir` is
/// given, writes `ablation_report.csv` and `ablation_report.html` there.
pub fn run_ablation(manifest: &AblationManifest, out_dir: Option<&Path>) -> Result<AblationReport, EvalError> {
    let results: Vec<Result<AblationRow, EvalError>> = std::thread::scope(|scope| {
        let handles: Vec<_> =
            manifest.configurations.iter().map(|entry| scope.spawn(move || evaluate(entry, manifest))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(EvalError::Manifest("evaluation worker panicked".into()))))
            .collect()
    });
    let rows = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let report = AblationReport { rows };
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("ablation_report.csv"), render_csv(&report))?;
        std::fs::write(dir.join("ablation_report.html"), render_html(&report))?;
    }
    Ok(report)
}

pub fn render_csv(report: &AblationReport) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for row in &report.rows {
        let m = &row.metrics;
        let (kappa, band) = match (row.kappa, row.band()) {
            (Some(k), Some(b)) => (format!("{:.4}", k.kappa), b.label().to_string()),
            _ => ("NA".to_string(), "undefined".to_string()),
        };
        let _ = writeln!(
            out,
            "{},{:.4},{:.4},{:.4},{:.4},{},{}",
            csv_field(&row.config_id),
            m.accuracy,
            m.macro_precision,
            m.macro_recall,
            m.macro_f1,
            kappa,
            band
        );
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn pct(v: f64) -> String {
    format!("{:.1}", v * 100.0)
}

pub fn render_html(report: &AblationReport) -> String {
    let mut h = String::new();
    h.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n<title>Ablation report</title>\n");
    h.push_str("<style>body{font-family:sans-serif;margin:2em}table{border-collapse:collapse;margin:1em 0}th,td{border:1px solid #999;padding:4px 8px;text-align:right}th:first-child,td:first-child{text-align:left}</style>\n");
    h.push_str("</head>\n<body>\n<h1>Ablation report</h1>\n<table>\n<tr><th>Config</th><th>Description</th><th>Records</th><th>Accuracy (%)</th><th>Precision (%)</th><th>Recall (%)</th><th>F1 (%)</th><th>Kappa</th><th>Agreement</th></tr>\n");
    for row in &report.rows {
        let m = &row.metrics;
        let (kappa, band) = match (row.kappa, row.band()) {
            (Some(k), Some(b)) => (format!("{:.3}", k.kappa), b.label()),
            _ => ("NA".to_string(), "undefined"),
        };
        let _ = writeln!(
            h,
            "<tr><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td><td>{}</td></tr>",
            escape_html(&row.config_id),
            escape_html(&row.description),
            row.records,
            pct(m.accuracy),
            pct(m.macro_precision),
            pct(m.macro_recall),
            pct(m.macro_f1),
            kappa,
            band
        );
    }
    h.push_str("</table>\n");
    for row in &report.rows {
        let _ = writeln!(h, "<h2>Configuration {}</h2>", escape_html(&row.config_id));
        h.push_str("<table>\n<tr><th>Class</th><th>Precision</th><th>Recall</th><th>F1</th><th>Support</th></tr>\n");
        for c in &row.metrics.per_class {
            let _ = writeln!(
                h,
                "<tr><td>{}</td><td>{:.4}</td><td>{:.4}</td><td>{:.4}</td><td>{}</td></tr>",
                escape_html(&c.class),
                c.precision,
                c.recall,
                c.f1,
                c.support
            );
        }
        h.push_str("</table>\n<table>\n<tr><th>Reference \\ Predicted</th>");
        for c in &row.matrix.classes {
            let _ = write!(h, "<th>{}</th>", escape_html(c));
        }
        h.push_str("</tr>\n");
        for (i, c) in row.matrix.classes.iter().enumerate() {
            let _ = write!(h, "<tr><td>{}</td>", escape_html(c));
            for v in &row.matrix.counts[i] {
                let _ = write!(h, "<td>{v}</td>");
            }
            h.push_str("</tr>\n");
        }
        h.push_str("</table>\n");
    }
    h.push_str("</body>\n</html>\n");
    h
}
