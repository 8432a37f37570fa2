use std::fmt::Write;

use super::breakdown::ErrorBreakdown;
use super::metrics::MetricReport;
use crate::model::Category;

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

// undefined ratios (zero denominators) print as `-`
fn cell(m: &MetricReport, name: &str, x: f64) -> String {
    if m.undefined.iter().any(|u| u == name) {
        "-".to_owned()
    } else {
        pct(x)
    }
}

/// One row per configuration: Acc, F1, Sens, Spec, FP Rate, plus the F1
/// delta against the first row when there is more than one.
pub fn render_summary_table(rows: &[(&str, &MetricReport)]) -> String {
    let width = rows
        .iter()
        .map(|(n, _)| n.len())
        .max()
        .unwrap_or(0)
        .max("Configuration".len());
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>7}  {:>6}",
        "Configuration", "Acc", "F1", "Prec", "Sens", "Spec", "FP Rate", "dF1"
    );
    let base = rows.first().map(|(_, m)| m.f1);
    for (i, (name, m)) in rows.iter().enumerate() {
        let delta = match (i, base) {
            (0, _) | (_, None) => "-".to_owned(),
            (_, Some(b)) => format!("{:+.2}", 100.0 * (m.f1 - b)),
        };
        let _ = writeln!(
            out,
            "{:<width$}  {:>6}  {:>6}  {:>6}  {:>6}  {:>6}  {:>7}  {:>6}",
            name,
            cell(m, "accuracy", m.accuracy),
            cell(m, "f1", m.f1),
            cell(m, "precision", m.precision),
            cell(m, "recall_misinfo", m.recall_misinfo),
            cell(m, "recall_not_misinfo", m.recall_not_misinfo),
            cell(m, "fp_rate", m.fp_rate),
            delta
        );
    }
    out
}

/// Accuracy by category type, one column per configuration. Missing
/// categories print as `-`.
pub fn render_category_table(columns: &[(&str, &MetricReport)]) -> String {
    let labels: Vec<&str> = Category::ALL.iter().map(|c| c.display_name()).collect();
    let width = labels.iter().map(|l| l.len()).max().unwrap_or(4);
    let mut out = String::new();
    let _ = write!(out, "{:<width$}", "Type");
    for (name, _) in columns {
        let _ = write!(out, "  {:>10}", name);
    }
    out.push('\n');
    for cat in Category::ALL {
        let _ = write!(out, "{:<width$}", cat.display_name());
        for (_, m) in columns {
            let cell = m.per_category.get(&cat).map_or_else(
                || "-".to_owned(),
                |s| format!("{} ({}/{})", pct(s.accuracy), s.correct, s.n),
            );
            let _ = write!(out, "  {:>10}", cell);
        }
        out.push('\n');
    }
    out
}

pub fn render_confusion(m: &MetricReport) -> String {
    let c = m.confusion;
    format!(
        "n={} tp={} fp={} fn={} tn={} uncertain={} brier={:.4} ece={:.4} (bins={})\n",
        m.n, c.tp, c.fp, c.fn_, c.tn, m.n_uncertain, m.brier, m.ece, m.ece_bins
    )
}

pub fn render_errors(b: &ErrorBreakdown) -> String {
    if b.is_empty() {
        return "no misclassifications\n".to_owned();
    }
    let mut out = String::new();
    for (bucket, e) in &b.buckets {
        let _ = writeln!(
            out,
            "{:<17} {:>5}  fp={} fn={}",
            serde_json::to_value(bucket)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_default(),
            e.count,
            e.false_positives.len(),
            e.false_negatives.len()
        );
    }
    out
}
