use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::dataset::DatasetRecord;
use crate::model::{probability_of_misinfo, Category, GoldLabel, VerdictLabel};
use crate::pipeline::SampleReport;

pub const DEFAULT_ECE_BINS: usize = 10;

/// Probability assigned to Uncertain verdicts in Brier and ECE.
pub const UNCERTAIN_PROBABILITY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("no reports to score")]
    Empty,
    #[error("duplicate report for sample {0}")]
    DuplicateReport(String),
    #[error("reports and dataset disagree: {missing} gold ids without a report, {unknown} reports without a gold record (first: {example})")]
    IdMismatch {
        missing: usize,
        unknown: usize,
        example: String,
    },
}

/// One prediction joined with its gold record.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub id: String,
    pub label: VerdictLabel,
    /// P(misinformation); [`UNCERTAIN_PROBABILITY`] for Uncertain verdicts.
    pub probability: f64,
    pub gold: GoldLabel,
    pub category: Option<Category>,
    pub key_factors: Vec<String>,
}

impl Scored {
    pub fn new(id: impl Into<String>, label: VerdictLabel, probability: f64, gold: GoldLabel) -> Self {
        Scored {
            id: id.into(),
            label,
            probability,
            gold,
            category: None,
            key_factors: Vec::new(),
        }
    }

    pub fn is_correct(&self) -> bool {
        self.label.matches(self.gold)
    }
}

/// Pairs each report with the gold record of the same id. The two id sets
/// must be identical. Output follows the gold order.
pub fn align(reports: &[SampleReport], gold: &[DatasetRecord]) -> Result<Vec<Scored>, EvalError> {
    let mut by_id: HashMap<&str, &SampleReport> = HashMap::with_capacity(reports.len());
    for r in reports {
        if by_id.insert(&r.sample_id, r).is_some() {
            return Err(EvalError::DuplicateReport(r.sample_id.clone()));
        }
    }
    let missing: Vec<&str> = gold
        .iter()
        .map(|g| g.id.as_str())
        .filter(|id| !by_id.contains_key(id))
        .collect();
    let gold_ids: std::collections::HashSet<&str> = gold.iter().map(|g| g.id.as_str()).collect();
    let unknown: Vec<&str> = reports
        .iter()
        .map(|r| r.sample_id.as_str())
        .filter(|id| !gold_ids.contains(id))
        .collect();
    if !missing.is_empty() || !unknown.is_empty() {
        return Err(EvalError::IdMismatch {
            missing: missing.len(),
            unknown: unknown.len(),
            example: missing.first().or(unknown.first()).unwrap_or(&"").to_string(),
        });
    }
    Ok(gold
        .iter()
        .map(|g| {
            let r = by_id[g.id.as_str()];
            Scored {
                id: g.id.clone(),
                label: r.judge.label,
                probability: probability_of_misinfo(&r.judge).unwrap_or(UNCERTAIN_PROBABILITY),
                gold: g.gold_label,
                category: Some(g.category),
                key_factors: r.judge.key_factors.clone(),
            }
        })
        .collect())
}

/// Confusion counts with Misinformation as the positive class. Uncertain
/// predictions are already folded in as errors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl Confusion {
    pub fn from_scored(samples: &[Scored]) -> Self {
        let mut c = Confusion::default();
        for s in samples {
            match (s.gold, s.label) {
                (GoldLabel::Misinformation, VerdictLabel::Misinformation) => c.tp += 1,
                (GoldLabel::Misinformation, _) => c.fn_ += 1,
                (GoldLabel::NotMisinformation, VerdictLabel::NotMisinformation) => c.tn += 1,
                (GoldLabel::NotMisinformation, _) => c.fp += 1,
            }
        }
        c
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

fn ratio(num: u64, den: u64, name: &str, undefined: &mut Vec<String>) -> f64 {
    if den == 0 {
        undefined.push(name.to_owned());
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryScore {
    pub n: u64,
    pub correct: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: u64,
    #[serde(flatten)]
    pub confusion: Confusion,
    pub n_uncertain: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall_misinfo: f64,
    pub recall_not_misinfo: f64,
    pub fp_rate: f64,
    pub f1: f64,
    pub brier: f64,
    pub ece: f64,
    pub ece_bins: usize,
    pub per_category: BTreeMap<Category, CategoryScore>,
    /// Metrics whose denominator was zero; they are reported as 0.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub undefined: Vec<String>,
}

impl MetricReport {
    pub fn from_confusion(confusion: Confusion) -> Self {
        let Confusion { tp, fp, fn_, tn } = confusion;
        let mut undefined = Vec::new();
        let accuracy = ratio(tp + tn, confusion.total(), "accuracy", &mut undefined);
        let precision = ratio(tp, tp + fp, "precision", &mut undefined);
        let recall_misinfo = ratio(tp, tp + fn_, "recall_misinfo", &mut undefined);
        let recall_not_misinfo = ratio(tn, tn + fp, "recall_not_misinfo", &mut undefined);
        let fp_rate = ratio(fp, fp + tn, "fp_rate", &mut undefined);
        let f1 = if precision + recall_misinfo > 0.0 {
            2.0 * precision * recall_misinfo / (precision + recall_misinfo)
        } else {
            undefined.push("f1".to_owned());
            0.0
        };
        MetricReport {
            n: confusion.total(),
            confusion,
            n_uncertain: 0,
            accuracy,
            precision,
            recall_misinfo,
            recall_not_misinfo,
            fp_rate,
            f1,
            brier: 0.0,
            ece: 0.0,
            ece_bins: DEFAULT_ECE_BINS,
            per_category: BTreeMap::new(),
            undefined,
        }
    }

    pub fn from_scored(samples: &[Scored], ece_bins: usize) -> Self {
        let mut report = MetricReport::from_confusion(Confusion::from_scored(samples));
        report.n_uncertain = samples.iter().filter(|s| s.label == VerdictLabel::Uncertain).count() as u64;
        report.brier = brier(samples);
        report.ece = ece(samples, ece_bins);
        report.ece_bins = ece_bins;
        report.per_category = per_category_breakdown(samples);
        if samples.is_empty() {
            report.undefined.extend(["brier".to_owned(), "ece".to_owned()]);
        }
        report
    }
}

pub fn score(reports: &[SampleReport], gold: &[DatasetRecord]) -> Result<MetricReport, EvalError> {
    score_with_bins(reports, gold, DEFAULT_ECE_BINS)
}

pub fn score_with_bins(
    reports: &[SampleReport],
    gold: &[DatasetRecord],
    ece_bins: usize,
) -> Result<MetricReport, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty);
    }
    Ok(MetricReport::from_scored(&align(reports, gold)?, ece_bins))
}

fn target(gold: GoldLabel) -> f64 {
    if gold.is_positive() {
        1.0
    } else {
        0.0
    }
}

/// Mean squared error of P(misinformation). Empty input scores 0.
pub fn brier(samples: &[Scored]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples
        .iter()
        .map(|s| (s.probability - target(s.gold)).powi(2))
        .sum::<f64>()
        / samples.len() as f64
}

/// Expected calibration error over `bins` equal-width bins on [0, 1]; the
/// last bin includes 1.0. Empty input scores 0.
pub fn ece(samples: &[Scored], bins: usize) -> f64 {
    let bins = bins.max(1);
    if samples.is_empty() {
        return 0.0;
    }
    let mut count = vec![0u64; bins];
    let mut prob_sum = vec![0.0f64; bins];
    let mut pos_sum = vec![0.0f64; bins];
    for s in samples {
        let p = s.probability.clamp(0.0, 1.0);
        let b = ((p * bins as f64).floor() as usize).min(bins - 1);
        count[b] += 1;
        prob_sum[b] += p;
        pos_sum[b] += target(s.gold);
    }
    let n = samples.len() as f64;
    (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| {
            let k = count[b] as f64;
            (k / n) * (pos_sum[b] / k - prob_sum[b] / k).abs()
        })
        .sum()
}

/// Accuracy within each category present. Categories with no samples are omitted.
pub fn per_category_breakdown(samples: &[Scored]) -> BTreeMap<Category, CategoryScore> {
    let mut out: BTreeMap<Category, CategoryScore> = BTreeMap::new();
    for s in samples {
        let Some(cat) = s.category else { continue };
        let e = out.entry(cat).or_insert(CategoryScore {
            n: 0,
            correct: 0,
            accuracy: 0.0,
        });
        e.n += 1;
        e.correct += u64::from(s.is_correct());
    }
    for e in out.values_mut() {
        e.accuracy = e.correct as f64 / e.n as f64;
    }
    out
}
