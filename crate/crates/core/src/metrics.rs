//! Per-attribute confusion matrices and support-weighted Precision / Recall / F1.
//!
//! Per class `c`: `P = TP/(TP+FP)`, `R = TP/(TP+FN)`, `F1 = 2PR/(P+R)`, each 0
//! when its denominator is 0. The attribute-level value weights each class by
//! its support (true instances); classes with no support contribute nothing.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::str::FromStr;
use thiserror::Error;

use crate::dataset::DatasetManifest;
use crate::predictions::PredictionSet;
use crate::schema::{AttributeSchema, EvalLabel};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("truths and predictions differ in length ({truths} vs {preds})")]
    LengthMismatch { truths: usize, preds: usize },
    #[error("nothing to score")]
    Empty,
    #[error("value {value} is not in the class domain {domain:?}")]
    OutOfDomain { value: u8, domain: Vec<u8> },
    #[error("frame mismatch at position {index}: truth \"{truth}\" vs prediction \"{pred}\"")]
    FrameMismatch { index: usize, truth: String, pred: String },
    #[error("provider \"{provider}\" has no prediction for frame \"{frame_id}\"")]
    MissingPrediction { provider: String, frame_id: String },
    #[error("provider \"{provider}\" has a prediction for unknown frame \"{frame_id}\"")]
    UnexpectedPrediction { provider: String, frame_id: String },
    #[error("invalid ground truth for frame \"{0}\"")]
    InvalidTruth(String),
    #[error("unknown metric \"{0}\" (expected precision, recall or f1)")]
    UnknownMetric(String),
}

/// Counts indexed `[true][predicted]` over an ordered class domain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub domain: Vec<u8>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    fn index(&self, v: u8) -> Option<usize> {
        self.domain.iter().position(|&d| d == v)
    }

    pub fn get(&self, truth: u8, pred: u8) -> u64 {
        match (self.index(truth), self.index(pred)) {
            (Some(t), Some(p)) => self.counts[t][p],
            _ => 0,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// True instances of the class at domain index `i`.
    pub fn support_at(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    pub fn is_diagonal(&self) -> bool {
        self.counts
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().enumerate().all(|(j, &c)| i == j || c == 0))
    }

    /// Per-class metrics, in domain order.
    pub fn per_class(&self) -> BTreeMap<u8, ClassMetrics> {
        self.domain
            .iter()
            .enumerate()
            .map(|(i, &class)| {
                let tp = self.counts[i][i];
                let predicted = self.column_sum(i);
                let support = self.support_at(i);
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                (
                    class,
                    ClassMetrics {
                        precision,
                        recall,
                        f1: f1(precision, recall),
                        support,
                    },
                )
            })
            .collect()
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Precision, Metric::Recall, Metric::F1];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }
}

impl FromStr for Metric {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "precision" | "p" => Ok(Metric::Precision),
            "recall" | "r" => Ok(Metric::Recall),
            "f1" | "f1score" | "f" => Ok(Metric::F1),
            _ => Err(MetricsError::UnknownMetric(s.to_string())),
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Prf {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
        }
    }

    pub fn minus(&self, other: &Prf) -> Prf {
        Prf {
            precision: self.precision - other.precision,
            recall: self.recall - other.recall,
            f1: self.f1 - other.f1,
        }
    }
}

pub fn confusion_matrix(truths: &[u8], preds: &[u8], domain: &[u8]) -> Result<ConfusionMatrix, MetricsError> {
    if truths.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            truths: truths.len(),
            preds: preds.len(),
        });
    }
    if truths.is_empty() {
        return Err(MetricsError::Empty);
    }
    let index: HashMap<u8, usize> = domain.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let lookup = |v: u8| {
        index.get(&v).copied().ok_or_else(|| MetricsError::OutOfDomain {
            value: v,
            domain: domain.to_vec(),
        })
    };
    let mut counts = vec![vec![0u64; domain.len()]; domain.len()];
    for (&t, &p) in truths.iter().zip(preds) {
        counts[lookup(t)?][lookup(p)?] += 1;
    }
    Ok(ConfusionMatrix {
        domain: domain.to_vec(),
        counts,
    })
}

/// Support-weighted average of the per-class metrics.
pub fn weighted_prf(m: &ConfusionMatrix) -> Result<Prf, MetricsError> {
    let total = m.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let mut acc = Prf::default();
    for c in m.per_class().values().filter(|c| c.support > 0) {
        let w = c.support as f64;
        acc.precision += w * c.precision;
        acc.recall += w * c.recall;
        acc.f1 += w * c.f1;
    }
    let total = total as f64;
    Ok(Prf {
        precision: acc.precision / total,
        recall: acc.recall / total,
        f1: acc.f1 / total,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeMetrics {
    pub attribute_key: String,
    pub matrix: ConfusionMatrix,
    pub per_class: BTreeMap<u8, ClassMetrics>,
    pub weighted: Prf,
    /// Frames scored for this attribute.
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub provider_id: String,
    pub frames_scored: usize,
    /// Frames dropped because the prediction was fatal and exclusion was requested.
    pub frames_excluded: usize,
    /// Records with a fatal diagnostic, whether scored as zero or excluded.
    pub fatal_records: usize,
    pub per_attribute: IndexMap<String, AttributeMetrics>,
    /// Unweighted mean over the attributes.
    #[serde(rename = "macro")]
    pub macro_avg: Prf,
    /// Mean over attributes weighted by each attribute's scored-frame support.
    pub support_weighted_macro: Prf,
}

impl RunSummary {
    pub fn weighted(&self, key: &str) -> Option<&Prf> {
        self.per_attribute.get(key).map(|a| &a.weighted)
    }
}

/// Scores aligned `(frame_id, label)` sequences, one [`AttributeMetrics`] per schema attribute.
pub fn per_attribute_metrics(
    truths: &[(String, EvalLabel)],
    preds: &[(String, EvalLabel)],
    schema: &AttributeSchema,
) -> Result<RunSummary, MetricsError> {
    if truths.len() != preds.len() {
        return Err(MetricsError::LengthMismatch {
            truths: truths.len(),
            preds: preds.len(),
        });
    }
    if truths.is_empty() {
        return Err(MetricsError::Empty);
    }
    for (index, ((t, _), (p, _))) in truths.iter().zip(preds).enumerate() {
        if t != p {
            return Err(MetricsError::FrameMismatch {
                index,
                truth: t.clone(),
                pred: p.clone(),
            });
        }
    }

    let mut per_attribute = IndexMap::with_capacity(schema.len());
    for (i, spec) in schema.attributes().iter().enumerate() {
        let t: Vec<u8> = truths.iter().map(|(_, l)| l.at(i)).collect();
        let p: Vec<u8> = preds.iter().map(|(_, l)| l.at(i)).collect();
        let matrix = confusion_matrix(&t, &p, &spec.eval_domain())?;
        let weighted = weighted_prf(&matrix)?;
        per_attribute.insert(
            spec.key.to_string(),
            AttributeMetrics {
                attribute_key: spec.key.to_string(),
                per_class: matrix.per_class(),
                support: matrix.total(),
                matrix,
                weighted,
            },
        );
    }
    let (macro_avg, support_weighted_macro) = cross_attribute_means(&per_attribute);
    Ok(RunSummary {
        provider_id: String::new(),
        frames_scored: truths.len(),
        frames_excluded: 0,
        fatal_records: 0,
        per_attribute,
        macro_avg,
        support_weighted_macro,
    })
}

fn cross_attribute_means(per_attribute: &IndexMap<String, AttributeMetrics>) -> (Prf, Prf) {
    let n = per_attribute.len() as f64;
    let total_support: f64 = per_attribute.values().map(|a| a.support as f64).sum();
    let mut plain = Prf::default();
    let mut weighted = Prf::default();
    // sum first, divide once
    for a in per_attribute.values() {
        let w = a.support as f64;
        plain.precision += a.weighted.precision;
        plain.recall += a.weighted.recall;
        plain.f1 += a.weighted.f1;
        weighted.precision += w * a.weighted.precision;
        weighted.recall += w * a.weighted.recall;
        weighted.f1 += w * a.weighted.f1;
    }
    let div = |p: Prf, d: f64| {
        if d > 0.0 {
            Prf {
                precision: p.precision / d,
                recall: p.recall / d,
                f1: p.f1 / d,
            }
        } else {
            Prf::default()
        }
    };
    (div(plain, n), div(weighted, total_support))
}

/// What to do with records whose output could not be parsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FatalPolicy {
    /// Score the all-zero fallback label, keeping denominators equal across providers.
    #[default]
    ScoreAsZero,
    /// Drop the frame from this provider's scoring.
    Exclude,
}

/// Scores a prediction set against the retained frames of a manifest.
///
/// Every retained frame must have exactly one prediction and no prediction may
/// refer to a frame outside the manifest.
pub fn evaluate_predictions(
    frames: &DatasetManifest,
    set: &PredictionSet,
    schema: &AttributeSchema,
    fatal: FatalPolicy,
) -> Result<RunSummary, MetricsError> {
    let retained: Vec<_> = frames.entries.iter().filter(|e| !e.excluded).collect();
    let known: std::collections::HashSet<&str> = retained.iter().map(|e| e.frame_id.as_str()).collect();
    if let Some(extra) = set.records.keys().find(|k| !known.contains(k.as_str())) {
        return Err(MetricsError::UnexpectedPrediction {
            provider: set.provider_id.clone(),
            frame_id: extra.clone(),
        });
    }
    let mut truths = Vec::with_capacity(retained.len());
    let mut preds = Vec::with_capacity(retained.len());
    let mut fatal_records = 0;
    let mut excluded = 0;
    for entry in retained {
        let record = set.get(&entry.frame_id).ok_or_else(|| MetricsError::MissingPrediction {
            provider: set.provider_id.clone(),
            frame_id: entry.frame_id.clone(),
        })?;
        if record.fatal {
            fatal_records += 1;
            if fatal == FatalPolicy::Exclude {
                excluded += 1;
                continue;
            }
        }
        let truth = entry
            .eval_truth(schema)
            .map_err(|_| MetricsError::InvalidTruth(entry.frame_id.clone()))?;
        truths.push((entry.frame_id.clone(), truth));
        preds.push((entry.frame_id.clone(), record.label.clone()));
    }
    let mut summary = per_attribute_metrics(&truths, &preds, schema)?;
    summary.provider_id = set.provider_id.clone();
    summary.frames_excluded = excluded;
    summary.fatal_records = fatal_records;
    Ok(summary)
}
