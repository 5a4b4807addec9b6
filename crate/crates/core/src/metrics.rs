//! Confusion counts and F1 scores.
//!
//! F1 is `2tp / (2tp + fp + fn)` and is defined as 0 when the denominator is
//! zero. Precision and recall use the same zero-division convention.

use serde::Serialize;

use crate::calibration::{apply_thresholds, ProbabilityMatrix, ThresholdVector};
use crate::corpus::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LabelCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl LabelCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn f1(&self) -> f64 {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// F1 of the negative class: the roles of tp and tn swap.
    pub fn negative_f1(&self) -> f64 {
        ratio(2 * self.tn, 2 * self.tn + self.fp + self.fn_)
    }

    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn support(&self) -> usize {
        self.tp + self.fn_
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfusionCounts {
    pub labels: Vec<LabelCounts>,
}

/// Per-label confusion counts of N×L predictions against gold.
pub fn confusion(pred: &[Vec<bool>], gold: &[Vec<bool>]) -> Result<ConfusionCounts> {
    if pred.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} prediction rows vs {} gold rows",
            pred.len(),
            gold.len()
        )));
    }
    let width = gold.first().map_or(0, Vec::len);
    let mut labels = vec![LabelCounts::default(); width];
    for (row, (p, g)) in pred.iter().zip(gold).enumerate() {
        if p.len() != width || g.len() != width {
            return Err(Error::Shape(format!(
                "row {row}: {} predicted vs {} gold labels (expected {width})",
                p.len(),
                g.len()
            )));
        }
        for (c, (&pv, &gv)) in labels.iter_mut().zip(p.iter().zip(g)) {
            match (pv, gv) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
    }
    Ok(ConfusionCounts { labels })
}

/// Unweighted mean of per-label F1.
pub fn macro_f1(cc: &ConfusionCounts) -> f64 {
    if cc.labels.is_empty() {
        return 0.0;
    }
    cc.labels.iter().map(LabelCounts::f1).sum::<f64>() / cc.labels.len() as f64
}

/// F1 of the counts pooled over all labels.
pub fn micro_f1(cc: &ConfusionCounts) -> f64 {
    let pooled = cc
        .labels
        .iter()
        .fold(LabelCounts::default(), |a, c| LabelCounts {
            tp: a.tp + c.tp,
            fp: a.fp + c.fp,
            fn_: a.fn_ + c.fn_,
            tn: a.tn + c.tn,
        });
    pooled.f1()
}

/// How a one-label task is scored.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BinaryMode {
    /// Mean of the F1 of the positive and the negative class.
    #[default]
    TwoClassMacro,
    /// F1 of the positive class only.
    PositiveF1,
}

impl std::str::FromStr for BinaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two-class-macro" => Ok(BinaryMode::TwoClassMacro),
            "positive-f1" => Ok(BinaryMode::PositiveF1),
            other => Err(Error::Config(format!(
                "unknown binary mode '{other}' (expected two-class-macro or positive-f1)"
            ))),
        }
    }
}

impl std::fmt::Display for BinaryMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BinaryMode::TwoClassMacro => "two-class-macro",
            BinaryMode::PositiveF1 => "positive-f1",
        })
    }
}

/// Macro-F1 used for model selection: two-class macro for a single label
/// under [`BinaryMode::TwoClassMacro`], plain [`macro_f1`] otherwise.
pub fn task_macro_f1(cc: &ConfusionCounts, mode: BinaryMode) -> f64 {
    match (cc.labels.as_slice(), mode) {
        ([only], BinaryMode::TwoClassMacro) => 0.5 * (only.f1() + only.negative_f1()),
        _ => macro_f1(cc),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub labels: Vec<String>,
    pub per_label_f1: Vec<f64>,
    pub per_label_precision: Vec<f64>,
    pub per_label_recall: Vec<f64>,
    pub support: Vec<usize>,
    pub macro_f1: f64,
    pub micro_f1: f64,
    /// Only for one-label tasks.
    pub two_class_macro_f1: Option<f64>,
    pub thresholds: Vec<f64>,
    pub counts: ConfusionCounts,
}

impl MetricsReport {
    pub fn from_counts(labels: Vec<String>, cc: ConfusionCounts, thresholds: Vec<f64>) -> Self {
        let two_class = match cc.labels.as_slice() {
            [only] => Some(0.5 * (only.f1() + only.negative_f1())),
            _ => None,
        };
        Self {
            labels,
            per_label_f1: cc.labels.iter().map(LabelCounts::f1).collect(),
            per_label_precision: cc.labels.iter().map(LabelCounts::precision).collect(),
            per_label_recall: cc.labels.iter().map(LabelCounts::recall).collect(),
            support: cc.labels.iter().map(LabelCounts::support).collect(),
            macro_f1: macro_f1(&cc),
            micro_f1: micro_f1(&cc),
            two_class_macro_f1: two_class,
            thresholds,
            counts: cc,
        }
    }

    /// The headline score under `mode`.
    pub fn score(&self, mode: BinaryMode) -> f64 {
        match (self.two_class_macro_f1, mode) {
            (Some(v), BinaryMode::TwoClassMacro) => v,
            _ => self.macro_f1,
        }
    }
}

/// Thresholds the probabilities and scores them against `gold`, whose rows
/// must carry the same ids in the same order.
pub fn evaluate(
    pm: &ProbabilityMatrix,
    gold: &Dataset,
    tv: &ThresholdVector,
) -> Result<MetricsReport> {
    if pm.len() != gold.len() {
        return Err(Error::Shape(format!(
            "{} probability rows vs {} gold instances",
            pm.len(),
            gold.len()
        )));
    }
    for (row, (id, inst)) in pm.ids.iter().zip(gold.instances()).enumerate() {
        if *id != inst.id {
            return Err(Error::IdMismatch {
                row,
                expected: inst.id.clone(),
                found: id.clone(),
            });
        }
    }
    if pm.width() != gold.schema().len() {
        return Err(Error::Shape(format!(
            "{} probability columns vs {} labels",
            pm.width(),
            gold.schema().len()
        )));
    }
    let pred = apply_thresholds(pm, tv)?;
    let cc = confusion(&pred, &gold.label_matrix())?;
    Ok(MetricsReport::from_counts(
        gold.schema().names().to_vec(),
        cc,
        tv.theta.clone(),
    ))
}
