//! Ranking and classification metrics for scored gene pairs.
//!
//! Curves sweep thresholds over the distinct score values in descending
//! order, so tied scores always move together. AUROC is the trapezoidal area
//! under the ROC curve (equal to the tie-corrected Mann-Whitney statistic);
//! AUPR is average precision, the step integral `sum(delta_recall * precision)`.

mod export;

pub use export::{export_curve_csv, parse_curve_csv, render_curve_svg};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real-valued scores with binary ground truth (`true` = positive).
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSet {
    scores: Vec<f64>,
    labels: Vec<bool>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<bool>) -> Result<Self> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} scores for {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::ShapeMismatch("scores must be finite".into()));
        }
        Ok(ScoredSet { scores, labels })
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn labels(&self) -> &[bool] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l).count()
    }

    /// Concatenation of several sets.
    pub fn pooled(sets: &[ScoredSet]) -> Result<Self> {
        let scores = sets.iter().flat_map(|s| s.scores.iter().copied()).collect();
        let labels = sets.iter().flat_map(|s| s.labels.iter().copied()).collect();
        ScoredSet::new(scores, labels)
    }

    /// Cumulative (tp, fp) after each tie group, highest scores first.
    fn sweep(&self) -> Vec<(usize, usize)> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by(|&a, &b| self.scores[b].total_cmp(&self.scores[a]));
        let mut steps = Vec::new();
        let (mut tp, mut fp) = (0, 0);
        for (k, &i) in order.iter().enumerate() {
            if self.labels[i] {
                tp += 1;
            } else {
                fp += 1;
            }
            let last_of_group = order
                .get(k + 1)
                .map_or(true, |&next| self.scores[next] != self.scores[i]);
            if last_of_group {
                steps.push((tp, fp));
            }
        }
        steps
    }
}

/// ROC curve as `(fpr, tpr)` points from `(0, 0)` to `(1, 1)`.
pub fn roc_points(s: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    let p = s.positives();
    let n = s.len() - p;
    if p == 0 || n == 0 {
        return Err(Error::SingleClass);
    }
    let mut points = vec![(0.0, 0.0)];
    points.extend(
        s.sweep()
            .into_iter()
            .map(|(tp, fp)| (fp as f64 / n as f64, tp as f64 / p as f64)),
    );
    Ok(points)
}

pub fn auroc(s: &ScoredSet) -> Result<f64> {
    let pts = roc_points(s)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0)
        .sum())
}

/// Precision-recall curve as `(recall, precision)` points, starting at `(0, 1)`.
pub fn pr_points(s: &ScoredSet) -> Result<Vec<(f64, f64)>> {
    let p = s.positives();
    if p == 0 {
        return Err(Error::NoPositives);
    }
    let mut points = vec![(0.0, 1.0)];
    points.extend(
        s.sweep()
            .into_iter()
            .map(|(tp, fp)| (tp as f64 / p as f64, tp as f64 / (tp + fp) as f64)),
    );
    Ok(points)
}

/// Average precision.
pub fn aupr(s: &ScoredSet) -> Result<f64> {
    let pts = pr_points(s)?;
    Ok(pts.windows(2).map(|w| (w[1].0 - w[0].0) * w[1].1).sum())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// The same predictions seen from the other class.
    pub fn swapped(&self) -> Self {
        ConfusionMatrix {
            tp: self.tn,
            fp: self.fn_,
            tn: self.tp,
            fn_: self.fp,
        }
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(c: &ConfusionMatrix) -> f64 {
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

/// Predicts the arg-max class of each two-column probability row (ties go
/// to class 0) and tabulates it with `positive_class` as the positive label.
pub fn confusion_at_argmax(
    probabilities: &[[f64; 2]],
    truth: &[usize],
    positive_class: usize,
) -> ConfusionMatrix {
    let mut c = ConfusionMatrix::default();
    for (row, &t) in probabilities.iter().zip(truth) {
        let predicted = if row[1] > row[0] { 1 } else { 0 };
        match (predicted == positive_class, t == positive_class) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, false) => c.tn += 1,
            (false, true) => c.fn_ += 1,
        }
    }
    c
}

/// One scored set per class: that class's probability column against the
/// indicator "true class is this class".
pub fn one_vs_all(probabilities: &[[f64; 2]], truth: &[usize]) -> Result<Vec<ScoredSet>> {
    (0..2)
        .map(|class| {
            ScoredSet::new(
                probabilities.iter().map(|r| r[class]).collect(),
                truth.iter().map(|&t| t == class).collect(),
            )
        })
        .collect()
}

/// Micro-averaged AUROC and AUPR: all classes' (score, indicator) pairs
/// pooled into one set.
pub fn micro_average_ovr(per_class: &[ScoredSet]) -> Result<(f64, f64)> {
    let pooled = ScoredSet::pooled(per_class)?;
    Ok((auroc(&pooled)?, aupr(&pooled)?))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
}

/// Summary of one scored split. Curves are kept for export but are not part
/// of the JSON summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub source: String,
    pub split: String,
    pub auroc_micro: f64,
    pub aupr_micro: f64,
    /// MCC with the interaction class as positive.
    pub mcc_class1: f64,
    /// MCC with the no-interaction class as positive.
    pub mcc_class2: f64,
    /// Confusion matrix with the interaction class as positive.
    pub confusion: ConfusionMatrix,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    /// Settings that produced the scores (training options, architecture).
    pub settings: serde_json::Value,
    #[serde(skip)]
    pub roc: Vec<(f64, f64)>,
    #[serde(skip)]
    pub pr: Vec<(f64, f64)>,
}

impl MetricsReport {
    /// `probabilities[i] = [p(no interaction), p(interaction)]`; `truth` holds
    /// class indices (1 = interaction).
    pub fn from_probabilities(
        source: &str,
        split: &str,
        probabilities: &[[f64; 2]],
        truth: &[usize],
        counts: SplitCounts,
        settings: serde_json::Value,
    ) -> Result<Self> {
        let per_class = one_vs_all(probabilities, truth)?;
        if per_class[1].positives() == 0 || per_class[0].positives() == 0 {
            return Err(Error::SingleClass);
        }
        let pooled = ScoredSet::pooled(&per_class)?;
        let (auroc_micro, aupr_micro) = micro_average_ovr(&per_class)?;
        let confusion = confusion_at_argmax(probabilities, truth, 1);
        Ok(MetricsReport {
            source: source.to_owned(),
            split: split.to_owned(),
            auroc_micro,
            aupr_micro,
            mcc_class1: mcc(&confusion),
            mcc_class2: mcc(&confusion_at_argmax(probabilities, truth, 0)),
            confusion,
            n_train: counts.n_train,
            n_val: counts.n_val,
            n_test: counts.n_test,
            settings,
            roc: roc_points(&pooled)?,
            pr: pr_points(&pooled)?,
        })
    }
}
