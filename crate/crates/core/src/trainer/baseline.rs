use crate::data::{ExpressionMatrix, LabeledDataset, Split};
use crate::error::{Error, Result};
use crate::metrics::MetricsReport;
use crate::trainer::split_counts;

/// Pearson correlation; 0 when either row is constant.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0)
}

/// Scores each pair of the split by `|r|` of its expression rows. The score
/// `s` becomes the two-column pseudo-probability `[1 - s, s]` so the report
/// has the same shape as a model report.
pub fn correlation_baseline(
    dataset: &LabeledDataset,
    split: Split,
    matrix: &ExpressionMatrix,
) -> Result<MetricsReport> {
    let pairs = dataset.split(split);
    if pairs.is_empty() {
        return Err(Error::EmptySplit(split.as_str()));
    }
    let mut probs = Vec::with_capacity(pairs.len());
    let mut truth = Vec::with_capacity(pairs.len());
    for p in pairs {
        let r = pearson(matrix.get_expression(p.a())?, matrix.get_expression(p.b())?).abs();
        probs.push([1.0 - r, r]);
        truth.push(p.label.index());
    }
    MetricsReport::from_probabilities(
        "correlation",
        split.as_str(),
        &probs,
        &truth,
        split_counts(dataset),
        serde_json::json!({ "score": "abs_pearson" }),
    )
}
