//! Normalization, class balancing, stratified splitting and featurization.

use serde::{Deserialize, Serialize};

use crate::data::{ExpressionMatrix, Label, LabeledDataset, PairExample, PairFeatures, Split};
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormalizationKind {
    #[default]
    Standardize,
    #[serde(alias = "quantile_normalize")]
    Quantile,
    None,
}

pub fn normalize(matrix: &ExpressionMatrix, kind: NormalizationKind) -> ExpressionMatrix {
    match kind {
        NormalizationKind::Standardize => standardize_rows(matrix),
        NormalizationKind::Quantile => quantile_normalize_columns(matrix),
        NormalizationKind::None => matrix.clone(),
    }
}

/// Z-scores every gene row with the population standard deviation.
/// Constant rows become all zeros.
pub fn standardize_rows(matrix: &ExpressionMatrix) -> ExpressionMatrix {
    let w = matrix.width();
    let mut values = matrix.values().to_vec();
    for row in values.chunks_mut(w) {
        let mean = row.iter().sum::<f64>() / w as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / w as f64;
        let sd = var.sqrt();
        if sd > f64::EPSILON * mean.abs().max(1.0) {
            row.iter_mut().for_each(|v| *v = (*v - mean) / sd);
        } else {
            row.fill(0.0);
        }
    }
    matrix.with_values(values)
}

/// Rank-mean quantile normalization across conditions (columns).
///
/// Tied values inside a column receive the average of the rank means over
/// the ranks they span.
pub fn quantile_normalize_columns(matrix: &ExpressionMatrix) -> ExpressionMatrix {
    let (n, w) = (matrix.n_genes(), matrix.width());
    let vals = matrix.values();
    let order: Vec<Vec<usize>> = (0..w)
        .map(|c| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&i, &j| vals[i * w + c].total_cmp(&vals[j * w + c]));
            idx
        })
        .collect();
    let rank_means: Vec<f64> = (0..n)
        .map(|r| order.iter().enumerate().map(|(c, idx)| vals[idx[r] * w + c]).sum::<f64>() / w as f64)
        .collect();
    let mut out = vec![0.0; n * w];
    for (c, idx) in order.iter().enumerate() {
        let mut start = 0;
        while start < n {
            let v = vals[idx[start] * w + c];
            let mut end = start + 1;
            while end < n && vals[idx[end] * w + c] == v {
                end += 1;
            }
            let level = rank_means[start..end].iter().sum::<f64>() / (end - start) as f64;
            for &i in &idx[start..end] {
                out[i * w + c] = level;
            }
            start = end;
        }
    }
    matrix.with_values(out)
}

fn class_indices(dataset: &LabeledDataset, label: Label) -> Vec<usize> {
    (0..dataset.len()).filter(|&i| dataset.pairs[i].label == label).collect()
}

fn keep_indices(dataset: &LabeledDataset, mut keep: Vec<usize>) -> LabeledDataset {
    keep.sort_unstable();
    LabeledDataset {
        pairs: keep.into_iter().map(|i| dataset.pairs[i].clone()).collect(),
        matrix_ref: dataset.matrix_ref.clone(),
    }
}

/// Random undersampling: the majority class is cut down to the minority
/// count; the minority class and the relative order of pairs are kept.
pub fn undersample(dataset: &LabeledDataset, seed: u64) -> Result<LabeledDataset> {
    let mut pos = class_indices(dataset, Label::Interaction);
    let mut neg = class_indices(dataset, Label::NoInteraction);
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut rng = Rng::new(seed);
    let (major, minor) = if pos.len() >= neg.len() {
        (&mut pos, neg)
    } else {
        (&mut neg, pos)
    };
    if major.len() > minor.len() {
        rng.shuffle(major);
        major.truncate(minor.len());
    }
    let mut keep = minor;
    keep.extend_from_slice(major);
    Ok(keep_indices(dataset, keep))
}

/// Keeps `round(n * fraction)` uniformly chosen pairs of each class.
pub fn subsample_both(dataset: &LabeledDataset, fraction: f64, seed: u64) -> Result<LabeledDataset> {
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(Error::ConfigInvalid(format!(
            "subsample fraction {fraction} not in (0, 1]"
        )));
    }
    let mut rng = Rng::new(seed);
    let mut keep = Vec::new();
    for label in [Label::Interaction, Label::NoInteraction] {
        let mut idx = class_indices(dataset, label);
        let n = (idx.len() as f64 * fraction).round() as usize;
        rng.shuffle(&mut idx);
        keep.extend_from_slice(&idx[..n]);
    }
    Ok(keep_indices(dataset, keep))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.8,
            val: 0.1,
            test: 0.1,
        }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.val, self.test];
        if parts.iter().any(|f| !(*f > 0.0 && *f < 1.0)) {
            return Err(Error::ConfigInvalid(format!("split fractions {parts:?} must lie in (0, 1)")));
        }
        if (parts.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
            return Err(Error::ConfigInvalid(format!("split fractions {parts:?} must sum to 1")));
        }
        Ok(())
    }

    /// Per-class split sizes: `round(n * train)`, `round(n * val)`, remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let val = ((n as f64 * self.val).round() as usize).min(n - train);
        (train, val, n - train - val)
    }
}

/// Shuffles each class independently and assigns train/val/test.
pub fn stratified_split(
    dataset: &LabeledDataset,
    fractions: SplitFractions,
    seed: u64,
) -> Result<LabeledDataset> {
    fractions.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptySplit("train"));
    }
    let mut rng = Rng::new(seed);
    let mut out = dataset.clone();
    for label in [Label::Interaction, Label::NoInteraction] {
        let mut idx = class_indices(dataset, label);
        rng.shuffle(&mut idx);
        let (train, val, test) = fractions.sizes(idx.len());
        for (name, size) in [("train", train), ("val", val), ("test", test)] {
            if size == 0 {
                return Err(Error::EmptySplit(name));
            }
        }
        for (k, &i) in idx.iter().enumerate() {
            out.pairs[i].split = if k < train {
                Split::Train
            } else if k < train + val {
                Split::Val
            } else {
                Split::Test
            };
        }
    }
    Ok(out)
}

pub fn featurize(pair: &PairExample, matrix: &ExpressionMatrix) -> Result<PairFeatures> {
    PairFeatures::from_rows(
        matrix.get_expression(pair.a())?,
        matrix.get_expression(pair.b())?,
    )
}
