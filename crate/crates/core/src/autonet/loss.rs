use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

/// Row-wise softmax of `[n, classes]` logits, shifted by the row maximum.
pub fn softmax<T: Real>(logits: &Tensor<T>) -> Tensor<T> {
    let c = logits.shape()[1];
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(c) {
        let max = row.iter().copied().fold(row[0], T::max);
        let mut total = T::ZERO;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    out
}

/// Mean cross-entropy of softmax(logits) against class indices, and its
/// gradient with respect to the logits, `(softmax - onehot) / n`.
pub fn softmax_cross_entropy<T: Real>(logits: &Tensor<T>, labels: &[usize]) -> Result<(T, Tensor<T>)> {
    if logits.shape().len() != 2 || logits.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "logits {:?} for {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let c = logits.shape()[1];
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::InvalidLabel(bad));
    }
    let n = T::from_f64(labels.len() as f64);
    let mut grad = Tensor::zeros(logits.shape());
    let mut loss = T::ZERO;
    for ((row, g), &label) in logits
        .data()
        .chunks(c)
        .zip(grad.data_mut().chunks_mut(c))
        .zip(labels)
    {
        let max = row.iter().copied().fold(row[0], T::max);
        let total: T = row.iter().map(|&v| (v - max).exp()).sum();
        let log_total = total.ln();
        loss += log_total - (row[label] - max);
        for (k, (gv, &v)) in g.iter_mut().zip(row).enumerate() {
            let p = (v - max).exp() / total;
            *gv = (p - if k == label { T::ONE } else { T::ZERO }) / n;
        }
    }
    Ok((loss / n, grad))
}
