//! Sparse categorical cross-entropy and accuracy.

use crate::error::{Error, Result};
use crate::layers::{argmax, softmax};
use crate::tensor::{Element, Tensor};

/// Lower clamp applied to probabilities before taking the log.
pub const PROB_FLOOR: f64 = 1e-12;

fn rows<T: Element>(t: &Tensor<T>, labels: &[usize], what: &str) -> Result<(usize, usize)> {
    let (n, k) = match *t.shape() {
        [n, k] => (n, k),
        _ => {
            return Err(Error::Shape(format!(
                "{what} must be NxK, got {:?}",
                t.shape()
            )))
        }
    };
    if labels.len() != n {
        return Err(Error::Argument(format!(
            "{what} has {n} rows but {} labels were given",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::Argument(format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    Ok((n, k))
}

/// Per-sample `-ln(max(p[label], 1e-12))`.
pub fn sparse_ce_per_sample<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<Vec<T>> {
    let (_, k) = rows(probs, labels, "probabilities")?;
    let floor = T::from_f64_lossy(PROB_FLOOR);
    Ok(probs
        .data()
        .chunks(k)
        .zip(labels)
        .map(|(row, &l)| {
            let p = row[l];
            -(if p > floor { p } else { floor }).ln()
        })
        .collect())
}

/// Batch-mean sparse categorical cross-entropy of probabilities.
pub fn sparse_ce_loss<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<T> {
    let per = sparse_ce_per_sample(probs, labels)?;
    let n = T::from_usize(per.len()).expect("batch size");
    Ok(per.into_iter().sum::<T>() / n)
}

/// Gradient of `sparse_ce_loss(softmax(logits))` w.r.t. the logits:
/// `(softmax(logits) - onehot(labels)) / N`.
pub fn sparse_ce_grad_logits<T: Element>(
    logits: &Tensor<T>,
    labels: &[usize],
) -> Result<Tensor<T>> {
    let (n, k) = rows(logits, labels, "logits")?;
    let mut grad = softmax(logits);
    let inv_n = T::one() / T::from_usize(n).expect("batch size");
    for (row, &l) in grad.data_mut().chunks_mut(k).zip(labels) {
        row[l] -= T::one();
        for v in row.iter_mut() {
            *v *= inv_n;
        }
    }
    Ok(grad)
}

/// Number of rows whose argmax (lowest index on ties) equals the label.
pub fn correct_count<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<usize> {
    let (_, k) = rows(probs, labels, "probabilities")?;
    Ok(probs
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, &l)| argmax(row) == l)
        .count())
}

pub fn accuracy<T: Element>(probs: &Tensor<T>, labels: &[usize]) -> Result<f64> {
    Ok(correct_count(probs, labels)? as f64 / labels.len() as f64)
}
