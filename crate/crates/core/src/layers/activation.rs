use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

pub fn relu<T: Element>(input: &Tensor<T>) -> Tensor<T> {
    input.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Passes the gradient where the forward input was strictly positive; the
/// subgradient at exactly 0 is 0.
pub fn relu_backward<T: Element>(grad_out: &Tensor<T>, input: &Tensor<T>) -> Result<Tensor<T>> {
    if grad_out.shape() != input.shape() {
        return Err(Error::Shape(format!(
            "relu grad_out shape {:?} != input shape {:?}",
            grad_out.shape(),
            input.shape()
        )));
    }
    let data = grad_out
        .data()
        .iter()
        .zip(input.data())
        .map(|(&g, &x)| if x > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::from_vec(input.shape(), data)
}

/// Row-wise softmax of `[N, K]` logits (a 1-D input is treated as one row).
///
/// The row maximum is subtracted before exponentiating, which leaves the
/// result unchanged and keeps `exp` from overflowing.
pub fn softmax<T: Element>(logits: &Tensor<T>) -> Tensor<T> {
    let k = *logits.shape().last().expect("non-empty shape");
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(k) {
        let max = row
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v = *v / sum;
        }
    }
    out
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax<T: Element>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate().skip(1) {
        if v > row[best] {
            best = i;
        }
    }
    best
}
