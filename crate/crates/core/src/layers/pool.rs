//! Non-overlapping max pooling (stride equals the window).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Forward result: pooled values plus, for each output element, the flat
/// input index that produced it.
#[derive(Debug, Clone)]
pub struct PoolOutput<T> {
    pub output: Tensor<T>,
    pub argmax: Vec<usize>,
}

/// Windowed maxima over `[N,H,W,C]`; trailing rows/columns that do not fill a
/// window are dropped. Ties go to the first position in row-major scan order.
pub fn maxpool2d_forward<T: Element>(
    input: &Tensor<T>,
    pool_h: usize,
    pool_w: usize,
) -> Result<PoolOutput<T>> {
    let [n, h, w, c] = match *input.shape() {
        [n, h, w, c] => [n, h, w, c],
        _ => {
            return Err(Error::Shape(format!(
                "maxpool2d input must be NxHxWxC, got {:?}",
                input.shape()
            )))
        }
    };
    if pool_h == 0 || pool_w == 0 || h < pool_h || w < pool_w {
        return Err(Error::Shape(format!(
            "maxpool2d window {pool_h}x{pool_w} does not fit {h}x{w} input"
        )));
    }
    let (oh, ow) = (h / pool_h, w / pool_w);
    let x = input.data();
    let per_sample = oh * ow * c;
    let mut values = vec![T::zero(); n * per_sample];
    let mut argmax = vec![0usize; n * per_sample];
    values
        .par_chunks_mut(per_sample)
        .zip(argmax.par_chunks_mut(per_sample))
        .enumerate()
        .for_each(|(s, (vals, idxs))| {
            for oy in 0..oh {
                for ox in 0..ow {
                    for ch in 0..c {
                        let mut best = T::neg_infinity();
                        let mut best_idx = usize::MAX;
                        for dy in 0..pool_h {
                            for dx in 0..pool_w {
                                let iy = oy * pool_h + dy;
                                let ix = ox * pool_w + dx;
                                let idx = ((s * h + iy) * w + ix) * c + ch;
                                if best_idx == usize::MAX || x[idx] > best {
                                    best = x[idx];
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = (oy * ow + ox) * c + ch;
                        vals[o] = best;
                        idxs[o] = best_idx;
                    }
                }
            }
        });
    Ok(PoolOutput {
        output: Tensor::from_vec(&[n, oh, ow, c], values)?,
        argmax,
    })
}

/// Route each output gradient to the input position recorded in `argmax`.
pub fn maxpool2d_backward<T: Element>(
    grad_out: &Tensor<T>,
    argmax: &[usize],
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    if grad_out.len() != argmax.len() {
        return Err(Error::Shape(format!(
            "maxpool2d grad_out has {} elements, forward produced {}",
            grad_out.len(),
            argmax.len()
        )));
    }
    let mut grad_in = Tensor::zeros(input_shape);
    let dst = grad_in.data_mut();
    for (&g, &idx) in grad_out.data().iter().zip(argmax) {
        dst[idx] += g;
    }
    Ok(grad_in)
}
