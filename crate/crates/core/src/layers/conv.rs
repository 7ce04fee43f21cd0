//! Stride-1 2-D convolution (cross-correlation) over NHWC batches.
//!
//! Both passes lower to matrix products through an im2col buffer whose rows
//! are output pixels and whose columns run over `(ky, kx, c)`, matching the
//! row-major `[KH, KW, C, F]` kernel layout.

use rayon::prelude::*;

use super::spec::Padding;
use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy)]
struct Geometry {
    n: usize,
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    f: usize,
    pad_top: usize,
    pad_left: usize,
    out_h: usize,
    out_w: usize,
}

impl Geometry {
    fn new<T: Element>(input: &Tensor<T>, weights: &Tensor<T>, padding: Padding) -> Result<Self> {
        let [n, h, w, c] = match *input.shape() {
            [n, h, w, c] => [n, h, w, c],
            _ => {
                return Err(Error::Shape(format!(
                    "conv2d input must be NxHxWxC, got {:?}",
                    input.shape()
                )))
            }
        };
        let [kh, kw, kc, f] = match *weights.shape() {
            [a, b, c, d] => [a, b, c, d],
            _ => {
                return Err(Error::Shape(format!(
                    "conv2d kernel must be KHxKWxCxF, got {:?}",
                    weights.shape()
                )))
            }
        };
        if kc != c {
            return Err(Error::Shape(format!(
                "conv2d channel mismatch: input has {c} channels, kernel expects {kc}"
            )));
        }
        let (pad_top, pad_bottom) = padding.amounts(kh);
        let (pad_left, pad_right) = padding.amounts(kw);
        let ph = h + pad_top + pad_bottom;
        let pw = w + pad_left + pad_right;
        if ph < kh || pw < kw {
            return Err(Error::Shape(format!(
                "conv2d {kh}x{kw} kernel does not fit {h}x{w} input with {padding} padding"
            )));
        }
        Ok(Self {
            n,
            h,
            w,
            c,
            kh,
            kw,
            f,
            pad_top,
            pad_left,
            out_h: ph - kh + 1,
            out_w: pw - kw + 1,
        })
    }

    fn patch(&self) -> usize {
        self.kh * self.kw * self.c
    }

    fn rows(&self) -> usize {
        self.n * self.out_h * self.out_w
    }

    /// Input coordinate for output position `o` and kernel offset `k`, if not padding.
    #[inline]
    fn source(o: usize, k: usize, pad: usize, extent: usize) -> Option<usize> {
        let pos = (o + k).checked_sub(pad)?;
        (pos < extent).then_some(pos)
    }
}

fn im2col<T: Element>(input: &[T], g: &Geometry) -> Vec<T> {
    let patch = g.patch();
    let mut cols = vec![T::zero(); g.rows() * patch];
    cols.par_chunks_mut(patch)
        .enumerate()
        .for_each(|(row, dst)| {
            let ox = row % g.out_w;
            let oy = (row / g.out_w) % g.out_h;
            let n = row / (g.out_w * g.out_h);
            for ky in 0..g.kh {
                let Some(iy) = Geometry::source(oy, ky, g.pad_top, g.h) else {
                    continue;
                };
                for kx in 0..g.kw {
                    let Some(ix) = Geometry::source(ox, kx, g.pad_left, g.w) else {
                        continue;
                    };
                    let src = ((n * g.h + iy) * g.w + ix) * g.c;
                    let off = (ky * g.kw + kx) * g.c;
                    dst[off..off + g.c].copy_from_slice(&input[src..src + g.c]);
                }
            }
        });
    cols
}

/// Scatter-add an im2col-shaped gradient back to input positions.
fn col2im<T: Element>(cols: &[T], g: &Geometry) -> Vec<T> {
    let patch = g.patch();
    let per_sample_in = g.h * g.w * g.c;
    let per_sample_rows = g.out_h * g.out_w;
    let mut out = vec![T::zero(); g.n * per_sample_in];
    out.par_chunks_mut(per_sample_in)
        .enumerate()
        .for_each(|(n, dst)| {
            for r in 0..per_sample_rows {
                let ox = r % g.out_w;
                let oy = r / g.out_w;
                let src = &cols[(n * per_sample_rows + r) * patch..][..patch];
                for ky in 0..g.kh {
                    let Some(iy) = Geometry::source(oy, ky, g.pad_top, g.h) else {
                        continue;
                    };
                    for kx in 0..g.kw {
                        let Some(ix) = Geometry::source(ox, kx, g.pad_left, g.w) else {
                            continue;
                        };
                        let d = (iy * g.w + ix) * g.c;
                        let s = (ky * g.kw + kx) * g.c;
                        for ch in 0..g.c {
                            dst[d + ch] += src[s + ch];
                        }
                    }
                }
            }
        });
    out
}

fn check_bias<T: Element>(bias: &Tensor<T>, f: usize) -> Result<()> {
    if bias.shape() != [f] {
        return Err(Error::Shape(format!(
            "conv2d bias must have shape [{f}], got {:?}",
            bias.shape()
        )));
    }
    Ok(())
}

/// Forward pass: `input [N,H,W,C]`, `weights [KH,KW,C,F]`, `bias [F]`.
pub fn conv2d_forward<T: Element>(
    input: &Tensor<T>,
    weights: &Tensor<T>,
    bias: &Tensor<T>,
    padding: Padding,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input, weights, padding)?;
    check_bias(bias, g.f)?;
    let cols = Tensor::from_vec(&[g.rows(), g.patch()], im2col(input.data(), &g))?;
    let kernel = Tensor::from_vec(&[g.patch(), g.f], weights.data().to_vec())?;
    let mut out = cols.matmul(&kernel)?;
    for row in out.data_mut().chunks_mut(g.f) {
        for (v, &b) in row.iter_mut().zip(bias.data()) {
            *v += b;
        }
    }
    out.reshape(&[g.n, g.out_h, g.out_w, g.f])
}

#[derive(Debug, Clone)]
pub struct ConvGrads<T> {
    /// `None` when the caller did not ask for it (first layer of a network).
    pub input: Option<Tensor<T>>,
    pub weights: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Backward pass given the forward `input` and the upstream gradient.
pub fn conv2d_backward<T: Element>(
    grad_out: &Tensor<T>,
    input: &Tensor<T>,
    weights: &Tensor<T>,
    padding: Padding,
    need_input_grad: bool,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(input, weights, padding)?;
    let expected = [g.n, g.out_h, g.out_w, g.f];
    if grad_out.shape() != expected {
        return Err(Error::Shape(format!(
            "conv2d grad_out shape {:?} != forward output shape {expected:?}",
            grad_out.shape()
        )));
    }
    let grad = Tensor::from_vec(&[g.rows(), g.f], grad_out.data().to_vec())?;
    let cols = Tensor::from_vec(&[g.rows(), g.patch()], im2col(input.data(), &g))?;

    let grad_w = cols.matmul_tn(&grad)?.reshape(weights.shape())?;
    let mut grad_b = vec![T::zero(); g.f];
    for row in grad.data().chunks(g.f) {
        for (acc, &v) in grad_b.iter_mut().zip(row) {
            *acc += v;
        }
    }
    let grad_in = if need_input_grad {
        let kernel = Tensor::from_vec(&[g.patch(), g.f], weights.data().to_vec())?;
        let grad_cols = grad.matmul_nt(&kernel)?;
        Some(Tensor::from_vec(
            input.shape(),
            col2im(grad_cols.data(), &g),
        )?)
    } else {
        None
    };
    Ok(ConvGrads {
        input: grad_in,
        weights: grad_w,
        bias: Tensor::from_vec(&[g.f], grad_b)?,
    })
}
