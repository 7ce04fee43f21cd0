//! Central finite-difference checks of the analytic gradients, run in `f64`.
//!
//! Each check draws random shapes and values, forms the scalar
//! `L = Σ out ⊙ R` for a random probe `R` (or the mean cross-entropy for the
//! fused head), and compares every analytic partial derivative against
//! `(L(x + h) − L(x − h)) / 2h`.

use crate::error::Result;
use crate::layers::{
    conv2d_backward, conv2d_forward, dense_backward, dense_forward, maxpool2d_backward,
    maxpool2d_forward, relu, relu_backward, softmax, Padding,
};
use crate::objective::{sparse_ce_grad_logits, sparse_ce_loss};
use crate::rng::Rng;
use crate::tensor::Tensor;

const STEP: f64 = 1e-6;
const TAG_GRAD: u64 = 0x4752_4144; // "GRAD"

/// Worst case over a batch of random instances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    pub instances: usize,
    /// Largest [`relative_error`] seen.
    pub max_rel_error: f64,
}

/// `‖a − n‖₂ / max(‖a‖₂ + ‖n‖₂, 1e-12)`.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut analytic.iter().zip(numeric).map(|(a, n)| a - n));
    let scale = norm(&mut analytic.iter().copied()) + norm(&mut numeric.iter().copied());
    diff / scale.max(1e-12)
}

fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::from_vec(
        shape,
        (0..n).map(|_| rng.uniform_range(-1.0, 1.0)).collect(),
    )
    .expect("positive shape")
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

/// Numeric gradient of `loss` w.r.t. every entry of `x`.
fn numeric_grad(
    x: &Tensor<f64>,
    mut loss: impl FnMut(&Tensor<f64>) -> Result<f64>,
) -> Result<Vec<f64>> {
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + STEP;
        let up = loss(&probe)?;
        probe.data_mut()[i] = orig - STEP;
        let down = loss(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((up - down) / (2.0 * STEP));
    }
    Ok(out)
}

fn run(
    instances: usize,
    seed: u64,
    tag: u64,
    mut one: impl FnMut(&mut Rng) -> Result<f64>,
) -> Result<GradCheck> {
    let mut worst: f64 = 0.0;
    for i in 0..instances {
        let mut rng = Rng::derive(seed, &[TAG_GRAD, tag, i as u64]);
        worst = worst.max(one(&mut rng)?);
    }
    Ok(GradCheck {
        instances,
        max_rel_error: worst,
    })
}

/// Input, weight and bias gradients of a convolution with random geometry.
pub fn check_conv2d(instances: usize, seed: u64) -> Result<GradCheck> {
    run(instances, seed, 1, |rng| {
        let n = 1 + rng.below(2) as usize;
        let kh = 1 + rng.below(3) as usize;
        let kw = 1 + rng.below(3) as usize;
        let h = kh + rng.below(3) as usize;
        let w = kw + rng.below(3) as usize;
        let c = 1 + rng.below(3) as usize;
        let f = 1 + rng.below(3) as usize;
        let padding = if rng.bernoulli(0.5) {
            Padding::Same
        } else {
            Padding::Valid
        };
        let x = random(&[n, h, w, c], rng);
        let k = random(&[kh, kw, c, f], rng);
        let b = random(&[f], rng);
        let out = conv2d_forward(&x, &k, &b, padding)?;
        let r = random(out.shape(), rng);
        let g = conv2d_backward(&r, &x, &k, padding, true)?;
        let analytic: Vec<f64> = [
            g.input.expect("requested").data(),
            g.weights.data(),
            g.bias.data(),
        ]
        .concat();
        let mut numeric = numeric_grad(&x, |x| Ok(dot(&conv2d_forward(x, &k, &b, padding)?, &r)))?;
        numeric.extend(numeric_grad(&k, |k| {
            Ok(dot(&conv2d_forward(&x, k, &b, padding)?, &r))
        })?);
        numeric.extend(numeric_grad(&b, |b| {
            Ok(dot(&conv2d_forward(&x, &k, b, padding)?, &r))
        })?);
        Ok(relative_error(&analytic, &numeric))
    })
}

pub fn check_dense(instances: usize, seed: u64) -> Result<GradCheck> {
    run(instances, seed, 2, |rng| {
        let n = 1 + rng.below(4) as usize;
        let d = 1 + rng.below(6) as usize;
        let u = 1 + rng.below(5) as usize;
        let x = random(&[n, d], rng);
        let w = random(&[d, u], rng);
        let b = random(&[u], rng);
        let r = random(&[n, u], rng);
        let g = dense_backward(&r, &x, &w)?;
        let analytic: Vec<f64> = [g.input.data(), g.weights.data(), g.bias.data()].concat();
        let mut numeric = numeric_grad(&x, |x| Ok(dot(&dense_forward(x, &w, &b)?, &r)))?;
        numeric.extend(numeric_grad(&w, |w| {
            Ok(dot(&dense_forward(&x, w, &b)?, &r))
        })?);
        numeric.extend(numeric_grad(&b, |b| {
            Ok(dot(&dense_forward(&x, &w, b)?, &r))
        })?);
        Ok(relative_error(&analytic, &numeric))
    })
}

/// Inputs are kept at least `1e-3` from the kink at zero.
pub fn check_relu(instances: usize, seed: u64) -> Result<GradCheck> {
    run(instances, seed, 3, |rng| {
        let len = 2 + rng.below(20) as usize;
        let vals = (0..len)
            .map(|_| {
                let m = rng.uniform_range(1e-3, 1.0);
                if rng.bernoulli(0.5) {
                    m
                } else {
                    -m
                }
            })
            .collect();
        let x = Tensor::from_vec(&[len], vals)?;
        let r = random(&[len], rng);
        let analytic = relu_backward(&r, &x)?;
        let numeric = numeric_grad(&x, |x| Ok(dot(&relu(x), &r)))?;
        Ok(relative_error(analytic.data(), &numeric))
    })
}

/// Input values are a scaled permutation, so every window has a unique
/// maximum separated from the runner-up by more than the step.
pub fn check_maxpool(instances: usize, seed: u64) -> Result<GradCheck> {
    run(instances, seed, 4, |rng| {
        let n = 1 + rng.below(2) as usize;
        let p = 1 + rng.below(3) as usize;
        let h = p + rng.below(4) as usize;
        let w = p + rng.below(4) as usize;
        let c = 1 + rng.below(3) as usize;
        let len = n * h * w * c;
        let mut ranks: Vec<usize> = (0..len).collect();
        rng.shuffle(&mut ranks);
        let x = Tensor::from_vec(
            &[n, h, w, c],
            ranks.iter().map(|&k| k as f64 * 0.01 - 0.5).collect(),
        )?;
        let fwd = maxpool2d_forward(&x, p, p)?;
        let r = random(fwd.output.shape(), rng);
        let analytic = maxpool2d_backward(&r, &fwd.argmax, x.shape())?;
        let numeric = numeric_grad(&x, |x| Ok(dot(&maxpool2d_forward(x, p, p)?.output, &r)))?;
        Ok(relative_error(analytic.data(), &numeric))
    })
}

/// Fused `softmax + sparse cross-entropy` gradient w.r.t. the logits.
pub fn check_softmax_ce(instances: usize, seed: u64) -> Result<GradCheck> {
    run(instances, seed, 5, |rng| {
        let n = 1 + rng.below(5) as usize;
        let k = 2 + rng.below(8) as usize;
        let z = random(&[n, k], rng).scale(3.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k as u64) as usize).collect();
        let analytic = sparse_ce_grad_logits(&z, &labels)?;
        let numeric = numeric_grad(&z, |z| sparse_ce_loss(&softmax(z), &labels))?;
        Ok(relative_error(analytic.data(), &numeric))
    })
}
