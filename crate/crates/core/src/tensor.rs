//! Dense row-major N-dimensional arrays.
//!
//! The element type is generic so the same layer code runs in `f32` for
//! training and inference and in `f64` for finite-difference gradient checks.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{AddAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Floating-point element type usable in a [`Tensor`].
pub trait Element:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + Sum
    + Default
    + Debug
    + Send
    + Sync
    + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("float conversion")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("float conversion")
    }
}

impl Element for f32 {}
impl Element for f64 {}

/// Below this many multiply-adds the matmul kernels stay on the calling thread.
const PARALLEL_THRESHOLD: usize = 1 << 16;

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.data.len() <= 16 {
            write!(f, " {:?}", self.data)?;
        }
        Ok(())
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!(
            "dimensions must be positive and non-empty, got {shape:?}"
        )));
    }
    Ok(shape.iter().product())
}

impl<T: Element> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != data.len() {
            return Err(Error::Shape(format!(
                "shape {shape:?} needs {n} values, got {}",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n = check_shape(shape).expect("invalid tensor shape");
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    /// Convenience constructor from `f64` literals.
    pub fn from_f64(shape: &[usize], values: &[f64]) -> Result<Self> {
        Self::from_vec(
            shape,
            values.iter().map(|&v| T::from_f64_lossy(v)).collect(),
        )
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    /// Same data under a new shape with equal element count.
    pub fn reshape(self, shape: &[usize]) -> Result<Self> {
        let n = check_shape(shape)?;
        if n != self.data.len() {
            return Err(Error::Shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|&v| U::from_f64_lossy(v.as_f64()))
                .collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_value(&self) -> T {
        self.data
            .iter()
            .copied()
            .fold(T::neg_infinity(), |a, b| if b > a { b } else { a })
    }

    /// Largest absolute elementwise difference.
    pub fn max_abs_diff(&self, other: &Self) -> Result<T> {
        self.same_shape(other, "max_abs_diff")?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), |a, b| if b > a { b } else { a }))
    }

    fn same_shape(&self, other: &Self, op: &str) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Shape(format!(
                "{op}: shapes {:?} and {:?} differ",
                self.shape, other.shape
            )));
        }
        Ok(())
    }

    fn zip_with(&self, other: &Self, op: &str, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.same_shape(other, op)?;
        Ok(Self {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "sub", |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "mul", |a, b| a * b)
    }

    pub fn maximum(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, "max", |a, b| if b > a { b } else { a })
    }

    pub fn scale(&self, factor: T) -> Self {
        self.map(|v| v * factor)
    }

    pub fn exp(&self) -> Self {
        self.map(T::exp)
    }

    /// Natural log; every element must be strictly positive.
    pub fn ln(&self) -> Result<Self> {
        if let Some(bad) = self.data.iter().find(|&&v| v <= T::zero() || v.is_nan()) {
            return Err(Error::Domain(format!("log of non-positive value {bad:?}")));
        }
        Ok(self.map(T::ln))
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        self.same_shape(other, "add_assign")?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    fn matrix_dims(&self, what: &str) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(Error::Shape(format!(
                "{what} must be 2-D, got {:?}",
                self.shape
            ))),
        }
    }

    /// Matrix transpose of a 2-D tensor.
    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.matrix_dims("transpose operand")?;
        let mut out = vec![T::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Self::from_vec(&[c, r], out)
    }

    /// `self · other` for 2-D operands.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.matrix_dims("matmul lhs")?;
        let (k2, n) = other.matrix_dims("matmul rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul inner dimensions disagree: {:?} x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(&self.data, &other.data, &mut out, m, k, n);
        Self::from_vec(&[m, n], out)
    }

    /// `selfᵀ · other` without materializing the transpose at the call site.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.matrix_dims("matmul_tn lhs")?;
        let (m2, n) = other.matrix_dims("matmul_tn rhs")?;
        if m != m2 {
            return Err(Error::Shape(format!(
                "matmul_tn outer dimensions disagree: {:?}ᵀ x {:?}",
                self.shape, other.shape
            )));
        }
        let mut out = vec![T::zero(); k * n];
        gemm_tn(&self.data, &other.data, &mut out, m, k, n);
        Self::from_vec(&[k, n], out)
    }

    /// `self · otherᵀ`.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        let (m, k) = self.matrix_dims("matmul_nt lhs")?;
        let (n, k2) = other.matrix_dims("matmul_nt rhs")?;
        if k != k2 {
            return Err(Error::Shape(format!(
                "matmul_nt inner dimensions disagree: {:?} x {:?}ᵀ",
                self.shape, other.shape
            )));
        }
        let bt = other.transpose()?;
        let mut out = vec![T::zero(); m * n];
        gemm(&self.data, &bt.data, &mut out, m, k, n);
        Self::from_vec(&[m, n], out)
    }
}

/// Row-parallel `c = a · b` with `a: m×k`, `b: k×n`, `c: m×n` (c zeroed).
///
/// Every output row is accumulated sequentially in `p` order, so results are
/// independent of the number of worker threads.
fn gemm<T: Element>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let row = |(i, c_row): (usize, &mut [T])| {
        let a_row = &a[i * k..(i + 1) * k];
        for (p, &av) in a_row.iter().enumerate() {
            if av == T::zero() {
                continue;
            }
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += av * bv;
            }
        }
    };
    if m * n * k >= PARALLEL_THRESHOLD && m > 1 {
        c.par_chunks_mut(n).enumerate().for_each(row);
    } else {
        c.chunks_mut(n).enumerate().for_each(row);
    }
}

/// `c = aᵀ · b` with `a: m×k`, `b: m×n`, `c: k×n` (c zeroed), accumulated
/// as a sum of row outer products so both operands are streamed once.
///
/// Each worker owns a band of output rows and visits `r` in ascending order,
/// which is the same per-element order as [`gemm`] on the transpose.
fn gemm_tn<T: Element>(a: &[T], b: &[T], c: &mut [T], m: usize, k: usize, n: usize) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let band = |(start, c_band): (usize, &mut [T])| {
        let rows = c_band.len() / n;
        for r in 0..m {
            let a_row = &a[r * k + start..r * k + start + rows];
            let b_row = &b[r * n..(r + 1) * n];
            for (p, &av) in a_row.iter().enumerate() {
                if av == T::zero() {
                    continue;
                }
                for (cv, &bv) in c_band[p * n..(p + 1) * n].iter_mut().zip(b_row) {
                    *cv += av * bv;
                }
            }
        }
    };
    let threads = rayon::current_num_threads();
    if m * n * k >= PARALLEL_THRESHOLD && threads > 1 && k > 1 {
        let per = k.div_ceil(threads);
        c.par_chunks_mut(per * n)
            .enumerate()
            .map(|(i, ch)| (i * per, ch))
            .for_each(band);
    } else {
        band((0, c));
    }
}

/// Glorot (Xavier) uniform initialization: i.i.d. draws on `[-L, L]` with
/// `L = sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform<T: Element>(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut Rng,
) -> Result<Tensor<T>> {
    if fan_in == 0 || fan_out == 0 {
        return Err(Error::Argument(format!(
            "glorot_uniform needs positive fans, got fan_in={fan_in}, fan_out={fan_out}"
        )));
    }
    let limit = glorot_limit(fan_in, fan_out);
    let n = check_shape(shape)?;
    let data = (0..n)
        .map(|_| T::from_f64_lossy(rng.uniform_range(-limit, limit)))
        .collect();
    Tensor::from_vec(shape, data)
}

pub fn glorot_limit(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}
