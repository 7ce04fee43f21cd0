//! Declarative layer descriptions, shape propagation and parameter accounting.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Padding {
    Same,
    Valid,
}

impl Padding {
    pub fn as_str(self) -> &'static str {
        match self {
            Padding::Same => "same",
            Padding::Valid => "valid",
        }
    }

    /// Zero rows/columns added before and after an axis for a stride-1 kernel
    /// of size `k`. Odd deficits put the extra zero after (bottom/right).
    pub fn amounts(self, k: usize) -> (usize, usize) {
        match self {
            Padding::Valid => (0, 0),
            Padding::Same => {
                let total = k - 1;
                (total / 2, total - total / 2)
            }
        }
    }
}

impl fmt::Display for Padding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Activation {
    Relu,
    Softmax,
    None,
}

impl Activation {
    pub fn as_str(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Softmax => "softmax",
            Activation::None => "none",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One entry of a sequential architecture.
///
/// Strides other than the executable defaults (1 for convolution, the window
/// size for pooling) and `BatchNorm` are accepted for shape and parameter
/// accounting only; [`crate::model::Sequential`] refuses to build them.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum LayerSpec {
    Conv2d {
        filters: usize,
        kernel_h: usize,
        kernel_w: usize,
        padding: Padding,
        activation: Activation,
        stride: usize,
    },
    MaxPool2d {
        pool_h: usize,
        pool_w: usize,
        stride: usize,
    },
    Flatten,
    Dense {
        units: usize,
        activation: Activation,
    },
    /// Accounting-only batch normalization: gamma/beta trainable, moving
    /// mean/variance not.
    BatchNorm,
}

impl LayerSpec {
    pub fn conv(filters: usize, kernel: usize, padding: Padding, activation: Activation) -> Self {
        LayerSpec::Conv2d {
            filters,
            kernel_h: kernel,
            kernel_w: kernel,
            padding,
            activation,
            stride: 1,
        }
    }

    pub fn pool(window: usize) -> Self {
        LayerSpec::MaxPool2d {
            pool_h: window,
            pool_w: window,
            stride: window,
        }
    }

    pub fn dense(units: usize, activation: Activation) -> Self {
        LayerSpec::Dense { units, activation }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::MaxPool2d { .. } => "maxpool2d",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::BatchNorm => "batchnorm",
        }
    }

    pub fn activation(&self) -> Activation {
        match self {
            LayerSpec::Conv2d { activation, .. } | LayerSpec::Dense { activation, .. } => {
                *activation
            }
            _ => Activation::None,
        }
    }

    /// Whether the execution engine can run this entry.
    pub fn is_executable(&self) -> bool {
        match *self {
            LayerSpec::Conv2d { stride, .. } => stride == 1,
            LayerSpec::MaxPool2d {
                pool_h,
                pool_w,
                stride,
            } => pool_h == pool_w && stride == pool_h,
            LayerSpec::BatchNorm => false,
            LayerSpec::Flatten | LayerSpec::Dense { .. } => true,
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        match *self {
            LayerSpec::Conv2d {
                filters,
                kernel_h,
                kernel_w,
                stride,
                ..
            } => {
                if filters == 0 || kernel_h == 0 || kernel_w == 0 || stride == 0 {
                    return Err("conv filters, kernel dims and stride must be >= 1".into());
                }
            }
            LayerSpec::MaxPool2d {
                pool_h,
                pool_w,
                stride,
            } => {
                if pool_h == 0 || pool_w == 0 || stride == 0 {
                    return Err("pool window and stride must be >= 1".into());
                }
            }
            LayerSpec::Dense { units, .. } => {
                if units == 0 {
                    return Err("dense units must be >= 1".into());
                }
            }
            LayerSpec::Flatten | LayerSpec::BatchNorm => {}
        }
        Ok(())
    }

    /// Per-sample output shape (`[H, W, C]` or `[D]`) for a per-sample input.
    pub fn output_shape(&self, input: &[usize]) -> std::result::Result<Vec<usize>, String> {
        self.validate()?;
        match *self {
            LayerSpec::Conv2d {
                filters,
                kernel_h,
                kernel_w,
                padding,
                stride,
                ..
            } => {
                let [h, w, _c] = spatial(input, "conv2d")?;
                let oh = conv_extent(h, kernel_h, stride, padding)?;
                let ow = conv_extent(w, kernel_w, stride, padding)?;
                Ok(vec![oh, ow, filters])
            }
            LayerSpec::MaxPool2d {
                pool_h,
                pool_w,
                stride,
            } => {
                let [h, w, c] = spatial(input, "maxpool2d")?;
                if h < pool_h || w < pool_w {
                    return Err(format!(
                        "maxpool2d window {pool_h}x{pool_w} larger than input {h}x{w}"
                    ));
                }
                Ok(vec![
                    (h - pool_h) / stride + 1,
                    (w - pool_w) / stride + 1,
                    c,
                ])
            }
            LayerSpec::Flatten => Ok(vec![input.iter().product()]),
            LayerSpec::Dense { units, .. } => match input {
                [_] => Ok(vec![units]),
                _ => Err(format!(
                    "dense needs a flattened input, got {input:?} (add `flatten`)"
                )),
            },
            LayerSpec::BatchNorm => Ok(input.to_vec()),
        }
    }

    /// `(total, trainable)` parameters for a per-sample input shape.
    pub fn param_counts(&self, input: &[usize]) -> std::result::Result<ParamCount, String> {
        self.validate()?;
        let count = match *self {
            LayerSpec::Conv2d {
                filters,
                kernel_h,
                kernel_w,
                ..
            } => {
                let [_, _, c] = spatial(input, "conv2d")?;
                let n = kernel_h * kernel_w * c * filters + filters;
                ParamCount::trainable(n)
            }
            LayerSpec::Dense { units, .. } => {
                let d = match input {
                    [d] => *d,
                    _ => return Err(format!("dense needs a flattened input, got {input:?}")),
                };
                ParamCount::trainable(d * units + units)
            }
            LayerSpec::BatchNorm => {
                let c = *input.last().ok_or("batchnorm on empty shape")?;
                ParamCount {
                    total: 4 * c,
                    trainable: 2 * c,
                }
            }
            LayerSpec::MaxPool2d { .. } | LayerSpec::Flatten => ParamCount::default(),
        };
        Ok(count)
    }
}

fn spatial(input: &[usize], what: &str) -> std::result::Result<[usize; 3], String> {
    match *input {
        [h, w, c] => Ok([h, w, c]),
        _ => Err(format!("{what} needs an HxWxC input, got {input:?}")),
    }
}

fn conv_extent(
    n: usize,
    k: usize,
    stride: usize,
    padding: Padding,
) -> std::result::Result<usize, String> {
    match padding {
        Padding::Same => Ok(n.div_ceil(stride)),
        Padding::Valid => {
            if n < k {
                Err(format!(
                    "valid conv kernel {k} larger than input extent {n}"
                ))
            } else {
                Ok((n - k) / stride + 1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParamCount {
    pub total: usize,
    pub trainable: usize,
}

impl ParamCount {
    pub fn trainable(n: usize) -> Self {
        Self {
            total: n,
            trainable: n,
        }
    }

    pub fn non_trainable(&self) -> usize {
        self.total - self.trainable
    }
}

impl std::ops::Add for ParamCount {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self {
            total: self.total + rhs.total,
            trainable: self.trainable + rhs.trainable,
        }
    }
}

impl std::iter::Sum for ParamCount {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), |a, b| a + b)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayerReport {
    pub name: String,
    pub output_shape: Vec<usize>,
    pub params: ParamCount,
}

/// Layer-by-layer output shapes and parameter counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamReport {
    pub input_shape: Vec<usize>,
    pub layers: Vec<LayerReport>,
    pub totals: ParamCount,
}

/// Canonical name of the `index`-th layer, used in reports and checkpoints.
pub fn layer_name(spec: &LayerSpec, index: usize) -> String {
    format!("{}_{}", spec.kind(), index)
}

/// Propagate `input_shape` through `specs`, counting parameters per layer.
///
/// Errors are [`Error::Config`] with `line` set to the 1-based layer position;
/// the config parser remaps it to the source line.
pub fn param_count(specs: &[LayerSpec], input_shape: &[usize]) -> Result<ParamReport> {
    let mut shape = input_shape.to_vec();
    let mut layers = Vec::with_capacity(specs.len());
    for (i, spec) in specs.iter().enumerate() {
        let name = layer_name(spec, i);
        let params = spec
            .param_counts(&shape)
            .map_err(|m| Error::config(i + 1, format!("{name}: {m}")))?;
        shape = spec
            .output_shape(&shape)
            .map_err(|m| Error::config(i + 1, format!("{name}: {m}")))?;
        layers.push(LayerReport {
            name,
            output_shape: shape.clone(),
            params,
        });
    }
    let totals = layers.iter().map(|l| l.params).sum();
    Ok(ParamReport {
        input_shape: input_shape.to_vec(),
        layers,
        totals,
    })
}
