//! Layer kernels and the stateful layer wrapper used by sequential models.

pub mod activation;
pub mod conv;
pub mod dense;
pub mod pool;
pub mod spec;

pub use activation::{argmax, relu, relu_backward, softmax};
pub use conv::{conv2d_backward, conv2d_forward, ConvGrads};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use pool::{maxpool2d_backward, maxpool2d_forward, PoolOutput};
pub use spec::{
    layer_name, param_count, Activation, LayerReport, LayerSpec, Padding, ParamCount, ParamReport,
};

use crate::error::{Error, Result};
use crate::tensor::{Element, Tensor};

/// Trainable weights of one layer plus the gradients of the last backward pass.
#[derive(Debug, Clone)]
pub struct Param<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

impl<T: Element> Param<T> {
    pub fn new(name: String, value: Tensor<T>) -> Self {
        let grad = Tensor::zeros(value.shape());
        Self { name, value, grad }
    }
}

/// An executable layer with its forward cache.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv2d {
        weights: Param<T>,
        bias: Param<T>,
        padding: Padding,
        cache: Option<Tensor<T>>,
    },
    MaxPool2d {
        window: usize,
        cache: Option<(Vec<usize>, Vec<usize>)>,
    },
    Relu {
        cache: Option<Tensor<T>>,
    },
    Flatten {
        cache: Option<Vec<usize>>,
    },
    Dense {
        weights: Param<T>,
        bias: Param<T>,
        cache: Option<Tensor<T>>,
    },
}

fn missing_cache(kind: &str) -> Error {
    Error::Shape(format!("{kind} backward called before forward"))
}

impl<T: Element> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Conv2d { .. } => "conv2d",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Relu { .. } => "relu",
            Layer::Flatten { .. } => "flatten",
            Layer::Dense { .. } => "dense",
        }
    }

    /// Forward pass; with `train` set the inputs needed by backward are kept.
    pub fn forward(&mut self, input: Tensor<T>, train: bool) -> Result<Tensor<T>> {
        match self {
            Layer::Conv2d {
                weights,
                bias,
                padding,
                cache,
            } => {
                let out = conv2d_forward(&input, &weights.value, &bias.value, *padding)?;
                *cache = train.then_some(input);
                Ok(out)
            }
            Layer::MaxPool2d { window, cache } => {
                let p = maxpool2d_forward(&input, *window, *window)?;
                *cache = train.then(|| (p.argmax, input.shape().to_vec()));
                Ok(p.output)
            }
            Layer::Relu { cache } => {
                let out = relu(&input);
                *cache = train.then_some(input);
                Ok(out)
            }
            Layer::Flatten { cache } => {
                let shape = input.shape().to_vec();
                let n = shape[0];
                let d = input.len() / n;
                *cache = train.then_some(shape);
                input.reshape(&[n, d])
            }
            Layer::Dense {
                weights,
                bias,
                cache,
            } => {
                let out = dense_forward(&input, &weights.value, &bias.value)?;
                *cache = train.then_some(input);
                Ok(out)
            }
        }
    }

    /// Backward pass storing parameter gradients; returns the input gradient
    /// when `need_input_grad` is set.
    pub fn backward(
        &mut self,
        grad_out: Tensor<T>,
        need_input_grad: bool,
    ) -> Result<Option<Tensor<T>>> {
        match self {
            Layer::Conv2d {
                weights,
                bias,
                padding,
                cache,
            } => {
                let input = cache.take().ok_or_else(|| missing_cache("conv2d"))?;
                let g =
                    conv2d_backward(&grad_out, &input, &weights.value, *padding, need_input_grad)?;
                weights.grad = g.weights;
                bias.grad = g.bias;
                Ok(g.input)
            }
            Layer::MaxPool2d { cache, .. } => {
                let (argmax, shape) = cache.take().ok_or_else(|| missing_cache("maxpool2d"))?;
                Ok(Some(maxpool2d_backward(&grad_out, &argmax, &shape)?))
            }
            Layer::Relu { cache } => {
                let input = cache.take().ok_or_else(|| missing_cache("relu"))?;
                Ok(Some(relu_backward(&grad_out, &input)?))
            }
            Layer::Flatten { cache } => {
                let shape = cache.take().ok_or_else(|| missing_cache("flatten"))?;
                Ok(Some(grad_out.reshape(&shape)?))
            }
            Layer::Dense {
                weights,
                bias,
                cache,
            } => {
                let input = cache.take().ok_or_else(|| missing_cache("dense"))?;
                let g = dense_backward(&grad_out, &input, &weights.value)?;
                weights.grad = g.weights;
                bias.grad = g.bias;
                Ok(need_input_grad.then_some(g.input))
            }
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                vec![weights, bias]
            }
            _ => Vec::new(),
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        match self {
            Layer::Conv2d { weights, bias, .. } | Layer::Dense { weights, bias, .. } => {
                vec![weights, bias]
            }
            _ => Vec::new(),
        }
    }
}
