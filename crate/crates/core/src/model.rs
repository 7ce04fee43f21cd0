//! Sequential models assembled from a [`ModelConfig`].

use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::layers::{layer_name, softmax, Activation, Layer, LayerSpec, Padding, Param};
use crate::rng::Rng;
use crate::tensor::{glorot_uniform, Element, Tensor};

/// An executable stack of layers. The softmax head is not a layer: the model
/// returns logits and callers apply [`softmax`] or the fused loss gradient.
#[derive(Debug, Clone)]
pub struct Sequential<T = f32> {
    pub config: ModelConfig,
    layers: Vec<Layer<T>>,
}

impl<T: Element> Sequential<T> {
    /// Build with Glorot-uniform kernels and zero biases.
    pub fn new(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        Self::build(config, |shape, fan_in, fan_out| {
            glorot_uniform(shape, fan_in, fan_out, rng)
        })
    }

    /// Build with all weights zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        Self::build(config, |shape, _, _| Ok(Tensor::zeros(shape)))
    }

    fn build(
        config: &ModelConfig,
        mut init: impl FnMut(&[usize], usize, usize) -> Result<Tensor<T>>,
    ) -> Result<Self> {
        config.validate()?;
        let mut shape = config.input_shape.clone();
        let mut layers = Vec::new();
        for (i, spec) in config.layers.iter().enumerate() {
            let name = layer_name(spec, i);
            if !spec.is_executable() {
                return Err(Error::config(
                    i + 1,
                    format!("{name} is supported for parameter accounting only"),
                ));
            }
            match *spec {
                LayerSpec::Conv2d {
                    filters,
                    kernel_h,
                    kernel_w,
                    padding,
                    activation,
                    ..
                } => {
                    let c = shape[2];
                    let w = init(
                        &[kernel_h, kernel_w, c, filters],
                        kernel_h * kernel_w * c,
                        kernel_h * kernel_w * filters,
                    )?;
                    layers.push(conv_layer(&name, w, Tensor::zeros(&[filters]), padding));
                    if activation == Activation::Relu {
                        layers.push(Layer::Relu { cache: None });
                    }
                }
                LayerSpec::MaxPool2d { pool_h, .. } => layers.push(Layer::MaxPool2d {
                    window: pool_h,
                    cache: None,
                }),
                LayerSpec::Flatten => layers.push(Layer::Flatten { cache: None }),
                LayerSpec::Dense { units, activation } => {
                    let d = shape[0];
                    let w = init(&[d, units], d, units)?;
                    layers.push(Layer::Dense {
                        weights: Param::new(format!("{name}.weight"), w),
                        bias: Param::new(format!("{name}.bias"), Tensor::zeros(&[units])),
                        cache: None,
                    });
                    if activation == Activation::Relu {
                        layers.push(Layer::Relu { cache: None });
                    }
                }
                LayerSpec::BatchNorm => unreachable!("rejected above"),
            }
            shape = spec
                .output_shape(&shape)
                .map_err(|m| Error::config(i + 1, m))?;
        }
        Ok(Self {
            config: config.clone(),
            layers,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.config.num_classes()
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    /// Logits for a `[N, H, W, C]` batch. With `train` set, the forward
    /// caches needed by [`Sequential::backward`] are kept.
    pub fn forward(&mut self, input: Tensor<T>, train: bool) -> Result<Tensor<T>> {
        let expected: Vec<usize> = std::iter::once(input.shape()[0])
            .chain(self.config.input_shape.iter().copied())
            .collect();
        if input.shape() != expected.as_slice() {
            return Err(Error::Shape(format!(
                "model expects input {expected:?}, got {:?}",
                input.shape()
            )));
        }
        self.layers
            .iter_mut()
            .try_fold(input, |x, layer| layer.forward(x, train))
    }

    /// Class probabilities without keeping caches.
    pub fn predict_proba(&mut self, input: Tensor<T>) -> Result<Tensor<T>> {
        Ok(softmax(&self.forward(input, false)?))
    }

    /// Backpropagate the gradient w.r.t. the logits, filling every
    /// parameter's `grad`. The gradient w.r.t. the input image is not formed.
    pub fn backward(&mut self, grad_logits: Tensor<T>) -> Result<()> {
        let mut grad = Some(grad_logits);
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let g = grad
                .take()
                .expect("input grad requested for every layer but the first");
            grad = layer.backward(g, i > 0)?;
        }
        Ok(())
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    /// `(name, value)` for every parameter tensor, in layer order.
    pub fn named_tensors(&self) -> Vec<(String, Tensor<T>)> {
        self.params()
            .into_iter()
            .map(|p| (p.name.clone(), p.value.clone()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }

    /// Replace every parameter value. Names, count and shapes must match.
    pub fn set_tensors(&mut self, tensors: &[(String, Tensor<T>)]) -> Result<()> {
        let mut params = self.params_mut();
        if params.len() != tensors.len() {
            return Err(Error::Checkpoint(format!(
                "model has {} tensors, checkpoint has {}",
                params.len(),
                tensors.len()
            )));
        }
        for (p, (name, value)) in params.iter().zip(tensors) {
            if &p.name != name {
                return Err(Error::Checkpoint(format!(
                    "tensor name mismatch: model expects '{}', checkpoint has '{name}'",
                    p.name
                )));
            }
            if p.value.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "shape mismatch for tensor '{name}': model expects {:?}, checkpoint has {:?}",
                    p.value.shape(),
                    value.shape()
                )));
            }
        }
        for (p, (_, value)) in params.iter_mut().zip(tensors) {
            p.value = value.clone();
        }
        Ok(())
    }

    /// Change element type (used to run the same network in `f64`).
    pub fn cast<U: Element>(&self) -> Sequential<U> {
        let mut out = Sequential::<U>::zeros(&self.config).expect("config already validated");
        let tensors: Vec<(String, Tensor<U>)> = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.cast()))
            .collect();
        out.set_tensors(&tensors).expect("same config");
        out
    }
}

fn conv_layer<T: Element>(name: &str, w: Tensor<T>, b: Tensor<T>, padding: Padding) -> Layer<T> {
    Layer::Conv2d {
        weights: Param::new(format!("{name}.weight"), w),
        bias: Param::new(format!("{name}.bias"), b),
        padding,
        cache: None,
    }
}
