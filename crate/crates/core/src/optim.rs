//! Adam and validation-loss early stopping.

use crate::error::{Error, Result};
use crate::layers::Param;
use crate::tensor::{Element, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    /// A learning rate of exactly 0 is accepted so a run can be frozen.
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr.is_finite()
            && self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Argument(format!(
                "invalid Adam configuration {self:?}"
            )))
        }
    }
}

/// First/second moment estimates for each parameter tensor, in a fixed order.
#[derive(Debug, Clone, Default)]
pub struct AdamState<T> {
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Element> AdamState<T> {
    pub fn new() -> Self {
        Self {
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }
}

/// One Adam update of `params` using the gradients stored alongside them.
///
/// Moment buffers are created lazily on the first call; later calls must
/// present the same parameters in the same order.
pub fn adam_step<T: Element>(
    params: &mut [&mut Param<T>],
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    if state.m.is_empty() {
        state.m = params
            .iter()
            .map(|p| Tensor::zeros(p.value.shape()))
            .collect();
        state.v = state.m.clone();
    }
    if state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "optimizer state tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (i, p) in params.iter().enumerate() {
        if p.grad.shape() != p.value.shape() || state.m[i].shape() != p.value.shape() {
            return Err(Error::Shape(format!(
                "parameter '{}' shape {:?}, gradient {:?}, state {:?}",
                p.name,
                p.value.shape(),
                p.grad.shape(),
                state.m[i].shape()
            )));
        }
        if !p.grad.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter '{}'",
                p.name
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let b1 = T::from_f64_lossy(cfg.beta1);
    let b2 = T::from_f64_lossy(cfg.beta2);
    let one = T::one();
    let corr1 = T::from_f64_lossy(1.0 - cfg.beta1.powi(t));
    let corr2 = T::from_f64_lossy(1.0 - cfg.beta2.powi(t));
    let lr = T::from_f64_lossy(cfg.lr);
    let eps = T::from_f64_lossy(cfg.epsilon);

    for (i, p) in params.iter_mut().enumerate() {
        let Param { value, grad, .. } = &mut **p;
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (((w, &g), m), v) in value
            .data_mut()
            .iter_mut()
            .zip(grad.data())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *m = b1 * *m + (one - b1) * g;
            *v = b2 * *v + (one - b2) * g * g;
            let m_hat = *m / corr1;
            let v_hat = *v / corr2;
            *w -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Continue,
    Stop,
}

/// Early stopping on a monitored loss with best-snapshot tracking.
///
/// An epoch improves when its loss is strictly below the best so far. After
/// `patience` consecutive non-improving epochs the policy answers `Stop`.
#[derive(Debug, Clone)]
pub struct EarlyStopping<S> {
    pub patience: usize,
    best_value: Option<f64>,
    best_epoch: usize,
    epochs_since_improvement: usize,
    epochs_seen: usize,
    best_snapshot: Option<S>,
}

impl<S> EarlyStopping<S> {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best_value: None,
            best_epoch: 0,
            epochs_since_improvement: 0,
            epochs_seen: 0,
            best_snapshot: None,
        }
    }

    /// Record one epoch's monitored loss. `snapshot` is called only when the
    /// epoch improves, so callers can defer cloning weights.
    pub fn update(&mut self, val_loss: f64, snapshot: impl FnOnce() -> S) -> StopDecision {
        self.epochs_seen += 1;
        let improved = self.best_value.is_none_or(|best| val_loss < best);
        if improved {
            self.best_value = Some(val_loss);
            self.best_epoch = self.epochs_seen;
            self.epochs_since_improvement = 0;
            self.best_snapshot = Some(snapshot());
        } else {
            self.epochs_since_improvement += 1;
        }
        if !improved && self.epochs_since_improvement >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    pub fn best_value(&self) -> Option<f64> {
        self.best_value
    }

    /// 1-based epoch of the best loss, 0 before any update.
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.epochs_since_improvement
    }

    pub fn best_snapshot(&self) -> Option<&S> {
        self.best_snapshot.as_ref()
    }

    pub fn take_best_snapshot(&mut self) -> Option<S> {
        self.best_snapshot.take()
    }
}
