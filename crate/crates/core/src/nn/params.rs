use rand::Rng;
use serde::{Deserialize, Serialize};

use super::tensor::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerKind {
    Conv1d,
    BatchNorm,
    Dense,
}

/// Trainable weights and bias of one layer together with their gradient
/// buffers.
///
/// Conv weights are shaped `[out, in, kernel]`, dense weights `[out, in]`,
/// batch-norm "weights" are the per-channel gamma and "bias" the beta.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    pub name: String,
    pub kind: LayerKind,
    pub weight_shape: Vec<usize>,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub weight_grad: Vec<T>,
    pub bias_grad: Vec<T>,
    /// Frozen layers are skipped by the optimizer.
    pub frozen: bool,
}

impl<T: Real> LayerParams<T> {
    fn zeroed(name: impl Into<String>, kind: LayerKind, weight_shape: Vec<usize>, n_bias: usize) -> Self {
        let n: usize = weight_shape.iter().product();
        Self {
            name: name.into(),
            kind,
            weight_shape,
            weights: vec![T::zero(); n],
            bias: vec![T::zero(); n_bias],
            weight_grad: vec![T::zero(); n],
            bias_grad: vec![T::zero(); n_bias],
            frozen: false,
        }
    }

    /// Zero-initialized conv layer, weights `[out_channels, in_channels, kernel]`.
    pub fn conv1d(name: impl Into<String>, out_channels: usize, in_channels: usize, kernel: usize) -> Self {
        Self::zeroed(name, LayerKind::Conv1d, vec![out_channels, in_channels, kernel], out_channels)
    }

    /// Zero-initialized dense layer, weights `[outputs, inputs]`.
    pub fn dense(name: impl Into<String>, outputs: usize, inputs: usize) -> Self {
        Self::zeroed(name, LayerKind::Dense, vec![outputs, inputs], outputs)
    }

    /// Batch-norm affine parameters with gamma = 1 and beta = 0.
    pub fn batchnorm(name: impl Into<String>, channels: usize) -> Self {
        let mut p = Self::zeroed(name, LayerKind::BatchNorm, vec![channels], channels);
        p.weights.fill(T::one());
        p
    }

    /// Uniform He-style initialization: weights in ±sqrt(6 / fan_in), zero bias.
    pub fn init_he_uniform<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let fan_in: usize = self.weight_shape[1..].iter().product();
        let limit = (6.0 / fan_in.max(1) as f64).sqrt();
        for w in &mut self.weights {
            *w = T::of(rng.random_range(-limit..limit));
        }
        self.bias.fill(T::zero());
    }

    pub fn n_params(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.weight_grad.fill(T::zero());
        self.bias_grad.fill(T::zero());
    }

    pub fn grads_finite(&self) -> bool {
        self.weight_grad
            .iter()
            .chain(&self.bias_grad)
            .all(|g| g.is_finite())
    }
}
