use super::params::LayerParams;
use super::tensor::{FeatureMap, Mode, Real};
use crate::error::{Error, Result};

/// Per-channel batch normalization over batch × time.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    /// gamma in `weights`, beta in `bias`.
    pub params: LayerParams<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: T,
    pub eps: T,
}

/// Values saved by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct BatchNormCache<T> {
    pub mode: Mode,
    x_hat: Vec<FeatureMap<T>>,
    inv_std: Vec<T>,
    batch_mean: Vec<f64>,
    batch_var_unbiased: Vec<f64>,
}

impl<T: Real> BatchNormState<T> {
    pub fn new(name: impl Into<String>, channels: usize, momentum: f64, eps: f64) -> Result<Self> {
        if !(momentum > 0.0 && momentum < 1.0) || eps <= 0.0 {
            return Err(Error::Config(format!(
                "batch norm needs momentum in (0,1) and eps > 0, got {momentum} and {eps}"
            )));
        }
        Ok(Self {
            params: LayerParams::batchnorm(name, channels),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
            momentum: T::of(momentum),
            eps: T::of(eps),
        })
    }

    pub fn channels(&self) -> usize {
        self.running_mean.len()
    }

    /// Normalizes without touching the running statistics. Train mode uses
    /// the batch statistics, infer mode the running ones.
    pub fn normalize(&self, inputs: &[FeatureMap<T>], mode: Mode) -> Result<(Vec<FeatureMap<T>>, BatchNormCache<T>)> {
        let ch = self.channels();
        let len = match inputs.first() {
            Some(x) => x.length(),
            None => return Err(Error::Shape("empty batch".into())),
        };
        if inputs.iter().any(|x| x.shape() != (ch, len)) {
            return Err(Error::Shape(format!(
                "`{}` expects {ch} channels with a common length",
                self.params.name
            )));
        }
        let count = inputs.len() * len;
        let mut batch_mean = vec![0.0; ch];
        let mut batch_var_unbiased = vec![0.0; ch];
        let (mean, inv_std): (Vec<T>, Vec<T>) = match mode {
            Mode::Train => {
                if count < 2 {
                    return Err(Error::Shape(format!(
                        "`{}` needs batch x length >= 2 in train mode",
                        self.params.name
                    )));
                }
                let mut means = Vec::with_capacity(ch);
                let mut inv = Vec::with_capacity(ch);
                for c in 0..ch {
                    let sum: f64 = inputs.iter().flat_map(|x| x.row(c)).map(|v| v.f64()).sum();
                    let mu = sum / count as f64;
                    let ss: f64 = inputs
                        .iter()
                        .flat_map(|x| x.row(c))
                        .map(|v| (v.f64() - mu).powi(2))
                        .sum();
                    let var = ss / count as f64;
                    batch_mean[c] = mu;
                    batch_var_unbiased[c] = ss / (count - 1) as f64;
                    means.push(T::of(mu));
                    inv.push(T::one() / (T::of(var) + self.eps).sqrt());
                }
                (means, inv)
            }
            Mode::Infer => (
                self.running_mean.clone(),
                self.running_var
                    .iter()
                    .map(|&v| T::one() / (v + self.eps).sqrt())
                    .collect(),
            ),
        };

        let mut outputs = Vec::with_capacity(inputs.len());
        let mut x_hat = Vec::with_capacity(inputs.len());
        for x in inputs {
            let mut xh = x.clone();
            let mut y = x.clone();
            for c in 0..ch {
                let (g, b) = (self.params.weights[c], self.params.bias[c]);
                for (h, o) in xh.row_mut(c).iter_mut().zip(y.row_mut(c)) {
                    *h = (*h - mean[c]) * inv_std[c];
                    *o = g * *h + b;
                }
            }
            x_hat.push(xh);
            outputs.push(y);
        }
        Ok((
            outputs,
            BatchNormCache {
                mode,
                x_hat,
                inv_std,
                batch_mean,
                batch_var_unbiased,
            },
        ))
    }

    /// Momentum update of the running statistics from a train-mode cache.
    pub fn update_running(&mut self, cache: &BatchNormCache<T>) {
        if cache.mode != Mode::Train {
            return;
        }
        let m = self.momentum;
        for c in 0..self.channels() {
            self.running_mean[c] = (T::one() - m) * self.running_mean[c] + m * T::of(cache.batch_mean[c]);
            self.running_var[c] = (T::one() - m) * self.running_var[c] + m * T::of(cache.batch_var_unbiased[c]);
        }
    }

    /// Normalizes and, in train mode, updates the running statistics.
    pub fn forward(&mut self, inputs: &[FeatureMap<T>], mode: Mode) -> Result<(Vec<FeatureMap<T>>, BatchNormCache<T>)> {
        let (out, cache) = self.normalize(inputs, mode)?;
        self.update_running(&cache);
        Ok((out, cache))
    }

    /// Returns input gradients and accumulates gamma / beta gradients.
    pub fn backward(&mut self, cache: &BatchNormCache<T>, upstream: &[FeatureMap<T>]) -> Result<Vec<FeatureMap<T>>> {
        if upstream.len() != cache.x_hat.len()
            || upstream.iter().zip(&cache.x_hat).any(|(g, x)| g.shape() != x.shape())
        {
            return Err(Error::Shape("batch norm upstream gradient does not match forward".into()));
        }
        let ch = self.channels();
        let len = cache.x_hat[0].length();
        let count = T::of((upstream.len() * len) as f64);
        let mut grads: Vec<FeatureMap<T>> = upstream.to_vec();
        for c in 0..ch {
            let gamma = self.params.weights[c];
            let mut sum_dy = T::zero();
            let mut sum_dy_xhat = T::zero();
            for (g, xh) in upstream.iter().zip(&cache.x_hat) {
                for (dy, h) in g.row(c).iter().zip(xh.row(c)) {
                    sum_dy += *dy;
                    sum_dy_xhat += *dy * *h;
                }
            }
            self.params.bias_grad[c] += sum_dy;
            self.params.weight_grad[c] += sum_dy_xhat;
            let inv = cache.inv_std[c];
            for (out, xh) in grads.iter_mut().zip(&cache.x_hat) {
                for (dx, h) in out.row_mut(c).iter_mut().zip(xh.row(c)) {
                    *dx = match cache.mode {
                        Mode::Train => gamma * inv / count * (count * *dx - sum_dy - *h * sum_dy_xhat),
                        Mode::Infer => gamma * inv * *dx,
                    };
                }
            }
        }
        Ok(grads)
    }
}
