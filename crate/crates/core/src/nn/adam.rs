use super::params::LayerParams;
use super::tensor::Real;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
struct Moments<T> {
    m_w: Vec<T>,
    v_w: Vec<T>,
    m_b: Vec<T>,
    v_b: Vec<T>,
}

/// Adam optimizer state. Moments are kept per layer in the order the layers
/// are passed to [`adam_step`]; that order must stay fixed across steps.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    moments: Vec<Moments<T>>,
}

impl<T: Real> AdamState<T> {
    pub fn new(lr: f64) -> Self {
        Self::with_betas(lr, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            moments: Vec::new(),
        }
    }

    /// First and second moment buffers of layer `i` (weights then bias).
    pub fn moments(&self, i: usize) -> Option<(&[T], &[T], &[T], &[T])> {
        self.moments
            .get(i)
            .map(|m| (&m.m_w[..], &m.v_w[..], &m.m_b[..], &m.v_b[..]))
    }
}

fn update<T: Real>(w: &mut [T], g: &[T], m: &mut [T], v: &mut [T], lr_t: T, b1: T, b2: T, eps: T) {
    let one = T::one();
    for i in 0..w.len() {
        m[i] = b1 * m[i] + (one - b1) * g[i];
        v[i] = b2 * v[i] + (one - b2) * g[i] * g[i];
        w[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
    }
}

/// One Adam update with bias correction over every non-frozen layer, then
/// zeroes all gradients. Frozen layers keep their values and moments.
///
/// Fails before touching anything if a trainable layer holds a non-finite
/// gradient.
pub fn adam_step<T: Real>(layers: &mut [&mut LayerParams<T>], state: &mut AdamState<T>) -> Result<()> {
    if state.moments.is_empty() {
        state.moments = layers
            .iter()
            .map(|l| Moments {
                m_w: vec![T::zero(); l.weights.len()],
                v_w: vec![T::zero(); l.weights.len()],
                m_b: vec![T::zero(); l.bias.len()],
                v_b: vec![T::zero(); l.bias.len()],
            })
            .collect();
    }
    if state.moments.len() != layers.len()
        || layers
            .iter()
            .zip(&state.moments)
            .any(|(l, m)| l.weights.len() != m.m_w.len() || l.bias.len() != m.m_b.len())
    {
        return Err(Error::Shape("optimizer state does not match the layer list".into()));
    }
    if let Some(bad) = layers.iter().find(|l| !l.frozen && !l.grads_finite()) {
        return Err(Error::NonFiniteGradient {
            layer: bad.name.clone(),
        });
    }

    state.step += 1;
    let t = state.step as i32;
    // bias-corrected step size: lr * sqrt(1 - b2^t) / (1 - b1^t), with eps
    // scaled to match the usual m_hat / (sqrt(v_hat) + eps) form.
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let lr_t = T::of(state.lr * bc2.sqrt() / bc1);
    let eps_t = T::of(state.eps * bc2.sqrt());
    let (b1, b2) = (T::of(state.beta1), T::of(state.beta2));

    for (layer, mom) in layers.iter_mut().zip(state.moments.iter_mut()) {
        if !layer.frozen {
            update(&mut layer.weights, &layer.weight_grad, &mut mom.m_w, &mut mom.v_w, lr_t, b1, b2, eps_t);
            update(&mut layer.bias, &layer.bias_grad, &mut mom.m_b, &mut mom.v_b, lr_t, b1, b2, eps_t);
        }
        layer.zero_grad();
    }
    Ok(())
}
