use rand::Rng;

use super::params::{LayerKind, LayerParams};
use super::tensor::{Mode, Real};
use crate::error::{Error, Result};

fn check_dense<T: Real>(params: &LayerParams<T>, inputs: usize) -> Result<usize> {
    if params.kind != LayerKind::Dense || params.weight_shape.len() != 2 {
        return Err(Error::Shape(format!("`{}` is not a dense layer", params.name)));
    }
    if params.weight_shape[1] != inputs {
        return Err(Error::Shape(format!(
            "`{}` expects {} inputs, got {inputs}",
            params.name, params.weight_shape[1]
        )));
    }
    Ok(params.weight_shape[0])
}

/// `W x + b`.
pub fn dense_forward<T: Real>(input: &[T], params: &LayerParams<T>) -> Result<Vec<T>> {
    let n_out = check_dense(params, input.len())?;
    let n_in = input.len();
    Ok((0..n_out)
        .map(|o| {
            let w = &params.weights[o * n_in..(o + 1) * n_in];
            params.bias[o] + w.iter().zip(input).map(|(a, b)| *a * *b).sum::<T>()
        })
        .collect())
}

/// Returns the input gradient and accumulates weight / bias gradients.
pub fn dense_backward<T: Real>(input: &[T], params: &mut LayerParams<T>, upstream: &[T]) -> Result<Vec<T>> {
    let n_out = check_dense(params, input.len())?;
    if upstream.len() != n_out {
        return Err(Error::Shape(format!(
            "`{}` upstream gradient has {} entries, expected {n_out}",
            params.name,
            upstream.len()
        )));
    }
    let n_in = input.len();
    let mut grad_in = vec![T::zero(); n_in];
    for (o, &g) in upstream.iter().enumerate() {
        params.bias_grad[o] += g;
        let row = o * n_in..(o + 1) * n_in;
        for ((wg, w), (x, gi)) in params.weight_grad[row.clone()]
            .iter_mut()
            .zip(&params.weights[row])
            .zip(input.iter().zip(grad_in.iter_mut()))
        {
            *wg += g * *x;
            *gi += g * *w;
        }
    }
    Ok(grad_in)
}

#[inline]
pub fn relu<T: Real>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Gradient through a ReLU given its pre-activation.
#[inline]
pub fn relu_backward<T: Real>(pre: T, grad: T) -> T {
    if pre > T::zero() {
        grad
    } else {
        T::zero()
    }
}

/// Logistic function, evaluated without overflow for large |x|.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Per-unit multipliers applied by a dropout pass (0 or 1/(1-rate)).
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask<T> {
    pub scale: Vec<T>,
}

impl<T: Real> DropoutMask<T> {
    pub fn backward(&self, upstream: &[T]) -> Vec<T> {
        upstream.iter().zip(&self.scale).map(|(g, s)| *g * *s).collect()
    }
}

/// Inverted dropout: in train mode each unit is zeroed with probability
/// `rate` and survivors are scaled by `1 / (1 - rate)`. Infer mode is the
/// identity.
pub fn dropout<T: Real, R: Rng + ?Sized>(
    input: &[T],
    rate: f64,
    rng: &mut R,
    mode: Mode,
) -> Result<(Vec<T>, DropoutMask<T>)> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!("dropout rate must lie in [0, 1), got {rate}")));
    }
    let scale: Vec<T> = match mode {
        Mode::Infer => vec![T::one(); input.len()],
        Mode::Train if rate == 0.0 => vec![T::one(); input.len()],
        Mode::Train => {
            let keep = T::of(1.0 / (1.0 - rate));
            input
                .iter()
                .map(|_| if rng.random::<f64>() < rate { T::zero() } else { keep })
                .collect()
        }
    };
    let out = input.iter().zip(&scale).map(|(x, s)| *x * *s).collect();
    Ok((out, DropoutMask { scale }))
}
