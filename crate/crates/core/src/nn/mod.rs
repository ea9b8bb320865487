//! Minimal dense / 1D-convolutional network engine.
//!
//! Every layer has a hand-written backward pass. Layers are generic over
//! [`Real`] so the same code runs in `f32` for training and inference and in
//! `f64` for finite-difference gradient checks.

mod adam;
mod batchnorm;
mod conv;
mod dense;
mod loss;
mod params;
mod pool;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use batchnorm::{BatchNormCache, BatchNormState};
pub use conv::{conv1d_backward, conv1d_valid, Conv1dGrads};
pub use dense::{
    dense_backward, dense_forward, dropout, relu, relu_backward, sigmoid, DropoutMask,
};
pub use loss::{bce_loss, BCE_EPS};
pub use params::{LayerKind, LayerParams};
pub use pool::{maxpool1d, maxpool1d_backward, PoolIndices};
pub use tensor::{FeatureMap, Mode, Real};
