use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floating-point scalar the engine is generic over (`f32` or `f64`).
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 converts to every Real")
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Whether a forward pass is part of training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    Train,
    Infer,
}

/// A channels × length matrix stored row-major (one row per channel).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap<T> {
    channels: usize,
    length: usize,
    values: Vec<T>,
}

impl<T: Real> FeatureMap<T> {
    /// Builds a map, checking the shape and that every value is finite.
    pub fn new(channels: usize, length: usize, values: Vec<T>) -> Result<Self> {
        if channels == 0 || length == 0 {
            return Err(Error::Shape(format!(
                "feature map needs at least one channel and one position, got {channels}x{length}"
            )));
        }
        if values.len() != channels * length {
            return Err(Error::Shape(format!(
                "{} values cannot fill a {channels}x{length} feature map",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature map".into()));
        }
        Ok(Self {
            channels,
            length,
            values,
        })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let length = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != length) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Self::new(rows.len(), length, rows.concat())
    }

    pub fn zeros(channels: usize, length: usize) -> Self {
        Self {
            channels,
            length,
            values: vec![T::zero(); channels * length],
        }
    }

    /// Unchecked constructor for layer outputs.
    pub(crate) fn from_raw(channels: usize, length: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), channels * length);
        Self {
            channels,
            length,
            values,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn length(&self) -> usize {
        self.length
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.channels, self.length)
    }

    #[inline]
    pub fn get(&self, channel: usize, pos: usize) -> T {
        self.values[channel * self.length + pos]
    }

    #[inline]
    pub fn set(&mut self, channel: usize, pos: usize, value: T) {
        self.values[channel * self.length + pos] = value;
    }

    pub fn row(&self, channel: usize) -> &[T] {
        &self.values[channel * self.length..(channel + 1) * self.length]
    }

    pub fn row_mut(&mut self, channel: usize) -> &mut [T] {
        &mut self.values[channel * self.length..(channel + 1) * self.length]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_vec(self) -> Vec<T> {
        self.values
    }

    pub fn cast<U: Real>(&self) -> FeatureMap<U> {
        FeatureMap {
            channels: self.channels,
            length: self.length,
            values: self.values.iter().map(|v| U::of(v.f64())).collect(),
        }
    }
}
