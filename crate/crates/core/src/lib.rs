//! Sleep/wake classification and sleep-event detection from per-epoch
//! ballistocardiography features.
//!
//! The [`nn`] engine is a small CPU-only 1-D CNN toolkit; [`model`] builds the
//! multi-head network on top of it. [`data`] handles epoch records, windows
//! and synthetic nights, [`events`] turns per-minute probabilities into sleep
//! onset and wake time, [`metrics`] scores predictions, and [`stream`] runs the
//! whole pipeline incrementally.

pub mod data;
pub mod error;
pub mod events;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod stream;

pub use data::{EpochRecord, EpochSeries, FeatureWindow, NormStats, State};
pub use error::{Error, Result};
pub use events::{EventKind, EventRuleConfig, Hypnogram, SleepEvents};
pub use model::{ModelConfig, SleepNet, TrainingHyper};
pub use stream::{Emission, StreamState};
