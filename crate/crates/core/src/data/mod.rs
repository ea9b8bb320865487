//! Epoch records, windowing, normalization and synthetic night generation.

mod norm;
mod record;
mod synth;
mod trainset;
mod window;

pub use norm::{apply_normalizer, fit_normalizer, NormStats};
pub use record::{
    compute_hr_diff, ingest_epochs, ingest_path, write_epochs_csv, EpochRecord, EpochSeries, IngestOptions,
    SourceTag, State,
};
pub use synth::{
    read_truth_sidecar, synth_generate, write_truth_sidecar, Emission, Gaussian, SynthConfig, Synthetic, Transition,
};
pub use trainset::{build_training_set, label_transitions};
pub use window::{make_windows, FeatureWindow};

/// Seconds per scoring epoch.
pub const EPOCH_SECONDS: i64 = 30;
/// Feature rows of a window, in order.
pub const FEATURE_NAMES: [&str; 5] = ["hr", "br", "hr_conf", "movement", "hr_diff"];
pub const N_FEATURES: usize = 5;
/// 15 minutes.
pub const WINDOW_EPOCHS: usize = 30;
/// 1 minute.
pub const WINDOW_STRIDE: usize = 2;
