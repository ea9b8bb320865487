//! The multi-head sleep/wake network: construction, training, transfer
//! fine-tuning and the model file format.

mod config;
mod io;
mod net;
mod train;

pub use config::{HeadConfig, ModelConfig};
pub use io::{load_model, model_from_bytes, model_to_bytes, save_model, FORMAT_VERSION, MAGIC};
pub use net::{build_model, ForwardCache, Head, Prediction, SleepNet};
pub use train::{evaluate, finetune_transfer, predict_hypnogram, train, EpochStats, TrainReport, TrainingHyper};
