use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::net::SleepNet;
use crate::data::{
    apply_normalizer, fit_normalizer, make_windows, EpochSeries, FeatureWindow, NormStats, State, EPOCH_SECONDS,
    WINDOW_STRIDE,
};
use crate::events::Hypnogram;
use crate::error::{Error, Result};
use crate::nn::{adam_step, AdamState, FeatureMap, Mode};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub n_epochs: usize,
    pub aux_loss_weight: f64,
    /// Stop after this many epochs without a better validation loss; 0 disables.
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainingHyper {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch_size: 32,
            n_epochs: 30,
            aux_loss_weight: 0.25,
            early_stop_patience: 5,
            seed: 0,
        }
    }
}

impl TrainingHyper {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.aux_loss_weight >= 0.0) {
            return Err(Error::Config("auxiliary loss weight must be non-negative".into()));
        }
        if !(self.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub wall_time_secs: f64,
    pub digest: String,
}

struct Prepared {
    inputs: Vec<FeatureMap<f32>>,
    labels: Vec<f32>,
}

fn prepare(windows: &[FeatureWindow], norm: &NormStats, what: &str) -> Result<Prepared> {
    let mut inputs = Vec::with_capacity(windows.len());
    let mut labels = Vec::with_capacity(windows.len());
    for (i, w) in windows.iter().enumerate() {
        let label = w
            .label
            .ok_or_else(|| Error::Training(format!("{what} window {i} has no label")))?;
        let w = if w.normalized { w.clone() } else { apply_normalizer(w, norm)? };
        inputs.push(w.features);
        labels.push(label.as_u8() as f32);
    }
    Ok(Prepared { inputs, labels })
}

/// Mean loss and accuracy (fraction) in infer mode.
fn score(model: &SleepNet<f32>, data: &Prepared, aux: f64) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        let p = model.forward_map(x)?;
        loss += crate::nn::bce_loss(p.p_final as f64, y as f64).0;
        for &ph in &p.p_heads {
            loss += aux * crate::nn::bce_loss(ph as f64, y as f64).0;
        }
        if (p.p_final >= 0.5) == (y >= 0.5) {
            correct += 1;
        }
    }
    let n = data.inputs.len().max(1) as f64;
    Ok((loss / n, correct as f64 / n))
}

/// Mini-batch Adam on `BCE(p_final) + aux · Σ BCE(p_head)`. Returns the
/// parameters with the lowest validation loss (training loss when `val` is
/// empty).
///
/// Fits normalization statistics on `train_set` when the model has none.
pub fn train(
    mut model: SleepNet<f32>,
    train_set: &[FeatureWindow],
    val_set: &[FeatureWindow],
    hyper: &TrainingHyper,
) -> Result<(SleepNet<f32>, TrainReport)> {
    hyper.validate()?;
    if train_set.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    let n_sleep = train_set.iter().filter(|w| w.label == Some(State::Sleep)).count();
    let n_awake = train_set.iter().filter(|w| w.label == Some(State::Awake)).count();
    if n_sleep == 0 || n_awake == 0 {
        return Err(Error::Training(format!(
            "training set needs both classes (sleep {n_sleep}, awake {n_awake})"
        )));
    }
    if model.norm.is_none() {
        if train_set.iter().any(|w| w.normalized) {
            return Err(Error::Training("model has no normalization statistics for pre-normalized windows".into()));
        }
        model.norm = Some(fit_normalizer(train_set)?);
    }
    let norm = model.norm.clone().expect("set above");
    let train_data = prepare(train_set, &norm, "training")?;
    let val_data = prepare(val_set, &norm, "validation")?;

    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    let mut adam = AdamState::new(hyper.lr);
    let mut order: Vec<usize> = (0..train_data.inputs.len()).collect();
    let mut best: Option<(f64, usize, SleepNet<f32>)> = None;
    let mut epochs = Vec::with_capacity(hyper.n_epochs);
    let mut since_best = 0usize;

    for epoch in 0..hyper.n_epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(hyper.batch_size) {
            let inputs: Vec<FeatureMap<f32>> = batch.iter().map(|&i| train_data.inputs[i].clone()).collect();
            let labels: Vec<f32> = batch.iter().map(|&i| train_data.labels[i]).collect();
            let cache = model.forward_batch(&inputs, Mode::Train, &mut rng)?;
            model.backward(&cache, &labels, hyper.aux_loss_weight)?;
            let mut params = model.params_mut();
            adam_step(&mut params, &mut adam)?;
            model.apply_running_stats(&cache);
        }
        let (train_loss, train_accuracy) = score(&model, &train_data, hyper.aux_loss_weight)?;
        let val = if val_data.inputs.is_empty() {
            None
        } else {
            Some(score(&model, &val_data, hyper.aux_loss_weight)?)
        };
        let monitored = val.map_or(train_loss, |v| v.0);
        if !monitored.is_finite() {
            return Err(Error::Training(format!("loss became non-finite in epoch {epoch}")));
        }
        log::info!(
            "epoch {epoch}: train loss {train_loss:.4} acc {:.2}%{}",
            train_accuracy * 100.0,
            val.map_or(String::new(), |(l, a)| format!(", val loss {l:.4} acc {:.2}%", a * 100.0))
        );
        epochs.push(EpochStats {
            epoch,
            train_loss,
            train_accuracy,
            val_loss: val.map(|v| v.0),
            val_accuracy: val.map(|v| v.1),
        });
        if best.as_ref().is_none_or(|b| monitored < b.0) {
            best = Some((monitored, epoch, model.clone()));
            since_best = 0;
        } else {
            since_best += 1;
            if hyper.early_stop_patience > 0 && since_best >= hyper.early_stop_patience {
                log::info!("early stop after epoch {epoch}");
                break;
            }
        }
    }
    let (best_epoch, model) = match best {
        Some((_, e, m)) => (e, m),
        None => (0, model),
    };
    let report = TrainReport {
        epochs,
        best_epoch,
        wall_time_secs: started.elapsed().as_secs_f64(),
        digest: model.digest(),
    };
    Ok((model, report))
}

/// Retrains the fusion trunk on a new cohort with every head frozen. With
/// `n_epochs == 0` the model comes back unchanged.
pub fn finetune_transfer(
    model: SleepNet<f32>,
    cohort_set: &[FeatureWindow],
    hyper: &TrainingHyper,
) -> Result<(SleepNet<f32>, TrainReport)> {
    if cohort_set.is_empty() {
        return Err(Error::Training("transfer cohort is empty".into()));
    }
    if model.norm.is_none() {
        return Err(Error::Training("transfer needs a trained model with normalization statistics".into()));
    }
    if hyper.n_epochs == 0 {
        let digest = model.digest();
        return Ok((
            model,
            TrainReport {
                epochs: vec![],
                best_epoch: 0,
                wall_time_secs: 0.0,
                digest,
            },
        ));
    }
    let saved: Vec<bool> = model.params().iter().map(|p| p.frozen).collect();
    let mut model = model;
    model.set_transfer_freeze();
    let (mut model, report) = train(model, cohort_set, &[], hyper)?;
    for (p, f) in model.params_mut().into_iter().zip(saved) {
        p.frozen = f;
    }
    Ok((model, report))
}

/// Per-window predicted states (threshold 0.5) for labeled or unlabeled
/// windows, normalizing raw ones with the model's statistics.
pub fn evaluate(model: &SleepNet<f32>, windows: &[FeatureWindow]) -> Result<Vec<(f32, State)>> {
    windows
        .iter()
        .map(|w| {
            let p = model.predict_raw(w)?.p_final;
            Ok((p, State::from_bool(p >= 0.5)))
        })
        .collect()
}

/// Per-minute sleep probabilities for a whole series: one window every
/// minute, each scored by its final minute.
pub fn predict_hypnogram(model: &SleepNet<f32>, series: &EpochSeries) -> Result<Hypnogram> {
    let w = model.config.window_epochs;
    let windows = make_windows(series, w, WINDOW_STRIDE)?;
    let start = match windows.first() {
        Some(first) => first.label_minute_start(),
        None => series.start_timestamp().unwrap_or(0) + (w as i64 - 2) * EPOCH_SECONDS,
    };
    let probs = windows
        .iter()
        .map(|win| Ok(model.predict_raw(win)?.p_final))
        .collect::<Result<Vec<f32>>>()?;
    Hypnogram::new(start, probs)
}
