use super::record::{EpochSeries, State};
use super::{EPOCH_SECONDS, N_FEATURES};
use crate::error::{Error, Result};
use crate::nn::FeatureMap;

/// A features × epochs slice of a series, labeled by its final minute.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureWindow {
    /// Rows follow [`super::FEATURE_NAMES`], columns are consecutive epochs.
    pub features: FeatureMap<f32>,
    /// Index of the first epoch in the source series.
    pub start_epoch: usize,
    /// End of the window's last epoch (exclusive), in seconds.
    pub end_timestamp: i64,
    pub label: Option<State>,
    pub normalized: bool,
}

impl FeatureWindow {
    /// Start of the minute this window classifies.
    pub fn label_minute_start(&self) -> i64 {
        self.end_timestamp - 2 * EPOCH_SECONDS
    }
}

/// Cuts rolling windows of `window_epochs` epochs every `stride_epochs`.
///
/// Window `i` covers epochs `[stride*i, stride*i + window_epochs)`. Its label
/// is the state of the final two epochs when they agree, otherwise it is
/// left unlabeled.
pub fn make_windows(series: &EpochSeries, window_epochs: usize, stride_epochs: usize) -> Result<Vec<FeatureWindow>> {
    if window_epochs < 2 || stride_epochs == 0 {
        return Err(Error::Config(format!(
            "window of {window_epochs} epochs with stride {stride_epochs} is not usable"
        )));
    }
    let n = series.len();
    if n < window_epochs {
        log::warn!(
            "series `{}` has {n} epochs, fewer than one {window_epochs}-epoch window",
            series.subject
        );
        return Ok(Vec::new());
    }
    let count = (n - window_epochs) / stride_epochs + 1;
    let mut windows = Vec::with_capacity(count);
    for i in 0..count {
        let start = i * stride_epochs;
        let recs = &series.records[start..start + window_epochs];
        let mut values = vec![0.0f32; N_FEATURES * window_epochs];
        for (t, r) in recs.iter().enumerate() {
            for (f, v) in r.features().into_iter().enumerate() {
                values[f * window_epochs + t] = v;
            }
        }
        let last = &recs[window_epochs - 1];
        let label = match (recs[window_epochs - 2].label, last.label) {
            (Some(a), Some(b)) if a == b => Some(b),
            _ => None,
        };
        windows.push(FeatureWindow {
            features: FeatureMap::new(N_FEATURES, window_epochs, values)?,
            start_epoch: start,
            end_timestamp: last.timestamp + EPOCH_SECONDS,
            label,
            normalized: false,
        });
    }
    Ok(windows)
}
