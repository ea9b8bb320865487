use serde::{Deserialize, Serialize};

use super::window::FeatureWindow;
use crate::error::{Error, Result};

/// Per-feature z-score statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl NormStats {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    #[inline]
    pub fn apply_value(&self, feature: usize, x: f32) -> f32 {
        (x - self.mean[feature]) / self.std[feature]
    }
}

/// Fits mean and population standard deviation of each feature row over
/// every column of every window.
pub fn fit_normalizer(windows: &[FeatureWindow]) -> Result<NormStats> {
    let first = windows
        .first()
        .ok_or_else(|| Error::Data("cannot fit a normalizer on zero windows".into()))?;
    let nf = first.features.channels();
    if windows.iter().any(|w| w.features.channels() != nf) {
        return Err(Error::Shape("windows disagree on feature count".into()));
    }
    let mut mean = Vec::with_capacity(nf);
    let mut std = Vec::with_capacity(nf);
    for f in 0..nf {
        let n: usize = windows.iter().map(|w| w.features.length()).sum();
        let sum: f64 = windows.iter().flat_map(|w| w.features.row(f)).map(|&v| v as f64).sum();
        let mu = sum / n as f64;
        let ss: f64 = windows
            .iter()
            .flat_map(|w| w.features.row(f))
            .map(|&v| (v as f64 - mu).powi(2))
            .sum();
        let sd = (ss / n as f64).sqrt();
        mean.push(mu as f32);
        if sd > 0.0 && (sd as f32) > 0.0 {
            std.push(sd as f32);
        } else {
            log::warn!("feature {f} has zero variance; using std = 1");
            std.push(1.0);
        }
    }
    Ok(NormStats { mean, std })
}

/// Z-scores each feature row with fitted statistics.
pub fn apply_normalizer(window: &FeatureWindow, stats: &NormStats) -> Result<FeatureWindow> {
    if window.normalized {
        return Err(Error::Data("window is already normalized".into()));
    }
    if window.features.channels() != stats.n_features() {
        return Err(Error::Shape(format!(
            "window has {} features, normalizer {}",
            window.features.channels(),
            stats.n_features()
        )));
    }
    let mut out = window.clone();
    for f in 0..stats.n_features() {
        for v in out.features.row_mut(f) {
            *v = stats.apply_value(f, *v);
        }
    }
    out.normalized = true;
    Ok(out)
}
