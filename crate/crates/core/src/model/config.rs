use serde::{Deserialize, Serialize};

use crate::data::{N_FEATURES, WINDOW_EPOCHS};
use crate::error::{Error, Result};

/// One convolutional head. Widths are in epochs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub kernel_width: usize,
    pub n_filters: usize,
    pub pool_width: usize,
    pub dropout_rate: f64,
    /// Width of the intermediate fully connected layer.
    pub fc_width: usize,
}

impl HeadConfig {
    pub fn with_kernel(kernel_width: usize) -> Self {
        Self {
            kernel_width,
            n_filters: 16,
            pool_width: 2,
            dropout_rate: 0.3,
            fc_width: 16,
        }
    }

    pub fn conv_len(&self, window_epochs: usize) -> usize {
        window_epochs + 1 - self.kernel_width
    }

    pub fn pooled_len(&self, window_epochs: usize) -> usize {
        self.conv_len(window_epochs) / self.pool_width
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_features: usize,
    pub window_epochs: usize,
    pub heads: Vec<HeadConfig>,
    /// Hidden widths of the fusion network; the last entry is the single output.
    pub trunk_widths: Vec<usize>,
    pub aux_loss_weight: f64,
    pub seed: u64,
    pub bn_momentum: f64,
    pub bn_eps: f64,
    /// Also train the intermediate FC and prediction layers during transfer.
    pub transfer_trains_intermediate: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            input_features: N_FEATURES,
            window_epochs: WINDOW_EPOCHS,
            heads: [3, 5, 7, 11].into_iter().map(HeadConfig::with_kernel).collect(),
            trunk_widths: vec![8, 1],
            aux_loss_weight: 0.25,
            seed: 0,
            bn_momentum: 0.1,
            bn_eps: 1e-6,
            transfer_trains_intermediate: false,
        }
    }
}

impl ModelConfig {
    /// One head of the given kernel width.
    pub fn single_head(kernel_width: usize, n_filters: usize, fc_width: usize) -> Self {
        Self {
            heads: vec![HeadConfig {
                n_filters,
                fc_width,
                ..HeadConfig::with_kernel(kernel_width)
            }],
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.input_features == 0 || self.window_epochs == 0 {
            return bad("input features and window length must be positive".into());
        }
        if self.heads.is_empty() {
            return bad("at least one head is required".into());
        }
        for (i, h) in self.heads.iter().enumerate() {
            if h.kernel_width > self.window_epochs {
                return bad(format!(
                    "head {i}: kernel width {} exceeds the {}-epoch window",
                    h.kernel_width, self.window_epochs
                ));
            }
            if h.kernel_width % 2 == 0 {
                return bad(format!("head {i}: kernel width {} must be odd", h.kernel_width));
            }
            if h.n_filters == 0 || h.fc_width == 0 {
                return bad(format!("head {i}: filter count and fc width must be positive"));
            }
            if h.pool_width == 0 || h.pool_width > h.conv_len(self.window_epochs) {
                return bad(format!("head {i}: pool width {} does not fit the conv output", h.pool_width));
            }
            if !(0.0..1.0).contains(&h.dropout_rate) {
                return bad(format!("head {i}: dropout rate {} must lie in [0, 1)", h.dropout_rate));
            }
        }
        if self.trunk_widths.last() != Some(&1) || self.trunk_widths.contains(&0) {
            return bad(format!("trunk widths {:?} must be positive and end in 1", self.trunk_widths));
        }
        if !(self.aux_loss_weight >= 0.0) {
            return bad("auxiliary loss weight must be non-negative".into());
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0 && self.bn_eps > 0.0) {
            return bad("batch norm momentum must lie in (0, 1) and eps be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults() {
        let c = ModelConfig::default();
        c.validate().unwrap();
        let k: Vec<usize> = c.heads.iter().map(|h| h.kernel_width).collect();
        assert_eq!(k, vec![3, 5, 7, 11]);
        let l: Vec<usize> = c.heads.iter().map(|h| h.conv_len(30)).collect();
        assert_eq!(l, vec![28, 26, 24, 20]);
    }

    #[test]
    fn rejects_bad_configs() {
        let mut c = ModelConfig::default();
        c.heads[3].kernel_width = 31;
        assert!(matches!(c.validate(), Err(Error::Config(m)) if m.contains("exceeds")));
        let mut c = ModelConfig::default();
        c.heads[0].kernel_width = 4;
        assert!(c.validate().is_err());
        let c = ModelConfig { trunk_widths: vec![8, 2], ..Default::default() };
        assert!(c.validate().is_err());
        let c = ModelConfig { heads: vec![], ..Default::default() };
        assert!(c.validate().is_err());
    }
}
