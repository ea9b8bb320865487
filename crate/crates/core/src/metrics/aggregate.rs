use std::fmt;

use serde::{Deserialize, Serialize};

use super::confusion::{fmt_metric, MetricReport};
use crate::error::{Error, Result};

/// Mean and sample standard deviation of one metric across runs. Runs where
/// the metric is undefined are excluded and counted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricStat {
    pub name: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n_used: usize,
    pub n_excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_runs: usize,
    pub metrics: Vec<MetricStat>,
}

impl RunSummary {
    pub fn get(&self, name: &str) -> Option<&MetricStat> {
        self.metrics.iter().find(|m| m.name == name)
    }
}

pub fn aggregate_runs(reports: &[MetricReport]) -> Result<RunSummary> {
    if reports.is_empty() {
        return Err(Error::Data("no reports to aggregate".into()));
    }
    let names = reports[0].metrics().map(|(n, _)| n);
    let metrics = names
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let vals: Vec<f64> = reports.iter().filter_map(|r| r.metrics()[k].1).collect();
            let excluded = reports.len() - vals.len();
            if excluded > 0 {
                log::info!("{name}: {excluded} run(s) with an undefined value excluded from the mean");
            }
            let n = vals.len();
            let mean = (n > 0).then(|| vals.iter().sum::<f64>() / n as f64);
            let std = mean.map(|m| {
                if n < 2 {
                    0.0
                } else {
                    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
                }
            });
            MetricStat {
                name: name.to_string(),
                mean,
                std,
                n_used: n,
                n_excluded: excluded,
            }
        })
        .collect();
    Ok(RunSummary {
        n_runs: reports.len(),
        metrics,
    })
}

impl fmt::Display for RunSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mean over {} run(s):", self.n_runs)?;
        for m in &self.metrics {
            write!(f, "  {:<12} {} ± {}", m.name, fmt_metric(m.mean), fmt_metric(m.std))?;
            if m.n_excluded > 0 {
                write!(f, "  ({} undefined excluded)", m.n_excluded)?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}
