use std::fmt;

use serde::{Deserialize, Serialize};

use crate::data::State;
use crate::error::{Error, Result};
use crate::events::BinaryHypnogram;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionCounts {
    /// Positives (truth sleep).
    pub fn p(&self) -> u64 {
        self.tp + self.fn_
    }

    /// Negatives (truth awake).
    pub fn n(&self) -> u64 {
        self.tn + self.fp
    }

    pub fn total(&self) -> u64 {
        self.p() + self.n()
    }

    pub fn add(&mut self, pred: State, truth: State) {
        match (pred, truth) {
            (State::Sleep, State::Sleep) => self.tp += 1,
            (State::Awake, State::Awake) => self.tn += 1,
            (State::Sleep, State::Awake) => self.fp += 1,
            (State::Awake, State::Sleep) => self.fn_ += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (State, State)>) -> Self {
        let mut c = Self::default();
        for (p, t) in pairs {
            c.add(p, t);
        }
        c
    }

    pub fn merge(&mut self, other: &Self) {
        self.tp += other.tp;
        self.tn += other.tn;
        self.fp += other.fp;
        self.fn_ += other.fn_;
    }
}

/// Elementwise tally of two aligned state sequences.
pub fn confusion(pred: &BinaryHypnogram, truth: &BinaryHypnogram) -> Result<ConfusionCounts> {
    if pred.len() != truth.len() || pred.start != truth.start {
        return Err(Error::Data(format!(
            "prediction ({} minutes from {}) and truth ({} minutes from {}) are not aligned",
            pred.len(),
            pred.start,
            truth.len(),
            truth.start
        )));
    }
    Ok(ConfusionCounts::from_pairs(pred.states.iter().copied().zip(truth.states.iter().copied())))
}

fn pct(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64 * 100.0)
}

/// (TP + TN) / (P + N) · 100; `None` when there are no samples.
pub fn accuracy(c: &ConfusionCounts) -> Option<f64> {
    pct(c.tp + c.tn, c.total())
}

/// TP / (TP + FP) · 100.
pub fn precision(c: &ConfusionCounts) -> Option<f64> {
    pct(c.tp, c.tp + c.fp)
}

/// TN / (FP + TN) · 100.
pub fn specificity(c: &ConfusionCounts) -> Option<f64> {
    pct(c.tn, c.fp + c.tn)
}

/// TP / (TP + FN) · 100.
pub fn sensitivity(c: &ConfusionCounts) -> Option<f64> {
    pct(c.tp, c.tp + c.fn_)
}

/// The four percentages of one run; `None` marks an undefined metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_id: String,
    pub counts: ConfusionCounts,
    pub accuracy: Option<f64>,
    pub precision: Option<f64>,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
}

impl MetricReport {
    pub fn new(run_id: impl Into<String>, counts: ConfusionCounts) -> Self {
        Self {
            run_id: run_id.into(),
            accuracy: accuracy(&counts),
            precision: precision(&counts),
            specificity: specificity(&counts),
            sensitivity: sensitivity(&counts),
            counts,
        }
    }

    pub fn metrics(&self) -> [(&'static str, Option<f64>); 4] {
        [
            ("accuracy", self.accuracy),
            ("precision", self.precision),
            ("specificity", self.specificity),
            ("sensitivity", self.sensitivity),
        ]
    }

    pub const CSV_HEADER: &'static str = "run_id,tp,tn,fp,fn,accuracy,precision,specificity,sensitivity";

    pub fn csv_row(&self) -> String {
        let c = &self.counts;
        let mut row = format!("{},{},{},{},{}", self.run_id, c.tp, c.tn, c.fp, c.fn_);
        for (_, m) in self.metrics() {
            row.push(',');
            row.push_str(&fmt_metric(m));
        }
        row
    }
}

pub(crate) fn fmt_metric(m: Option<f64>) -> String {
    m.map_or_else(|| "undefined".to_string(), |v| format!("{v:.2}"))
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = &self.counts;
        writeln!(f, "[{}] TP={} TN={} FP={} FN={}", self.run_id, c.tp, c.tn, c.fp, c.fn_)?;
        for (name, m) in self.metrics() {
            writeln!(f, "  {name:<12} {}", fmt_metric(m))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bin(v: &[u8]) -> BinaryHypnogram {
        BinaryHypnogram::from_bools(0, &v.iter().map(|&x| x == 1).collect::<Vec<_>>())
    }

    #[test]
    fn hand_tally() {
        let c = confusion(&bin(&[1, 1, 0, 0, 1]), &bin(&[1, 0, 0, 1, 1])).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 2, tn: 1, fp: 1, fn_: 1 });
        let r = MetricReport::new("x", c);
        assert!((r.accuracy.unwrap() - 60.0).abs() < 1e-9);
        assert!((r.precision.unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert!((r.specificity.unwrap() - 50.0).abs() < 1e-9);
        assert!((r.sensitivity.unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert_eq!(r.csv_row(), "x,2,1,1,1,60.00,66.67,50.00,66.67");
    }

    #[test]
    fn perfect_and_complement() {
        let truth: Vec<u8> = (0..100).map(|i| (i < 50) as u8).collect();
        let c = confusion(&bin(&truth), &bin(&truth)).unwrap();
        assert_eq!(c, ConfusionCounts { tp: 50, tn: 50, fp: 0, fn_: 0 });
        assert!(MetricReport::new("p", c).metrics().iter().all(|(_, m)| *m == Some(100.0)));
        let comp: Vec<u8> = truth.iter().map(|x| 1 - x).collect();
        let c = confusion(&bin(&comp), &bin(&truth)).unwrap();
        assert_eq!((c.tp, c.tn), (0, 0));
    }

    #[test]
    fn undefined_precision() {
        let c = ConfusionCounts { tp: 0, tn: 5, fp: 0, fn_: 3 };
        assert_eq!(precision(&c), None);
        assert!(MetricReport::new("u", c).to_string().contains("undefined"));
    }

    #[test]
    fn misaligned_rejected() {
        assert!(confusion(&bin(&[1, 0]), &bin(&[1])).is_err());
    }

    proptest! {
        #[test]
        fn metrics_in_range_and_order_free(v in proptest::collection::vec((0u8..2, 0u8..2), 1..100)) {
            let pairs: Vec<(State, State)> = v.iter().map(|&(a, b)| (State::from_bool(a == 1), State::from_bool(b == 1))).collect();
            let c = ConfusionCounts::from_pairs(pairs.iter().copied());
            let r = MetricReport::new("r", c);
            for (_, m) in r.metrics() {
                if let Some(x) = m { prop_assert!((0.0..=100.0).contains(&x)); }
            }
            let rev = ConfusionCounts::from_pairs(pairs.iter().rev().copied());
            prop_assert_eq!(rev, c);
        }
    }
}
