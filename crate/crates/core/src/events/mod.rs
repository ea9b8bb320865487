//! From per-minute sleep probabilities to sleep-onset and wake-up times.
//!
//! The pipeline is moving-median smoothing, thresholding, short-run
//! suppression, then the onset and wake rules. Rule durations are in minutes
//! and are always parameters so the engine can be checked exhaustively at
//! small scale.

mod detect;
mod runs;
mod smooth;

use std::io::Write;

use serde::{Deserialize, Serialize};

pub use detect::{detect_sleep_time, detect_wake_time, scan_sleep_onset, OnsetScan};
pub use runs::{run_lengths, suppress_short_runs};
pub use smooth::{binarize, smooth_probs};

use crate::data::State;
use crate::error::{Error, Result};

/// Seconds per hypnogram step.
pub const MINUTE: i64 = 60;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    SleepOnset,
    WakeTime,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::SleepOnset => "sleep_onset",
            EventKind::WakeTime => "wake_time",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "sleep_onset" => Some(EventKind::SleepOnset),
            "wake_time" => Some(EventKind::WakeTime),
            _ => None,
        }
    }
}

/// Per-minute sleep probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypnogram {
    /// Start of minute 0, in seconds.
    pub start: i64,
    pub probs: Vec<f32>,
}

impl Hypnogram {
    pub fn new(start: i64, probs: Vec<f32>) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Data(format!("probability {p} outside [0, 1]")));
        }
        Ok(Self { start, probs })
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn timestamp(&self, minute: usize) -> i64 {
        self.start + minute as i64 * MINUTE
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryHypnogram {
    pub start: i64,
    pub states: Vec<State>,
}

impl BinaryHypnogram {
    pub fn from_bools(start: i64, sleep: &[bool]) -> Self {
        Self {
            start,
            states: sleep.iter().map(|&s| State::from_bool(s)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn timestamp(&self, minute: usize) -> i64 {
        self.start + minute as i64 * MINUTE
    }
}

/// Post-processing and rule parameters (durations in minutes).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRuleConfig {
    pub threshold: f32,
    /// Odd; 1 disables smoothing.
    pub median_width: usize,
    /// 1 disables run suppression.
    pub min_run: usize,
    /// Sleep minutes needed to confirm an onset.
    pub sleep_confirm: usize,
    /// Contiguous awake minutes that reject an onset candidate.
    pub awake_break: usize,
    /// Contiguous awake minutes needed after a wake candidate.
    pub wake_confirm: usize,
    /// A later sleep run this long disqualifies a wake candidate.
    pub reentry_run: usize,
}

impl Default for EventRuleConfig {
    fn default() -> Self {
        Self {
            threshold: 0.5,
            median_width: 5,
            min_run: 3,
            sleep_confirm: 45,
            awake_break: 10,
            wake_confirm: 15,
            reentry_run: 10,
        }
    }
}

impl EventRuleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(Error::Config(format!("threshold {} must lie in (0, 1)", self.threshold)));
        }
        if self.median_width.is_multiple_of(2) {
            return Err(Error::Config(format!("median width {} must be odd", self.median_width)));
        }
        let durations = [
            self.min_run,
            self.sleep_confirm,
            self.awake_break,
            self.wake_confirm,
            self.reentry_run,
        ];
        if durations.contains(&0) {
            return Err(Error::Config("rule durations must be at least 1 minute".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Accept,
    Reject,
    Pending,
}

/// One candidate considered by the rule engine.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub kind: EventKind,
    /// Candidate minute index.
    pub index: usize,
    pub timestamp: i64,
    pub decision: Decision,
    /// Last minute examined before deciding.
    pub decided_at: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SleepEvents {
    pub sleep_onset: Option<i64>,
    pub wake_time: Option<i64>,
    pub onset_index: Option<usize>,
    pub wake_index: Option<usize>,
    pub trace: Vec<TraceEntry>,
}

impl SleepEvents {
    /// `(kind, timestamp)` pairs of the detected events, onset first.
    pub fn events(&self) -> Vec<(EventKind, i64)> {
        let mut v = Vec::new();
        if let Some(t) = self.sleep_onset {
            v.push((EventKind::SleepOnset, t));
        }
        if let Some(t) = self.wake_time {
            v.push((EventKind::WakeTime, t));
        }
        v
    }

    /// Position in `trace` of the accepting entry for `kind`.
    pub fn trace_ref(&self, kind: EventKind) -> Option<usize> {
        self.trace
            .iter()
            .position(|e| e.kind == kind && e.decision == Decision::Accept)
    }
}

/// Smoothing, thresholding and run suppression.
pub fn postprocess(h: &Hypnogram, cfg: &EventRuleConfig) -> Result<BinaryHypnogram> {
    cfg.validate()?;
    let smoothed = smooth_probs(h, cfg.median_width)?;
    Ok(suppress_short_runs(&binarize(&smoothed, cfg.threshold), cfg.min_run))
}

/// Applies the onset and wake rules to an already post-processed sequence.
pub fn detect_events(b: &BinaryHypnogram, cfg: &EventRuleConfig) -> SleepEvents {
    let mut trace = Vec::new();
    let onset_index = match scan_sleep_onset(b, cfg, &mut trace) {
        OnsetScan::Accepted(i) => Some(i),
        OnsetScan::Pending(_) | OnsetScan::NotFound => None,
    };
    let wake_index = onset_index.and_then(|o| detect::scan_wake(b, cfg, o, &mut trace));
    SleepEvents {
        sleep_onset: onset_index.map(|i| b.timestamp(i)),
        wake_time: wake_index.map(|i| b.timestamp(i)),
        onset_index,
        wake_index,
        trace,
    }
}

/// Full batch pipeline from probabilities to events.
pub fn predict_events(h: &Hypnogram, cfg: &EventRuleConfig) -> Result<SleepEvents> {
    Ok(detect_events(&postprocess(h, cfg)?, cfg))
}

/// Writes `kind,timestamp,confidence_trace_ref` rows.
pub fn write_events_csv<W: Write>(events: &SleepEvents, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "timestamp", "confidence_trace_ref"])?;
    for (kind, ts) in events.events() {
        let r = events.trace_ref(kind).map(|i| format!("trace:{i}")).unwrap_or_default();
        w.write_record([kind.as_str(), &ts.to_string(), &r])?;
    }
    w.flush().map_err(|e| Error::io("<events output>", e))?;
    Ok(())
}

/// Reads rows written by [`write_events_csv`] as `(kind, timestamp)` pairs.
pub fn read_events_csv<R: std::io::Read>(src: R) -> Result<Vec<(EventKind, i64)>> {
    let mut rdr = csv::Reader::from_reader(src);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = || Error::Row {
            row: i + 1,
            reason: "expected `kind,timestamp,...`".into(),
        };
        let kind = row.get(0).and_then(EventKind::parse).ok_or_else(bad)?;
        let ts = row.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(bad)?;
        out.push((kind, ts));
    }
    Ok(out)
}

/// Writes `minute,timestamp,probability` rows.
pub fn write_hypnogram_csv<W: Write>(h: &Hypnogram, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["minute", "timestamp", "probability"])?;
    for (m, p) in h.probs.iter().enumerate() {
        w.write_record([m.to_string(), h.timestamp(m).to_string(), format!("{p:.6}")])?;
    }
    w.flush().map_err(|e| Error::io("<hypnogram output>", e))?;
    Ok(())
}

/// Reads rows written by [`write_hypnogram_csv`]. Timestamps must advance
/// one minute per row.
pub fn read_hypnogram_csv<R: std::io::Read>(src: R) -> Result<Hypnogram> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(src);
    let mut start = None;
    let mut probs = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |reason: &str| Error::Row {
            row: i + 1,
            reason: reason.into(),
        };
        let ts: i64 = row.get(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("timestamp is not an integer"))?;
        let p: f32 = row.get(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("probability is not a number"))?;
        let start = *start.get_or_insert(ts);
        if ts != start + i as i64 * MINUTE {
            return Err(bad("timestamps must advance by one minute per row"));
        }
        probs.push(p);
    }
    Hypnogram::new(start.unwrap_or(0), probs)
}
