//! Incremental inference over a live sequence of epoch records.
//!
//! Input lines are `timestamp,hr,br,hr_conf,movement` (an optional trailing
//! label column is ignored). Output frames are `class,timestamp,p`,
//! `event,kind,timestamp` and `err,reason`.

use std::collections::VecDeque;
use std::fmt;
use std::sync::Arc;

use crate::data::{EpochRecord, N_FEATURES, WINDOW_STRIDE, EPOCH_SECONDS};
use crate::error::Result;
use crate::events::{
    binarize, predict_events, run_lengths, scan_sleep_onset, smooth_probs, suppress_short_runs, BinaryHypnogram,
    EventKind, EventRuleConfig, Hypnogram, OnsetScan, SleepEvents,
};
use crate::model::SleepNet;
use crate::nn::FeatureMap;

#[derive(Clone, Debug, PartialEq)]
pub enum Emission {
    /// Sleep probability for the minute starting at `timestamp`.
    Class { timestamp: i64, p: f32 },
    Event { kind: EventKind, timestamp: i64 },
    Error { reason: String },
}

impl fmt::Display for Emission {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Emission::Class { timestamp, p } => write!(f, "class,{timestamp},{p}"),
            Emission::Event { kind, timestamp } => write!(f, "event,{},{timestamp}", kind.as_str()),
            Emission::Error { reason } => write!(f, "err,{}", reason.replace(['\n', '\r'], " ")),
        }
    }
}

/// Per-stream state. The model is shared and never mutated.
///
/// The window buffer holds at most one window of epochs; the hypnogram grows
/// by one value per minute of input.
#[derive(Debug)]
pub struct StreamState {
    model: Arc<SleepNet<f32>>,
    rules: EventRuleConfig,
    ring: VecDeque<[f32; N_FEATURES]>,
    n_epochs: usize,
    last_timestamp: Option<i64>,
    last_hr: Option<f32>,
    hyp_start: Option<i64>,
    probs: Vec<f32>,
    onset_emitted: bool,
}

impl StreamState {
    pub fn new(model: Arc<SleepNet<f32>>, rules: EventRuleConfig) -> Result<Self> {
        rules.validate()?;
        if model.norm.is_none() {
            return Err(crate::Error::Data("model has no normalization statistics".into()));
        }
        Ok(Self {
            model,
            rules,
            ring: VecDeque::new(),
            n_epochs: 0,
            last_timestamp: None,
            last_hr: None,
            hyp_start: None,
            probs: Vec::new(),
            onset_emitted: false,
        })
    }

    pub fn window_len(&self) -> usize {
        self.ring.len()
    }

    pub fn hypnogram(&self) -> Hypnogram {
        Hypnogram {
            start: self.hyp_start.unwrap_or(0),
            probs: self.probs.clone(),
        }
    }

    /// Consumes one input line. Rejected lines produce a single error frame
    /// and leave the state untouched.
    pub fn feed(&mut self, line: &str) -> Vec<Emission> {
        let line = line.trim();
        if line.is_empty() || line.starts_with("timestamp") {
            return vec![];
        }
        let rec = match self.parse(line) {
            Ok(r) => r,
            Err(reason) => return vec![Emission::Error { reason }],
        };
        match self.push(rec) {
            Ok(out) => out,
            Err(e) => vec![Emission::Error { reason: e.to_string() }],
        }
    }

    fn parse(&self, line: &str) -> std::result::Result<EpochRecord, String> {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if !(5..=6).contains(&fields.len()) {
            return Err(format!("expected 5 fields, found {}", fields.len()));
        }
        let timestamp: i64 = fields[0]
            .parse()
            .map_err(|_| format!("timestamp is not an integer: {:?}", fields[0]))?;
        let mut v = [0f32; 4];
        for (slot, (s, name)) in v.iter_mut().zip(fields[1..5].iter().zip(["hr", "br", "hr_conf", "movement"])) {
            *slot = s.parse().map_err(|_| format!("`{name}` is not a number: {s:?}"))?;
        }
        if let Some(prev) = self.last_timestamp {
            if timestamp <= prev {
                return Err(format!("out-of-order timestamp {timestamp} (previous {prev})"));
            }
            if timestamp - prev != EPOCH_SECONDS {
                return Err(format!("gap of {} s after timestamp {prev}", timestamp - prev));
            }
        }
        let rec = EpochRecord {
            timestamp,
            hr: v[0],
            br: v[1],
            hr_conf: v[2],
            movement: v[3],
            hr_diff: self.last_hr.map_or(0.0, |p| v[0] - p),
            label: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    fn push(&mut self, rec: EpochRecord) -> Result<Vec<Emission>> {
        let w = self.model.config.window_epochs;
        let norm = self.model.norm.as_ref().expect("checked in new");
        let mut feats = rec.features();
        for (f, v) in feats.iter_mut().enumerate() {
            *v = norm.apply_value(f, *v);
        }
        let mut ring = self.ring.clone();
        if ring.len() == w {
            ring.pop_front();
        }
        ring.push_back(feats);
        let n_epochs = self.n_epochs + 1;
        if n_epochs < w || (n_epochs - w) % WINDOW_STRIDE != 0 {
            self.commit(rec, ring, n_epochs);
            return Ok(vec![]);
        }

        let mut values = vec![0f32; N_FEATURES * w];
        for (t, e) in ring.iter().enumerate() {
            for (f, &v) in e.iter().enumerate() {
                values[f * w + t] = v;
            }
        }
        let p = self.model.forward_map(&FeatureMap::new(N_FEATURES, w, values)?)?.p_final;
        let minute_start = rec.timestamp + EPOCH_SECONDS - 2 * EPOCH_SECONDS;
        self.commit(rec, ring, n_epochs);
        self.hyp_start.get_or_insert(minute_start);
        self.probs.push(p);

        let mut out = vec![Emission::Class { timestamp: minute_start, p }];
        if !self.onset_emitted {
            if let Some(ts) = self.settled_onset()? {
                self.onset_emitted = true;
                out.push(Emission::Event {
                    kind: EventKind::SleepOnset,
                    timestamp: ts,
                });
            }
        }
        Ok(out)
    }

    fn commit(&mut self, rec: EpochRecord, ring: VecDeque<[f32; N_FEATURES]>, n_epochs: usize) {
        self.ring = ring;
        self.n_epochs = n_epochs;
        self.last_timestamp = Some(rec.timestamp);
        self.last_hr = Some(rec.hr);
    }

    /// Runs the onset rule on the part of the post-processed hypnogram that
    /// no future input can change.
    fn settled_onset(&self) -> Result<Option<i64>> {
        let half = self.rules.median_width / 2;
        let settled = self.probs.len().saturating_sub(half);
        if settled == 0 {
            return Ok(None);
        }
        let start = self.hyp_start.expect("set with the first probability");
        // Smoothed values more than half a median window from the end are final.
        let smoothed = smooth_probs(&self.hypnogram(), self.rules.median_width)?;
        let prefix = Hypnogram {
            start,
            probs: smoothed.probs[..settled].to_vec(),
        };
        let suppressed = suppress_short_runs(&binarize(&prefix, self.rules.threshold), self.rules.min_run);
        // Completed runs are final; the open last run can still be flipped
        // while it is short and not the first run.
        let runs = run_lengths(&suppressed.states);
        let &(_, last_len) = runs.last().expect("non-empty prefix");
        let final_len = if runs.len() > 1 && last_len < self.rules.min_run {
            settled - last_len
        } else {
            settled
        };
        let fixed = BinaryHypnogram {
            start,
            states: suppressed.states[..final_len].to_vec(),
        };
        Ok(match scan_sleep_onset(&fixed, &self.rules, &mut Vec::new()) {
            OnsetScan::Accepted(i) => Some(fixed.timestamp(i)),
            _ => None,
        })
    }

    /// Batch event detection on everything seen so far.
    pub fn finalize(&self) -> SleepEvents {
        predict_events(&self.hypnogram(), &self.rules).expect("rules validated in new")
    }

    /// Event frames from `finalize` that were not already emitted by `feed`.
    pub fn closing_emissions(&self, events: &SleepEvents) -> Vec<Emission> {
        events
            .events()
            .into_iter()
            .filter(|(kind, _)| !(self.onset_emitted && *kind == EventKind::SleepOnset))
            .map(|(kind, timestamp)| Emission::Event { kind, timestamp })
            .collect()
    }
}
