//! Seeded synthetic cohorts and the evaluation loop shared by the slower
//! end-to-end tests.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use somnoflow::data::{build_training_set, synth_generate, EpochSeries, FeatureWindow, SynthConfig};
use somnoflow::events::EventRuleConfig;
use somnoflow::metrics::{score_night, ConfusionCounts, DEFAULT_TOLERANCE_SECS};
use somnoflow::model::{predict_hypnogram, SleepNet};

pub fn nights(seeds: std::ops::Range<u64>, base: &SynthConfig) -> Vec<EpochSeries> {
    seeds
        .map(|seed| synth_generate(&SynthConfig { seed, ..base.clone() }).unwrap().series)
        .collect()
}

/// `n` class-balanced windows drawn near state changes, in time order.
pub fn training_windows(series: &[EpochSeries], n: usize, seed: u64) -> Vec<FeatureWindow> {
    let pool = build_training_set(series, 2.0, seed).unwrap();
    assert!(pool.len() >= n, "only {} candidate windows", pool.len());
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| pool[i].clone()).collect()
}

#[derive(Debug, Default)]
pub struct CohortScore {
    pub counts: ConfusionCounts,
    /// Nights whose predicted onset and wake both fall within the tolerance
    /// of the reference events.
    pub nights_on_time: usize,
    pub nights: usize,
}

impl CohortScore {
    pub fn accuracy(&self) -> f64 {
        (self.counts.tp + self.counts.tn) as f64 / self.counts.total() as f64
    }

    pub fn on_time_fraction(&self) -> f64 {
        self.nights_on_time as f64 / self.nights as f64
    }
}

fn within(pred: Option<i64>, truth: Option<i64>) -> bool {
    match (pred, truth) {
        (Some(p), Some(t)) => (p - t).abs() <= DEFAULT_TOLERANCE_SECS,
        (None, None) => true,
        _ => false,
    }
}

pub fn score_cohort(model: &SleepNet, series: &[EpochSeries]) -> CohortScore {
    let rules = EventRuleConfig::default();
    let mut out = CohortScore::default();
    for s in series {
        let hyp = predict_hypnogram(model, s).unwrap();
        let night = score_night(&hyp, s, &rules).unwrap();
        out.counts.merge(&night.counts);
        out.nights += 1;
        if within(night.predicted.sleep_onset, night.truth.sleep_onset)
            && within(night.predicted.wake_time, night.truth.wake_time)
        {
            out.nights_on_time += 1;
        }
    }
    out
}

/// Everything a stream produced for one night, plus the batch answer on
/// the same input.
pub struct Replay {
    pub frames: Vec<somnoflow::Emission>,
    pub final_events: somnoflow::SleepEvents,
    pub batch_hyp: somnoflow::Hypnogram,
    pub batch_events: somnoflow::SleepEvents,
}

impl Replay {
    /// Classification frames and all event frames (including closing ones)
    /// agree with the batch pipeline.
    pub fn matches_batch(&self) -> bool {
        use somnoflow::Emission;
        let classes: Vec<(i64, u32)> = self
            .frames
            .iter()
            .filter_map(|e| match e {
                Emission::Class { timestamp, p } => Some((*timestamp, p.to_bits())),
                _ => None,
            })
            .collect();
        let batch: Vec<(i64, u32)> = (0..self.batch_hyp.len())
            .map(|m| (self.batch_hyp.timestamp(m), self.batch_hyp.probs[m].to_bits()))
            .collect();
        let events: Vec<_> = self
            .frames
            .iter()
            .filter_map(|e| match e {
                Emission::Event { kind, timestamp } => Some((*kind, *timestamp)),
                _ => None,
            })
            .collect();
        classes == batch
            && events == self.batch_events.events()
            && self.final_events == self.batch_events
            && !self.frames.iter().any(|e| matches!(e, Emission::Error { .. }))
    }
}

/// Feeds the CSV text of `series` line by line, then finalizes. The batch
/// side reads the same CSV text.
pub fn replay(model: &std::sync::Arc<SleepNet>, series: &EpochSeries) -> Replay {
    use somnoflow::data::{ingest_epochs, write_epochs_csv, IngestOptions};
    use somnoflow::events::predict_events;
    let mut csv = Vec::new();
    write_epochs_csv(series, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();

    let rules = EventRuleConfig::default();
    let mut state = somnoflow::StreamState::new(model.clone(), rules.clone()).unwrap();
    let mut frames = Vec::new();
    for line in text.lines() {
        frames.extend(state.feed(line));
    }
    let final_events = state.finalize();
    frames.extend(state.closing_emissions(&final_events));

    let parsed = ingest_epochs(text.as_bytes(), &series.subject, IngestOptions::default()).unwrap();
    let batch_hyp = predict_hypnogram(model, &parsed).unwrap();
    let batch_events = predict_events(&batch_hyp, &rules).unwrap();
    Replay {
        frames,
        final_events,
        batch_hyp,
        batch_events,
    }
}

/// A model trained briefly on the default synthetic cohort.
pub fn quick_model(seed: u64) -> SleepNet {
    use somnoflow::model::{build_model, train, ModelConfig, TrainingHyper};
    let windows = training_windows(&nights(1000..1010, &SynthConfig::default()), 1000, seed);
    let hyper = TrainingHyper { n_epochs: 4, seed, ..Default::default() };
    train(build_model(ModelConfig { seed, ..Default::default() }).unwrap(), &windows, &[], &hyper)
        .unwrap()
        .0
}
