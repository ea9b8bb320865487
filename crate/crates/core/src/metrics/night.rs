use super::confusion::ConfusionCounts;
use crate::data::{EpochSeries, State, EPOCH_SECONDS};
use crate::error::{Error, Result};
use crate::events::{binarize, detect_events, predict_events, BinaryHypnogram, EventRuleConfig, Hypnogram, SleepEvents, MINUTE};

/// Per-minute reference states of a labeled series. A minute takes the label
/// of its second epoch.
pub fn minute_labels(series: &EpochSeries) -> Result<BinaryHypnogram> {
    if !series.has_labels() {
        return Err(Error::Data(format!("series `{}` is not fully labeled", series.subject)));
    }
    let states = series
        .records
        .chunks_exact(2)
        .map(|pair| pair[1].label.expect("checked above"))
        .collect();
    Ok(BinaryHypnogram {
        start: series.start_timestamp().unwrap_or(0),
        states,
    })
}

/// Reference events: the onset and wake rules applied directly to the
/// per-minute labels.
pub fn truth_events(series: &EpochSeries, rules: &EventRuleConfig) -> Result<SleepEvents> {
    rules.validate()?;
    Ok(detect_events(&minute_labels(series)?, rules))
}

/// Reference state for every minute of `hyp`, looked up by timestamp.
pub fn aligned_truth(series: &EpochSeries, hyp: &Hypnogram) -> Result<Vec<State>> {
    let labels = minute_labels(series)?;
    (0..hyp.len())
        .map(|m| {
            let offset = hyp.timestamp(m) - labels.start;
            if offset < 0 || offset % MINUTE != 0 {
                return Err(Error::Data(format!(
                    "hypnogram minute at {} is not on the label grid",
                    hyp.timestamp(m)
                )));
            }
            labels
                .states
                .get((offset / MINUTE) as usize)
                .copied()
                .ok_or_else(|| Error::Data(format!("no label for minute at {}", hyp.timestamp(m))))
        })
        .collect()
}

/// Per-minute classification counts plus predicted and reference events for
/// one night.
#[derive(Clone, Debug, PartialEq)]
pub struct NightScore {
    pub counts: ConfusionCounts,
    pub predicted: SleepEvents,
    pub truth: SleepEvents,
}

pub fn score_night(hyp: &Hypnogram, series: &EpochSeries, rules: &EventRuleConfig) -> Result<NightScore> {
    debug_assert_eq!(MINUTE, 2 * EPOCH_SECONDS);
    let truth_states = aligned_truth(series, hyp)?;
    let pred = binarize(hyp, rules.threshold);
    let counts = ConfusionCounts::from_pairs(pred.states.iter().copied().zip(truth_states));
    Ok(NightScore {
        counts,
        predicted: predict_events(hyp, rules)?,
        truth: truth_events(series, rules)?,
    })
}
