use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::record::{EpochSeries, State};
use super::window::{make_windows, FeatureWindow};
use super::{WINDOW_EPOCHS, WINDOW_STRIDE};
use crate::error::{Error, Result};

/// Timestamps of the first epoch of each new state in a labeled series.
pub fn label_transitions(series: &EpochSeries) -> Vec<i64> {
    series
        .records
        .windows(2)
        .filter_map(|p| match (p[0].label, p[1].label) {
            (Some(a), Some(b)) if a != b => Some(p[1].timestamp),
            _ => None,
        })
        .collect()
}

/// Labeled windows ending within `context_hours` of a state change,
/// down-sampled (seeded) to equal class counts.
pub fn build_training_set(series: &[EpochSeries], context_hours: f64, seed: u64) -> Result<Vec<FeatureWindow>> {
    let context = (context_hours * 3600.0).round() as i64;
    let mut any_transition = false;
    let mut pool = Vec::new();
    for s in series {
        let transitions = label_transitions(s);
        if transitions.is_empty() {
            continue;
        }
        any_transition = true;
        for w in make_windows(s, WINDOW_EPOCHS, WINDOW_STRIDE)? {
            if w.label.is_some() && transitions.iter().any(|&t| (w.end_timestamp - t).abs() <= context) {
                pool.push(w);
            }
        }
    }
    if !any_transition {
        return Err(Error::Data("no transitions in any series".into()));
    }

    let (sleep, awake): (Vec<usize>, Vec<usize>) =
        (0..pool.len()).partition(|&i| pool[i].label == Some(State::Sleep));
    let (mut major, minor) = if sleep.len() >= awake.len() { (sleep, awake) } else { (awake, sleep) };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    major.shuffle(&mut rng);
    major.truncate(minor.len());
    let mut keep: Vec<usize> = major.into_iter().chain(minor).collect();
    keep.sort_unstable();

    let mut slots: Vec<Option<FeatureWindow>> = pool.into_iter().map(Some).collect();
    Ok(keep.into_iter().filter_map(|i| slots[i].take()).collect())
}
