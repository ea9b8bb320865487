use super::BinaryHypnogram;
use crate::data::State;

/// Run-length encoding as `(state, length)` pairs.
pub fn run_lengths(states: &[State]) -> Vec<(State, usize)> {
    let mut runs: Vec<(State, usize)> = Vec::new();
    for &s in states {
        match runs.last_mut() {
            Some((last, n)) if *last == s => *n += 1,
            _ => runs.push((s, 1)),
        }
    }
    runs
}

/// Flips interior runs shorter than `min_run`, leftmost first, until none
/// remain. The first and last runs are never flipped.
///
/// With two states a flipped run always joins both neighbours, and flipping
/// the leftmost short run never creates a new short run to its left, so a
/// single left-to-right sweep reaches the fixpoint. The sweep only looks
/// backwards, which keeps it usable on a growing stream.
pub fn suppress_short_runs(b: &BinaryHypnogram, min_run: usize) -> BinaryHypnogram {
    let runs = run_lengths(&b.states);
    let mut out: Vec<(State, usize)> = Vec::with_capacity(runs.len());
    for (k, &(state, len)) in runs.iter().enumerate() {
        let Some(last) = out.last_mut() else {
            out.push((state, len));
            continue;
        };
        let interior = k + 1 < runs.len();
        if last.0 == state || (interior && len < min_run) {
            last.1 += len;
        } else {
            out.push((state, len));
        }
    }
    BinaryHypnogram {
        start: b.start,
        states: out.into_iter().flat_map(|(s, n)| std::iter::repeat_n(s, n)).collect(),
    }
}
