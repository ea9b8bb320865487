use super::{BinaryHypnogram, Hypnogram};
use crate::data::State;
use crate::error::{Error, Result};

/// Centered moving median. Near the edges the window shrinks symmetrically
/// so it always has an odd number of points.
pub fn smooth_probs(h: &Hypnogram, median_width: usize) -> Result<Hypnogram> {
    if median_width.is_multiple_of(2) {
        return Err(Error::Config(format!("median width {median_width} must be odd")));
    }
    let n = h.len();
    let half = median_width / 2;
    let mut buf = Vec::with_capacity(median_width);
    let probs = (0..n)
        .map(|i| {
            let r = half.min(i).min(n - 1 - i);
            buf.clear();
            buf.extend_from_slice(&h.probs[i - r..=i + r]);
            buf.sort_unstable_by(f32::total_cmp);
            buf[r]
        })
        .collect();
    Ok(Hypnogram { start: h.start, probs })
}

/// `p >= threshold` is sleep.
pub fn binarize(h: &Hypnogram, threshold: f32) -> BinaryHypnogram {
    BinaryHypnogram {
        start: h.start,
        states: h.probs.iter().map(|&p| State::from_bool(p >= threshold)).collect(),
    }
}
