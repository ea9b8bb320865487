use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::confusion::ConfusionCounts;
use crate::events::{EventKind, SleepEvents};

/// A timestamped event belonging to one record (night).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Event {
    pub record: usize,
    pub kind: EventKind,
    pub timestamp: i64,
}

pub fn events_of(record: usize, ev: &SleepEvents) -> Vec<Event> {
    ev.events()
        .into_iter()
        .map(|(kind, timestamp)| Event { record, kind, timestamp })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub record: usize,
    pub kind: EventKind,
    pub predicted: i64,
    pub truth: i64,
    /// predicted − truth, in minutes.
    pub error_min: f64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventMatchResult {
    pub tolerance_secs: i64,
    pub per_kind: BTreeMap<EventKind, KindCounts>,
    pub pairs: Vec<MatchedPair>,
    /// Distinct (record, kind) slots holding a prediction or a truth event.
    pub occupied_slots: usize,
}

impl EventMatchResult {
    pub fn totals(&self) -> KindCounts {
        self.per_kind.values().fold(KindCounts::default(), |a, k| KindCounts {
            tp: a.tp + k.tp,
            fp: a.fp + k.fp,
            fn_: a.fn_ + k.fn_,
        })
    }

    /// Confusion counts over `n_records × 2` event slots; a slot with neither
    /// a prediction nor a truth event is a true negative.
    pub fn confusion(&self, n_records: usize) -> ConfusionCounts {
        let t = self.totals();
        ConfusionCounts {
            tp: t.tp,
            fp: t.fp,
            fn_: t.fn_,
            tn: (2 * n_records).saturating_sub(self.occupied_slots) as u64,
        }
    }
}

/// Greedy nearest-first matching within `(record, kind)` groups. A pair
/// counts only when `|Δ| <= tolerance_secs`; unmatched predictions are false
/// positives and unmatched truth events false negatives.
pub fn match_events(pred: &[Event], truth: &[Event], tolerance_secs: i64) -> EventMatchResult {
    let mut candidates = Vec::new();
    for (i, p) in pred.iter().enumerate() {
        for (j, t) in truth.iter().enumerate() {
            let d = (p.timestamp - t.timestamp).abs();
            if p.record == t.record && p.kind == t.kind && d <= tolerance_secs {
                let lo = p.timestamp.min(t.timestamp);
                let hi = p.timestamp.max(t.timestamp);
                candidates.push(((d, lo, hi), i, j));
            }
        }
    }
    // key is symmetric in (pred, truth) so swapping the inputs yields the
    // same matched set
    candidates.sort_by_key(|c| c.0);
    let mut used_p = vec![false; pred.len()];
    let mut used_t = vec![false; truth.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_p[i] && !used_t[j] {
            used_p[i] = true;
            used_t[j] = true;
            let (p, t) = (pred[i], truth[j]);
            pairs.push(MatchedPair {
                record: p.record,
                kind: p.kind,
                predicted: p.timestamp,
                truth: t.timestamp,
                error_min: (p.timestamp - t.timestamp) as f64 / 60.0,
            });
        }
    }
    let mut per_kind: BTreeMap<EventKind, KindCounts> = BTreeMap::new();
    for pair in &pairs {
        per_kind.entry(pair.kind).or_default().tp += 1;
    }
    for (p, _) in pred.iter().zip(&used_p).filter(|(_, u)| !**u) {
        per_kind.entry(p.kind).or_default().fp += 1;
    }
    for (t, _) in truth.iter().zip(&used_t).filter(|(_, u)| !**u) {
        per_kind.entry(t.kind).or_default().fn_ += 1;
    }
    let occupied: BTreeSet<(usize, EventKind)> = pred.iter().chain(truth).map(|e| (e.record, e.kind)).collect();
    EventMatchResult {
        tolerance_secs,
        per_kind,
        pairs,
        occupied_slots: occupied.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ev(record: usize, kind: EventKind, min: i64) -> Event {
        Event { record, kind, timestamp: min * 60 }
    }

    #[test]
    fn exact_match() {
        let e = [ev(0, EventKind::SleepOnset, 62)];
        let r = match_events(&e, &e, 900);
        assert_eq!(r.totals(), KindCounts { tp: 1, fp: 0, fn_: 0 });
        assert_eq!(r.pairs[0].error_min, 0.0);
    }

    #[test]
    fn tolerance_boundary() {
        let t = [ev(0, EventKind::WakeTime, 400)];
        let r = match_events(&[ev(0, EventKind::WakeTime, 414)], &t, 900);
        assert_eq!(r.totals().tp, 1);
        assert_eq!(r.pairs[0].error_min, 14.0);
        let r = match_events(&[ev(0, EventKind::WakeTime, 416)], &t, 900);
        assert_eq!(r.totals(), KindCounts { tp: 0, fp: 1, fn_: 1 });
        assert_eq!(match_events(&[ev(0, EventKind::WakeTime, 415)], &t, 900).totals().tp, 1);
    }

    #[test]
    fn missing_prediction() {
        let r = match_events(&[], &[ev(3, EventKind::SleepOnset, 10)], 900);
        assert_eq!(r.totals(), KindCounts { tp: 0, fp: 0, fn_: 1 });
        assert_eq!(r.confusion(4).tn, 7);
    }

    #[test]
    fn kinds_and_records_do_not_mix() {
        let r = match_events(&[ev(0, EventKind::SleepOnset, 10)], &[ev(0, EventKind::WakeTime, 10)], 900);
        assert_eq!(r.totals(), KindCounts { tp: 0, fp: 1, fn_: 1 });
        let r = match_events(&[ev(0, EventKind::SleepOnset, 10)], &[ev(1, EventKind::SleepOnset, 10)], 900);
        assert_eq!(r.totals().tp, 0);
    }

    #[test]
    fn nearest_first() {
        let pred = [ev(0, EventKind::SleepOnset, 100), ev(0, EventKind::SleepOnset, 108)];
        let truth = [ev(0, EventKind::SleepOnset, 110)];
        let r = match_events(&pred, &truth, 900);
        assert_eq!(r.pairs[0].predicted, 108 * 60);
        assert_eq!(r.totals(), KindCounts { tp: 1, fp: 1, fn_: 0 });
    }

    fn arb_events() -> impl Strategy<Value = Vec<Event>> {
        proptest::collection::vec((0usize..3, any::<bool>(), 0i64..100), 0..8).prop_map(|v| {
            v.into_iter()
                .map(|(r, k, m)| ev(r, if k { EventKind::SleepOnset } else { EventKind::WakeTime }, m))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn swapping_swaps_fp_and_fn(a in arb_events(), b in arb_events()) {
            let x = match_events(&a, &b, 15 * 60).totals();
            let y = match_events(&b, &a, 15 * 60).totals();
            prop_assert_eq!((x.tp, x.fp, x.fn_), (y.tp, y.fn_, y.fp));
        }
    }
}
