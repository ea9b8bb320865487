use super::runs::run_lengths;
use super::{BinaryHypnogram, Decision, EventKind, EventRuleConfig, TraceEntry};
use crate::data::State::{Awake, Sleep};

/// Outcome of the onset rule on a (possibly still growing) sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OnsetScan {
    Accepted(usize),
    /// The sequence ended before this candidate was confirmed or rejected.
    Pending(usize),
    NotFound,
}

fn entry(b: &BinaryHypnogram, kind: EventKind, index: usize, decision: Decision, decided_at: usize, reason: String) -> TraceEntry {
    TraceEntry {
        kind,
        index,
        timestamp: b.timestamp(index),
        decision,
        decided_at,
        reason,
    }
}

/// Onset rule. Candidates are awake→sleep transitions, taken in order. A
/// candidate is accepted once `sleep_confirm` sleep minutes have accrued
/// from it, and rejected as soon as `awake_break` contiguous awake minutes
/// occur first.
///
/// When a candidate is rejected by an awake run, every later candidate
/// before that run sees the same run with fewer sleep minutes accrued, so
/// it is rejected at the same point and the scan resumes after the run.
pub fn scan_sleep_onset(b: &BinaryHypnogram, cfg: &EventRuleConfig, trace: &mut Vec<TraceEntry>) -> OnsetScan {
    let s = &b.states;
    let n = s.len();
    let mut i = 1;
    while i < n {
        if !(s[i - 1] == Awake && s[i] == Sleep) {
            i += 1;
            continue;
        }
        let c = i;
        let (mut slept, mut awake_run) = (0usize, 0usize);
        let mut j = c;
        let mut rejected_at = None;
        while j < n {
            if s[j] == Sleep {
                slept += 1;
                awake_run = 0;
                if slept >= cfg.sleep_confirm {
                    trace.push(entry(
                        b,
                        EventKind::SleepOnset,
                        c,
                        Decision::Accept,
                        j,
                        format!("{slept} sleep minutes accrued with no {}-minute awake run", cfg.awake_break),
                    ));
                    return OnsetScan::Accepted(c);
                }
            } else {
                awake_run += 1;
                if awake_run >= cfg.awake_break {
                    rejected_at = Some(j);
                    break;
                }
            }
            j += 1;
        }
        let Some(r) = rejected_at else {
            trace.push(entry(
                b,
                EventKind::SleepOnset,
                c,
                Decision::Pending,
                n - 1,
                format!("record ended after {slept} of {} sleep minutes", cfg.sleep_confirm),
            ));
            return OnsetScan::Pending(c);
        };
        let reason = format!("{}-minute awake run at minute {}", cfg.awake_break, r + 1 - cfg.awake_break);
        for k in c..r {
            if k == c || (s[k - 1] == Awake && s[k] == Sleep) {
                trace.push(entry(b, EventKind::SleepOnset, k, Decision::Reject, r, reason.clone()));
            }
        }
        i = r + 1;
    }
    OnsetScan::NotFound
}

/// Batch form of the onset rule: a pending candidate counts as no onset.
pub fn detect_sleep_time(b: &BinaryHypnogram, cfg: &EventRuleConfig) -> Option<usize> {
    match scan_sleep_onset(b, cfg, &mut Vec::new()) {
        OnsetScan::Accepted(i) => Some(i),
        _ => None,
    }
}

/// Wake rule. Among sleep→awake transitions after the onset, the earliest
/// one followed by at least `wake_confirm` awake minutes and with no sleep
/// run of `reentry_run` minutes or more anywhere after it.
pub(crate) fn scan_wake(b: &BinaryHypnogram, cfg: &EventRuleConfig, onset: usize, trace: &mut Vec<TraceEntry>) -> Option<usize> {
    let s = &b.states;
    let n = s.len();
    let mut awake_len = vec![0usize; n + 1];
    for i in (0..n).rev() {
        awake_len[i] = if s[i] == Awake { awake_len[i + 1] + 1 } else { 0 };
    }
    let mut pos = 0;
    let mut last_long_sleep = None;
    for (state, len) in run_lengths(s) {
        if state == Sleep && len >= cfg.reentry_run {
            last_long_sleep = Some(pos);
        }
        pos += len;
    }

    for t in onset + 1..n {
        if !(s[t - 1] == Sleep && s[t] == Awake) {
            continue;
        }
        if awake_len[t] < cfg.wake_confirm {
            trace.push(entry(
                b,
                EventKind::WakeTime,
                t,
                Decision::Reject,
                t + awake_len[t].min(n - 1 - t),
                format!("only {} awake minutes follow (need {})", awake_len[t], cfg.wake_confirm),
            ));
        } else if let Some(l) = last_long_sleep.filter(|&l| l > t) {
            trace.push(entry(
                b,
                EventKind::WakeTime,
                t,
                Decision::Reject,
                l,
                format!("sleep run of at least {} minutes resumes at minute {l}", cfg.reentry_run),
            ));
        } else {
            trace.push(entry(
                b,
                EventKind::WakeTime,
                t,
                Decision::Accept,
                n - 1,
                format!("{} awake minutes follow and sleep never resumes for {} minutes", awake_len[t], cfg.reentry_run),
            ));
            return Some(t);
        }
    }
    None
}

pub fn detect_wake_time(b: &BinaryHypnogram, cfg: &EventRuleConfig, sleep_onset: usize) -> Option<usize> {
    scan_wake(b, cfg, sleep_onset, &mut Vec::new())
}
