//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

pub mod fixtures;
pub mod grad;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use somnoflow::data::State;
use somnoflow::events::{detect_events, predict_events, BinaryHypnogram, EventRuleConfig, Hypnogram};

/// Literal onset rule: try every awake→sleep transition in order, scanning
/// forward from each one with no shortcuts.
pub fn ref_onset(s: &[u8], cfg: &EventRuleConfig) -> Option<usize> {
    for c in 1..s.len() {
        if !(s[c - 1] == 0 && s[c] == 1) {
            continue;
        }
        let (mut slept, mut awake_run) = (0, 0);
        for &x in &s[c..] {
            if x == 1 {
                slept += 1;
                awake_run = 0;
            } else {
                awake_run += 1;
            }
            if slept >= cfg.sleep_confirm {
                return Some(c);
            }
            if awake_run >= cfg.awake_break {
                break;
            }
        }
    }
    None
}

/// Literal wake rule: earliest sleep→awake transition after the onset with
/// enough awake minutes right after it and no long sleep run starting later.
pub fn ref_wake(s: &[u8], cfg: &EventRuleConfig, onset: usize) -> Option<usize> {
    let n = s.len();
    (onset + 1..n).find(|&t| {
        if !(s[t - 1] == 1 && s[t] == 0) {
            return false;
        }
        let awake = s[t..].iter().take_while(|&&x| x == 0).count();
        if awake < cfg.wake_confirm {
            return false;
        }
        !(t + 1..n).any(|u| {
            s[u] == 1 && s[u - 1] == 0 && s[u..].iter().take_while(|&&x| x == 1).count() >= cfg.reentry_run
        })
    })
}

/// The wake sentence read word for word: a minute preceded by at least
/// `wake_confirm` awake minutes and followed by no awake minute at all.
pub fn ref_wake_literal(s: &[u8], cfg: &EventRuleConfig, onset: usize) -> Option<usize> {
    (onset + 1..s.len()).find(|&t| {
        t >= cfg.wake_confirm && s[t - cfg.wake_confirm..t].iter().all(|&x| x == 0) && s[t..].iter().all(|&x| x == 1)
    })
}

pub fn ref_median(p: &[f32], width: usize) -> Vec<f32> {
    let n = p.len();
    (0..n)
        .map(|i| {
            let r = (width / 2).min(i).min(n - 1 - i);
            let mut w: Vec<f32> = p[i - r..=i + r].to_vec();
            w.sort_by(|a, b| a.partial_cmp(b).unwrap());
            w[r]
        })
        .collect()
}

/// Repeatedly flips the leftmost interior run shorter than `min_run`.
pub fn ref_suppress(v: &[u8], min_run: usize) -> Vec<u8> {
    let mut v = v.to_vec();
    loop {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < v.len() {
            let j = i + v[i..].iter().take_while(|&&x| x == v[i]).count();
            runs.push((i, j));
            i = j;
        }
        let Some(&(a, b)) = runs
            .iter()
            .skip(1)
            .take(runs.len().saturating_sub(2))
            .find(|(a, b)| b - a < min_run)
        else {
            return v;
        };
        for x in &mut v[a..b] {
            *x ^= 1;
        }
    }
}

/// Whole event pipeline from probabilities, built from the references above.
pub fn ref_pipeline(p: &[f32], cfg: &EventRuleConfig) -> (Option<usize>, Option<usize>) {
    let bin: Vec<u8> = ref_median(p, cfg.median_width)
        .into_iter()
        .map(|x| (x >= cfg.threshold) as u8)
        .collect();
    let s = ref_suppress(&bin, cfg.min_run);
    let onset = ref_onset(&s, cfg);
    (onset, onset.and_then(|o| ref_wake(&s, cfg, o)))
}

pub fn to_u8(states: &[State]) -> Vec<u8> {
    states.iter().map(|s| s.as_u8()).collect()
}

/// Relative error with a small absolute floor so gradients that are both
/// essentially zero compare equal.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

pub fn scaled() -> EventRuleConfig {
    EventRuleConfig {
        median_width: 3,
        min_run: 2,
        sleep_confirm: 4,
        awake_break: 2,
        wake_confirm: 2,
        reentry_run: 2,
        ..Default::default()
    }
}

pub fn bits(x: u32, n: usize) -> Vec<u8> {
    (0..n).map(|i| ((x >> i) & 1) as u8).collect()
}

pub fn bin(v: &[u8]) -> BinaryHypnogram {
    BinaryHypnogram {
        start: 0,
        states: v.iter().map(|&x| State::from_bool(x == 1)).collect(),
    }
}

/// Sticky two-state chain with a per-sequence switching rate.
pub fn markov(rng: &mut ChaCha8Rng, n: usize) -> Vec<u8> {
    let switch = rng.random_range(0.005..0.3);
    let mut s = rng.random_range(0..2u8);
    (0..n)
        .map(|_| {
            if rng.random_bool(switch) {
                s ^= 1;
            }
            s
        })
        .collect()
}

/// Optimized rules against the literal reference on every length-16 binary
/// sequence under the scaled thresholds.
pub fn exhaustive_rule_mismatches() -> usize {
    let cfg = scaled();
    (0..1u32 << 16)
        .filter(|&x| {
            let s = bits(x, 16);
            let ev = detect_events(&bin(&s), &cfg);
            let onset = ref_onset(&s, &cfg);
            (ev.onset_index, ev.wake_index) != (onset, onset.and_then(|o| ref_wake(&s, &cfg, o)))
        })
        .count()
}

/// Same, through smoothing and run suppression with 0/1 probabilities.
pub fn exhaustive_pipeline_mismatches() -> usize {
    let cfg = scaled();
    (0..1u32 << 16)
        .filter(|&x| {
            let p: Vec<f32> = bits(x, 16).iter().map(|&b| b as f32).collect();
            let ev = predict_events(&Hypnogram::new(0, p.clone()).unwrap(), &cfg).unwrap();
            (ev.onset_index, ev.wake_index) != ref_pipeline(&p, &cfg)
        })
        .count()
}

#[derive(Debug, Default)]
pub struct FuzzOutcome {
    pub mismatches: usize,
    pub onsets: usize,
    pub wakes: usize,
}

/// Optimized rules against the reference on seeded Markov sequences under
/// default thresholds.
pub fn fuzz_rule_mismatches(count: usize, len: usize) -> FuzzOutcome {
    let cfg = EventRuleConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(600);
    let mut out = FuzzOutcome::default();
    for _ in 0..count {
        let s = markov(&mut rng, len);
        let ev = detect_events(&bin(&s), &cfg);
        let onset = ref_onset(&s, &cfg);
        let wake = onset.and_then(|o| ref_wake(&s, &cfg, o));
        out.mismatches += ((ev.onset_index, ev.wake_index) != (onset, wake)) as usize;
        out.onsets += onset.is_some() as usize;
        out.wakes += wake.is_some() as usize;
    }
    out
}
