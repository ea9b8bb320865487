use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::record::{compute_hr_diff, EpochRecord, EpochSeries, SourceTag, State};
use super::EPOCH_SECONDS;
use crate::error::{Error, Result};
use crate::events::EventKind;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gaussian {
    pub mean: f64,
    pub std: f64,
}

const fn g(mean: f64, std: f64) -> Gaussian {
    Gaussian { mean, std }
}

/// State-conditional feature distributions.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Emission {
    pub hr: Gaussian,
    pub br: Gaussian,
    pub hr_conf: Gaussian,
    pub movement: Gaussian,
}

impl Emission {
    pub const SLEEP: Emission = Emission {
        hr: g(58.0, 4.0),
        br: g(14.0, 1.5),
        hr_conf: g(0.92, 0.04),
        movement: g(0.05, 0.05),
    };
    pub const WAKE: Emission = Emission {
        hr: g(72.0, 8.0),
        br: g(17.0, 2.5),
        hr_conf: g(0.75, 0.1),
        movement: g(0.6, 0.3),
    };

    fn lerp(a: &Emission, b: &Emission, t: f64) -> Emission {
        let l = |x: Gaussian, y: Gaussian| g(x.mean + (y.mean - x.mean) * t, x.std + (y.std - x.std) * t);
        Emission {
            hr: l(a.hr, b.hr),
            br: l(a.br, b.br),
            hr_conf: l(a.hr_conf, b.hr_conf),
            movement: l(a.movement, b.movement),
        }
    }
}

/// Parameters of the alternating wake/sleep bout generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub seed: u64,
    pub record_hours: f64,
    /// Mean bout durations in minutes; bouts are log-normal with these means.
    pub mean_sleep_bout_min: f64,
    pub mean_wake_bout_min: f64,
    /// Standard deviation of the log-duration.
    pub bout_log_sd: f64,
    /// Lower bound on the opening wake bout (minutes).
    pub min_first_wake_min: f64,
    /// Final minutes of the record forced awake; 0 disables.
    pub morning_wake_min: f64,
    /// Width (minutes) of the linear feature blend centered on each transition.
    pub blur_min: f64,
    pub sleep: Emission,
    pub wake: Emission,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            record_hours: 8.0,
            mean_sleep_bout_min: 240.0,
            mean_wake_bout_min: 30.0,
            bout_log_sd: 0.4,
            min_first_wake_min: 30.0,
            morning_wake_min: 45.0,
            blur_min: 2.0,
            sleep: Emission::SLEEP,
            wake: Emission::WAKE,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.record_hours >= 1.0) {
            return bad("record length must be at least 1 hour");
        }
        if !(self.mean_sleep_bout_min > 0.0 && self.mean_wake_bout_min > 0.0) {
            return bad("bout durations must be positive");
        }
        if !(self.bout_log_sd >= 0.0 && self.min_first_wake_min >= 0.0 && self.morning_wake_min >= 0.0) {
            return bad("spread and fixed wake durations must be non-negative");
        }
        if !(self.blur_min >= 0.0) {
            return bad("transition blur must be non-negative");
        }
        for e in [&self.sleep, &self.wake] {
            for gs in [e.hr, e.br, e.hr_conf, e.movement] {
                if !(gs.std >= 0.0 && gs.mean.is_finite()) {
                    return bad("emission parameters must be finite with std >= 0");
                }
            }
        }
        Ok(())
    }
}

/// A true state change in a synthetic series.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transition {
    pub kind: EventKind,
    pub timestamp: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Synthetic {
    pub series: EpochSeries,
    pub transitions: Vec<Transition>,
}

fn bout_minutes(rng: &mut ChaCha8Rng, mean: f64, log_sd: f64) -> usize {
    let d = if log_sd > 0.0 {
        let mu = mean.ln() - log_sd * log_sd / 2.0;
        LogNormal::new(mu, log_sd).expect("valid log-normal").sample(rng)
    } else {
        mean
    };
    (d.round() as usize).max(1)
}

/// Generates a fully labeled synthetic night. Bouts are whole minutes, so
/// every transition falls on an even epoch.
pub fn synth_generate(cfg: &SynthConfig) -> Result<Synthetic> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let minutes = (cfg.record_hours * 60.0).round() as usize;

    let mut states = Vec::with_capacity(minutes);
    let mut sleep = false;
    while states.len() < minutes {
        let mean = if sleep { cfg.mean_sleep_bout_min } else { cfg.mean_wake_bout_min };
        let mut d = bout_minutes(&mut rng, mean, cfg.bout_log_sd);
        if states.is_empty() {
            d = d.max(cfg.min_first_wake_min.round() as usize);
        }
        states.extend(std::iter::repeat_n(sleep, d));
        sleep = !sleep;
    }
    states.truncate(minutes);
    let morning = (cfg.morning_wake_min.round() as usize).min(minutes);
    if morning > 0 {
        states[minutes - morning..].fill(false);
    }

    let epoch_state: Vec<bool> = states.iter().flat_map(|&s| [s, s]).collect();
    let change_epochs: Vec<usize> = (1..epoch_state.len())
        .filter(|&i| epoch_state[i] != epoch_state[i - 1])
        .collect();
    let transitions = change_epochs
        .iter()
        .map(|&i| Transition {
            kind: if epoch_state[i] { EventKind::SleepOnset } else { EventKind::WakeTime },
            timestamp: i as i64 * EPOCH_SECONDS,
        })
        .collect();

    // blend half-width in epochs: blur_min minutes span 2 * blur_min epochs
    let half = cfg.blur_min.max(0.0);
    let mut records = Vec::with_capacity(epoch_state.len());
    for (e, &s) in epoch_state.iter().enumerate() {
        let base = if s { &cfg.sleep } else { &cfg.wake };
        let mut em = *base;
        if half > 0.0 {
            // nearest transition decides the blend
            let pos = change_epochs.partition_point(|&c| c <= e);
            let near = [pos.checked_sub(1), Some(pos)]
                .into_iter()
                .flatten()
                .filter_map(|k| change_epochs.get(k))
                .min_by_key(|&&c| (c as i64 - e as i64).abs());
            if let Some(&c) = near {
                let offset = e as f64 + 0.5 - c as f64;
                if offset.abs() < half {
                    let (from, to) = if epoch_state[c] { (&cfg.wake, &cfg.sleep) } else { (&cfg.sleep, &cfg.wake) };
                    em = Emission::lerp(from, to, (offset + half) / (2.0 * half));
                }
            }
        }
        let mut draw = |gs: Gaussian| {
            let z: f64 = StandardNormal.sample(&mut rng);
            gs.mean + gs.std * z
        };
        let hr = draw(em.hr).max(0.0);
        let br = draw(em.br).max(0.0);
        let hr_conf = draw(em.hr_conf).clamp(0.0, 1.0);
        let movement = draw(em.movement).max(0.0);
        records.push(EpochRecord {
            timestamp: e as i64 * EPOCH_SECONDS,
            hr: hr as f32,
            br: br as f32,
            hr_conf: hr_conf as f32,
            movement: movement as f32,
            hr_diff: 0.0,
            label: Some(State::from_bool(s)),
        });
    }
    compute_hr_diff(&mut records);
    Ok(Synthetic {
        series: EpochSeries {
            subject: format!("synthetic-{}", cfg.seed),
            source: SourceTag::Synthetic,
            records,
        },
        transitions,
    })
}

/// Writes `kind,timestamp` rows, one per true transition.
pub fn write_truth_sidecar<W: Write>(transitions: &[Transition], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["kind", "timestamp"])?;
    for t in transitions {
        w.write_record([t.kind.as_str(), &t.timestamp.to_string()])?;
    }
    w.flush().map_err(|e| Error::io("<truth sidecar>", e))?;
    Ok(())
}

pub fn read_truth_sidecar<R: Read>(src: R) -> Result<Vec<Transition>> {
    let mut rdr = csv::Reader::from_reader(src);
    let mut out = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let bad = |reason: String| Error::Row { row: i + 1, reason };
        let kind = row
            .get(0)
            .and_then(EventKind::parse)
            .ok_or_else(|| bad(format!("unknown event kind {:?}", row.get(0))))?;
        let timestamp = row
            .get(1)
            .and_then(|s| s.trim().parse().ok())
            .ok_or_else(|| bad("timestamp is not an integer".into()))?;
        out.push(Transition { kind, timestamp });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeded_reproducible() {
        let cfg = SynthConfig { seed: 9, ..Default::default() };
        assert_eq!(synth_generate(&cfg).unwrap(), synth_generate(&cfg).unwrap());
        let other = synth_generate(&SynthConfig { seed: 10, ..cfg }).unwrap();
        assert_ne!(other.series, synth_generate(&SynthConfig { seed: 9, ..Default::default() }).unwrap().series);
    }

    #[test]
    fn shape_of_a_night() {
        let s = synth_generate(&SynthConfig { seed: 1, ..Default::default() }).unwrap();
        assert_eq!(s.series.len(), 8 * 120);
        assert!(s.series.has_labels());
        let labels = s.series.labels();
        assert!(labels[..60].iter().all(|l| *l == Some(State::Awake)), "first 30 min awake");
        assert!(labels[labels.len() - 90..].iter().all(|l| *l == Some(State::Awake)), "morning awake");
        for t in &s.transitions {
            assert_eq!(t.timestamp % 60, 0, "transitions on minute boundaries");
            let i = (t.timestamp / 30) as usize;
            assert_ne!(labels[i], labels[i - 1]);
        }
        assert_eq!(s.transitions[0].kind, EventKind::SleepOnset);
    }

    #[test]
    fn per_state_hr_means() {
        let cfg = SynthConfig {
            seed: 4,
            blur_min: 0.0,
            ..Default::default()
        };
        let s = synth_generate(&cfg).unwrap();
        let mean = |st: State| {
            let v: Vec<f64> = s.series.records.iter().filter(|r| r.label == Some(st)).map(|r| r.hr as f64).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean(State::Sleep) - 58.0).abs() < 1.0);
        assert!((mean(State::Awake) - 72.0).abs() < 1.0);
    }

    #[test]
    fn no_blur_is_step_wise() {
        let mut cfg = SynthConfig { seed: 2, blur_min: 0.0, ..Default::default() };
        for e in [&mut cfg.sleep, &mut cfg.wake] {
            e.hr.std = 0.0;
            e.br.std = 0.0;
            e.hr_conf.std = 0.0;
            e.movement.std = 0.0;
        }
        let s = synth_generate(&cfg).unwrap();
        for r in &s.series.records {
            let want = if r.label == Some(State::Sleep) { 58.0 } else { 72.0 };
            assert_eq!(r.hr, want);
        }
    }

    #[test]
    fn blur_interpolates_near_transitions() {
        let mut cfg = SynthConfig { seed: 2, blur_min: 4.0, ..Default::default() };
        for e in [&mut cfg.sleep, &mut cfg.wake] {
            e.hr.std = 0.0;
        }
        let s = synth_generate(&cfg).unwrap();
        let t = (s.transitions[0].timestamp / 30) as usize;
        let hr: Vec<f32> = s.series.records[t - 5..t + 5].iter().map(|r| r.hr).collect();
        assert_eq!(hr[0], 72.0);
        assert_eq!(hr[9], 58.0);
        assert!(hr.windows(2).all(|w| w[1] <= w[0]), "{hr:?}");
        assert!(hr[3] < 72.0 && hr[6] > 58.0);
    }

    #[test]
    fn sleep_fraction_converges() {
        let cfg = SynthConfig {
            seed: 77,
            record_hours: 500.0,
            mean_sleep_bout_min: 240.0,
            mean_wake_bout_min: 60.0,
            min_first_wake_min: 0.0,
            morning_wake_min: 0.0,
            ..Default::default()
        };
        let s = synth_generate(&cfg).unwrap();
        let frac = s.series.labels().iter().filter(|l| **l == Some(State::Sleep)).count() as f64 / s.series.len() as f64;
        assert!((frac - 0.8).abs() < 0.03, "{frac}");
    }

    #[test]
    fn invalid_configs() {
        assert!(synth_generate(&SynthConfig { record_hours: 0.5, ..Default::default() }).is_err());
        assert!(synth_generate(&SynthConfig { mean_wake_bout_min: 0.0, ..Default::default() }).is_err());
    }

    #[test]
    fn sidecar_round_trip() {
        let s = synth_generate(&SynthConfig::default()).unwrap();
        let mut buf = Vec::new();
        write_truth_sidecar(&s.transitions, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("kind,timestamp\nsleep_onset,"));
        assert_eq!(read_truth_sidecar(&buf[..]).unwrap(), s.transitions);
    }
}
