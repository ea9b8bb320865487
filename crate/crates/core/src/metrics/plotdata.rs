use std::io::{Read, Write};

use crate::data::State;
use crate::error::{Error, Result};
use crate::events::{BinaryHypnogram, EventKind, Hypnogram, SleepEvents};

/// One row of the plot-data CSV.
#[derive(Clone, Debug, PartialEq)]
pub struct PlotRow {
    pub minute: usize,
    pub timestamp: i64,
    pub probability: Option<f64>,
    pub binarized: Option<u8>,
    pub truth: Option<u8>,
    pub event: Option<EventKind>,
}

const HEADER: [&str; 7] = ["row", "minute", "timestamp", "probability", "binarized", "truth", "event"];

/// Writes one `data` row per minute followed by one `event` marker row per
/// detected event.
pub fn emit_plotdata<W: Write>(
    hyp: &Hypnogram,
    binarized: &BinaryHypnogram,
    events: &SleepEvents,
    truth: Option<&[State]>,
    out: W,
) -> Result<()> {
    if binarized.len() != hyp.len() || truth.is_some_and(|t| t.len() != hyp.len()) {
        return Err(Error::Data("plot series are not aligned".into()));
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for (m, p) in hyp.probs.iter().enumerate() {
        w.write_record([
            "data".to_string(),
            m.to_string(),
            hyp.timestamp(m).to_string(),
            format!("{p:.6}"),
            binarized.states[m].to_string(),
            truth.map(|t| t[m].to_string()).unwrap_or_default(),
            String::new(),
        ])?;
    }
    let idx = [(EventKind::SleepOnset, events.onset_index), (EventKind::WakeTime, events.wake_index)];
    for (kind, i) in idx {
        if let Some(m) = i {
            w.write_record([
                "event",
                &m.to_string(),
                &hyp.timestamp(m).to_string(),
                "",
                "",
                "",
                kind.as_str(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<plot output>", e))?;
    Ok(())
}

pub fn read_plotdata<R: Read>(src: R) -> Result<Vec<PlotRow>> {
    let mut rdr = csv::Reader::from_reader(src);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::Row {
            row: i + 1,
            reason: format!("bad {what}"),
        };
        let opt = |k: usize| rec.get(k).filter(|s| !s.is_empty());
        rows.push(PlotRow {
            minute: opt(1).and_then(|s| s.parse().ok()).ok_or_else(|| bad("minute"))?,
            timestamp: opt(2).and_then(|s| s.parse().ok()).ok_or_else(|| bad("timestamp"))?,
            probability: opt(3).map(|s| s.parse().map_err(|_| bad("probability"))).transpose()?,
            binarized: opt(4).map(|s| s.parse().map_err(|_| bad("binarized"))).transpose()?,
            truth: opt(5).map(|s| s.parse().map_err(|_| bad("truth"))).transpose()?,
            event: opt(6).map(|s| EventKind::parse(s).ok_or_else(|| bad("event"))).transpose()?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{predict_events, postprocess, EventRuleConfig};

    #[test]
    fn rows_and_round_trip() {
        let probs: Vec<f32> = (0..200).map(|m| if (30..170).contains(&m) { 0.912_345_7 } else { 0.0312 }).collect();
        let h = Hypnogram::new(600, probs.clone()).unwrap();
        let cfg = EventRuleConfig::default();
        let b = postprocess(&h, &cfg).unwrap();
        let ev = predict_events(&h, &cfg).unwrap();
        let truth: Vec<State> = (0..200).map(|m| State::from_bool((30..170).contains(&m))).collect();
        let mut buf = Vec::new();
        emit_plotdata(&h, &b, &ev, Some(&truth), &mut buf).unwrap();
        let rows = read_plotdata(&buf[..]).unwrap();
        assert_eq!(rows.len(), 202);
        for (r, p) in rows.iter().zip(&probs) {
            assert!((r.probability.unwrap() - *p as f64).abs() < 5e-7);
        }
        assert_eq!(rows[200].event, Some(EventKind::SleepOnset));
        assert_eq!(rows[200].minute, 30);
        assert_eq!(rows[201].event, Some(EventKind::WakeTime));
    }

    #[test]
    fn no_events_no_markers() {
        let h = Hypnogram::new(0, vec![0.1; 12]).unwrap();
        let b = postprocess(&h, &EventRuleConfig::default()).unwrap();
        let mut buf = Vec::new();
        emit_plotdata(&h, &b, &SleepEvents::default(), None, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 13);
        assert!(!text.contains("event,"));
    }
}
