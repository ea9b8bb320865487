use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EPOCH_SECONDS;
use crate::error::{Error, Result};

/// Sleep/wake state. Sleep is the positive class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum State {
    Awake = 0,
    Sleep = 1,
}

impl State {
    pub fn from_bool(sleep: bool) -> Self {
        if sleep {
            State::Sleep
        } else {
            State::Awake
        }
    }

    pub fn is_sleep(self) -> bool {
        self == State::Sleep
    }

    pub fn as_u8(self) -> u8 {
        self as u8
    }

    fn parse(s: &str) -> Option<Option<State>> {
        match s.trim() {
            "" => Some(None),
            "0" | "awake" | "wake" => Some(Some(State::Awake)),
            "1" | "sleep" => Some(Some(State::Sleep)),
            _ => None,
        }
    }
}

impl fmt::Display for State {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_u8())
    }
}

/// One 30-second epoch of features.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// Seconds; consecutive records are exactly 30 s apart.
    pub timestamp: i64,
    pub hr: f32,
    pub br: f32,
    pub hr_conf: f32,
    pub movement: f32,
    /// `hr[i] - hr[i-1]`, zero for the first epoch.
    pub hr_diff: f32,
    pub label: Option<State>,
}

impl EpochRecord {
    pub fn features(&self) -> [f32; 5] {
        [self.hr, self.br, self.hr_conf, self.movement, self.hr_diff]
    }

    pub(crate) fn validate(&self) -> std::result::Result<(), String> {
        let vals = [self.hr, self.br, self.hr_conf, self.movement];
        if vals.iter().any(|v| !v.is_finite()) {
            return Err("non-finite feature value".into());
        }
        if self.hr < 0.0 || self.br < 0.0 {
            return Err(format!("negative rate (hr {}, br {})", self.hr, self.br));
        }
        if !(0.0..=1.0).contains(&self.hr_conf) {
            return Err(format!("hr_conf {} outside [0, 1]", self.hr_conf));
        }
        if self.movement < 0.0 {
            return Err(format!("negative movement {}", self.movement));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceTag {
    Ingested,
    Synthetic,
}

/// A gap-free run of epochs from one subject.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochSeries {
    pub subject: String,
    pub source: SourceTag,
    pub records: Vec<EpochRecord>,
}

impl EpochSeries {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn start_timestamp(&self) -> Option<i64> {
        self.records.first().map(|r| r.timestamp)
    }

    pub fn labels(&self) -> Vec<Option<State>> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn has_labels(&self) -> bool {
        !self.records.is_empty() && self.records.iter().all(|r| r.label.is_some())
    }
}

/// Fills `hr_diff` from successive heart rates.
pub fn compute_hr_diff(records: &mut [EpochRecord]) {
    let mut prev = None;
    for r in records {
        r.hr_diff = prev.map_or(0.0, |p| r.hr - p);
        prev = Some(r.hr);
    }
}

#[derive(Clone, Copy, Debug, Default)]
pub struct IngestOptions {
    /// Carry the last observation forward across gaps of at most two epochs.
    pub fill_gaps: bool,
}

const MAX_FILL_EPOCHS: i64 = 2;

/// Parses the epoch CSV (`timestamp,hr,br,hr_conf,movement[,label]`).
///
/// Data rows are numbered from 1 in error messages.
pub fn ingest_epochs<R: Read>(source: R, subject: &str, opts: IngestOptions) -> Result<EpochSeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(["timestamp", "hr", "br", "hr_conf", "movement"]) {
        *slot = col(name).ok_or_else(|| Error::Data(format!("missing column `{name}`")))?;
    }
    let label_col = col("label");

    let mut records: Vec<EpochRecord> = Vec::new();
    for (i, row) in rdr.records().enumerate() {
        let row_no = i + 1;
        let row = row?;
        let field = |c: usize| row.get(c).unwrap_or("");
        let num = |c: usize, name: &str| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| Error::Row {
                row: row_no,
                reason: format!("`{name}` is not a number: {:?}", field(c)),
            })
        };
        let timestamp = field(idx[0]).parse::<i64>().map_err(|_| Error::Row {
            row: row_no,
            reason: format!("timestamp is not an integer: {:?}", field(idx[0])),
        })?;
        let label = match label_col {
            Some(c) => State::parse(field(c)).ok_or_else(|| Error::Row {
                row: row_no,
                reason: format!("unknown label {:?}", field(c)),
            })?,
            None => None,
        };
        let rec = EpochRecord {
            timestamp,
            hr: num(idx[1], "hr")? as f32,
            br: num(idx[2], "br")? as f32,
            hr_conf: num(idx[3], "hr_conf")? as f32,
            movement: num(idx[4], "movement")? as f32,
            hr_diff: 0.0,
            label,
        };
        rec.validate().map_err(|reason| Error::Row { row: row_no, reason })?;

        if let Some(prev) = records.last().cloned() {
            let step = timestamp - prev.timestamp;
            if step <= 0 {
                return Err(Error::Row {
                    row: row_no,
                    reason: format!("timestamp {timestamp} does not increase (previous {})", prev.timestamp),
                });
            }
            if step != EPOCH_SECONDS {
                let missing = step / EPOCH_SECONDS - 1;
                let fillable = opts.fill_gaps && step % EPOCH_SECONDS == 0 && missing <= MAX_FILL_EPOCHS;
                if !fillable {
                    return Err(Error::Row {
                        row: row_no,
                        reason: format!("gap of {step} s after timestamp {}", prev.timestamp),
                    });
                }
                for k in 1..=missing {
                    records.push(EpochRecord {
                        timestamp: prev.timestamp + k * EPOCH_SECONDS,
                        ..prev.clone()
                    });
                }
            }
        }
        records.push(rec);
    }
    compute_hr_diff(&mut records);
    Ok(EpochSeries {
        subject: subject.to_string(),
        source: SourceTag::Ingested,
        records,
    })
}

/// Reads an epoch CSV file; the subject id is the file stem.
pub fn ingest_path(path: &Path, opts: IngestOptions) -> Result<EpochSeries> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let subject = path.file_stem().and_then(|s| s.to_str()).unwrap_or("subject");
    ingest_epochs(std::io::BufReader::new(file), subject, opts)
}

/// Writes the epoch CSV, with a label column when every record is labeled.
pub fn write_epochs_csv<W: Write>(series: &EpochSeries, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let labeled = series.has_labels();
    let mut header = vec!["timestamp", "hr", "br", "hr_conf", "movement"];
    if labeled {
        header.push("label");
    }
    w.write_record(&header)?;
    for r in &series.records {
        let mut row = vec![
            r.timestamp.to_string(),
            format!("{:.3}", r.hr),
            format!("{:.3}", r.br),
            format!("{:.4}", r.hr_conf),
            format!("{:.4}", r.movement),
        ];
        if let (true, Some(l)) = (labeled, r.label) {
            row.push(l.to_string());
        }
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io("<csv output>", e))?;
    Ok(())
}
