//! Confusion-matrix metrics, event matching with a time tolerance, multi-run
//! aggregation and plot-data export. Sleep is the positive class.

mod aggregate;
mod confusion;
mod matching;
mod night;
mod plotdata;

pub use aggregate::{aggregate_runs, MetricStat, RunSummary};
pub use confusion::{accuracy, confusion, precision, sensitivity, specificity, ConfusionCounts, MetricReport};
pub use matching::{events_of, match_events, Event, EventMatchResult, KindCounts, MatchedPair};
pub use night::{aligned_truth, minute_labels, score_night, truth_events, NightScore};
pub use plotdata::{emit_plotdata, read_plotdata, PlotRow};

/// Default event-matching tolerance: 15 minutes.
pub const DEFAULT_TOLERANCE_SECS: i64 = 15 * 60;
