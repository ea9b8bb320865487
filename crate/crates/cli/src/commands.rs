use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use somnoflow::data::{
    build_training_set, ingest_path, make_windows, synth_generate, write_epochs_csv, write_truth_sidecar,
    EpochSeries, FeatureWindow, IngestOptions, SynthConfig, WINDOW_STRIDE,
};
use somnoflow::events::{
    detect_events, postprocess, predict_events, read_hypnogram_csv, write_events_csv, write_hypnogram_csv,
    EventKind, Hypnogram,
};
use somnoflow::metrics::{
    aggregate_runs, aligned_truth, emit_plotdata, events_of, match_events, score_night, ConfusionCounts,
    MetricReport,
};
use somnoflow::model::{
    build_model, evaluate, finetune_transfer, load_model, predict_hypnogram, save_model, train, TrainReport,
};

use crate::args::*;
use crate::error::{CliError, Result};

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

/// A file, or stdout when no path (or `-`) is given.
fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    match path {
        Some(p) if p != Path::new("-") => Ok(Box::new(create(p)?)),
        _ => Ok(Box::new(std::io::stdout().lock())),
    }
}

fn finish(mut w: impl Write, path: Option<&Path>) -> Result<()> {
    w.flush()
        .map_err(|e| CliError::io(path.unwrap_or(Path::new("<stdout>")), e))
}

fn read_hypnogram(path: &Path) -> Result<Hypnogram> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(read_hypnogram_csv(std::io::BufReader::new(file))?)
}

fn load_series(paths: &[PathBuf], fill_gaps: bool) -> Result<Vec<EpochSeries>> {
    paths
        .iter()
        .map(|p| ingest_path(p, IngestOptions { fill_gaps }).map_err(CliError::from))
        .collect()
}

fn subsample<T: Clone>(items: Vec<T>, n: usize, seed: u64) -> Vec<T> {
    if items.len() <= n {
        return items;
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

fn training_windows(paths: &[PathBuf], w: &WindowArgs, seed: u64) -> Result<Vec<FeatureWindow>> {
    let series = load_series(paths, w.fill_gaps)?;
    let mut windows = build_training_set(&series, w.context_hours, seed)?;
    if let Some(n) = w.max_windows {
        windows = subsample(windows, n, seed);
    }
    log::info!("{} windows from {} file(s)", windows.len(), series.len());
    Ok(windows)
}

fn print_report(r: &TrainReport) {
    for e in &r.epochs {
        print!("epoch {:>3}  loss {:.4}  acc {:6.2}%", e.epoch, e.train_loss, 100.0 * e.train_accuracy);
        if let (Some(l), Some(a)) = (e.val_loss, e.val_accuracy) {
            print!("  val_loss {l:.4}  val_acc {:6.2}%", 100.0 * a);
        }
        println!();
    }
    println!("best epoch {} of {} ({:.1} s)", r.best_epoch, r.epochs.len(), r.wall_time_secs);
    println!("digest {}", r.digest);
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let base = SynthConfig {
        record_hours: a.hours,
        mean_sleep_bout_min: a.mean_sleep_bout,
        mean_wake_bout_min: a.mean_wake_bout,
        blur_min: a.blur,
        ..Default::default()
    };
    let night = |seed: u64, out: &Path, truth: &Path| -> Result<()> {
        let s = synth_generate(&SynthConfig { seed, ..base.clone() })?;
        let mut w = create(out)?;
        write_epochs_csv(&s.series, &mut w)?;
        finish(w, Some(out))?;
        let mut w = create(truth)?;
        write_truth_sidecar(&s.transitions, &mut w)?;
        finish(w, Some(truth))?;
        log::info!("wrote {} epochs to {}", s.series.len(), out.display());
        Ok(())
    };
    match a.subjects {
        0 => Err(CliError::Invalid("--subjects must be at least 1".into())),
        1 => {
            let truth = a.truth.clone().unwrap_or_else(|| a.out.with_extension("truth.csv"));
            night(a.seed.seed, &a.out, &truth)
        }
        n => {
            if a.truth.is_some() {
                return Err(CliError::Invalid("--truth applies to a single subject only".into()));
            }
            std::fs::create_dir_all(&a.out).map_err(|e| CliError::io(&a.out, e))?;
            for i in 0..n {
                let stem = format!("night_{i:03}");
                night(
                    a.seed.seed.wrapping_add(i as u64),
                    &a.out.join(format!("{stem}.csv")),
                    &a.out.join(format!("{stem}.truth.csv")),
                )?;
            }
            Ok(())
        }
    }
}

pub fn train_cmd(a: &TrainArgs) -> Result<()> {
    if !(0.0..1.0).contains(&a.val_fraction) {
        return Err(CliError::Invalid("--val-fraction must lie in [0, 1)".into()));
    }
    let hyper = a.hyper.hyper();
    let windows = training_windows(&a.data, &a.windows, hyper.seed)?;
    let n_val = (windows.len() as f64 * a.val_fraction).round() as usize;
    let mut idx: Vec<usize> = (0..windows.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(hyper.seed ^ 0x7a11));
    let mut is_val = vec![false; windows.len()];
    for &i in &idx[..n_val] {
        is_val[i] = true;
    }
    let (val, tr): (Vec<_>, Vec<_>) = windows.into_iter().zip(is_val).partition(|(_, v)| *v);
    let tr: Vec<FeatureWindow> = tr.into_iter().map(|(w, _)| w).collect();
    let val: Vec<FeatureWindow> = val.into_iter().map(|(w, _)| w).collect();

    let model = build_model(a.model_config())?;
    println!("training on {} windows, validating on {}, {} parameters", tr.len(), val.len(), model.n_params());
    let (model, report) = train(model, &tr, &val, &hyper)?;
    print_report(&report);
    save_model(&model, &a.model)?;
    println!("wrote {}", a.model.display());
    if let Some(p) = &a.report {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &report).map_err(|e| CliError::io(p, e.into()))?;
        finish(w, Some(p))?;
    }
    Ok(())
}

pub fn infer(a: &InferArgs) -> Result<()> {
    let model = load_model(&a.model)?;
    let series = ingest_path(&a.data, IngestOptions { fill_gaps: a.fill_gaps })?;
    let hyp = predict_hypnogram(&model, &series)?;
    let mut w = output(a.out.as_deref())?;
    write_hypnogram_csv(&hyp, &mut w)?;
    finish(w, a.out.as_deref())
}

pub fn events(a: &EventsArgs) -> Result<()> {
    let hyp = read_hypnogram(&a.hypnogram)?;
    let ev = predict_events(&hyp, &a.rules.config())?;
    let mut w = output(a.out.as_deref())?;
    write_events_csv(&ev, &mut w)?;
    finish(w, a.out.as_deref())?;
    if let Some(p) = &a.trace {
        let mut w = create(p)?;
        serde_json::to_writer_pretty(&mut w, &ev.trace).map_err(|e| CliError::io(p, e.into()))?;
        finish(w, Some(p))?;
    }
    Ok(())
}

fn print_section(title: &str, reports: &[MetricReport], pooled: &MetricReport) -> Result<()> {
    println!("== {title} ==");
    println!("{}", MetricReport::CSV_HEADER);
    for r in reports {
        println!("{}", r.csv_row());
    }
    println!();
    print!("{pooled}");
    print!("{}", aggregate_runs(reports)?);
    println!();
    Ok(())
}

pub fn eval(a: &EvalArgs) -> Result<()> {
    if a.tolerance.is_nan() || a.tolerance < 0.0 {
        return Err(CliError::Invalid("--tolerance must be non-negative".into()));
    }
    let tolerance_secs = (a.tolerance * 60.0).round() as i64;
    let rules = a.rules.config();
    let model = load_model(&a.model)?;
    let series = load_series(&a.data, a.fill_gaps)?;

    let mut state_reports = Vec::new();
    let mut pooled = ConfusionCounts::default();
    let (mut pred_events, mut truth_events) = (Vec::new(), Vec::new());
    for (i, s) in series.iter().enumerate() {
        let hyp = predict_hypnogram(&model, s)?;
        let night = score_night(&hyp, s, &rules)?;
        let counts = if a.per_window {
            let windows: Vec<_> = make_windows(s, model.config.window_epochs, WINDOW_STRIDE)?
                .into_iter()
                .filter(|w| w.label.is_some())
                .collect();
            let scored = evaluate(&model, &windows)?;
            ConfusionCounts::from_pairs(
                scored
                    .into_iter()
                    .zip(&windows)
                    .map(|((_, pred), w)| (pred, w.label.expect("filtered"))),
            )
        } else {
            night.counts
        };
        pooled.merge(&counts);
        state_reports.push(MetricReport::new(s.subject.clone(), counts));
        pred_events.extend(events_of(i, &night.predicted));
        truth_events.extend(events_of(i, &night.truth));
    }

    let unit = if a.per_window { "per window" } else { "per minute" };
    print_section(
        &format!("state classification ({unit})"),
        &state_reports,
        &MetricReport::new("pooled", pooled),
    )?;

    let matched = match_events(&pred_events, &truth_events, tolerance_secs);
    let event_reports: Vec<MetricReport> = (0..series.len())
        .map(|i| {
            let p: Vec<_> = pred_events.iter().filter(|e| e.record == i).copied().collect();
            let t: Vec<_> = truth_events.iter().filter(|e| e.record == i).copied().collect();
            MetricReport::new(series[i].subject.clone(), match_events(&p, &t, tolerance_secs).confusion(1))
        })
        .collect();
    print_section(
        &format!("event timing (tolerance {} min)", a.tolerance),
        &event_reports,
        &MetricReport::new("pooled", matched.confusion(series.len())),
    )?;
    for kind in [EventKind::SleepOnset, EventKind::WakeTime] {
        let k = matched.per_kind.get(&kind).copied().unwrap_or_default();
        let errs: Vec<f64> = matched.pairs.iter().filter(|p| p.kind == kind).map(|p| p.error_min).collect();
        let mae = if errs.is_empty() {
            "undefined".to_string()
        } else {
            format!("{:.2} min", errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64)
        };
        println!("{:<12} TP={} FP={} FN={}  mean |error| {mae}", kind.as_str(), k.tp, k.fp, k.fn_);
    }

    if let Some(p) = &a.csv {
        let mut w = create(p)?;
        let rows = std::iter::once(format!("section,{}", MetricReport::CSV_HEADER))
            .chain(state_reports.iter().map(|r| format!("state,{}", r.csv_row())))
            .chain(event_reports.iter().map(|r| format!("event,{}", r.csv_row())));
        for row in rows {
            writeln!(w, "{row}").map_err(|e| CliError::io(p, e))?;
        }
        finish(w, Some(p))?;
    }
    Ok(())
}

pub fn finetune(a: &FinetuneArgs) -> Result<()> {
    let mut model = load_model(&a.model)?;
    model.config.transfer_trains_intermediate = a.train_intermediate;
    let hyper = a.hyper.hyper();
    let windows = training_windows(&a.data, &a.windows, hyper.seed)?;
    let accuracy = |m: &somnoflow::SleepNet| -> Result<f64> {
        let scored = evaluate(m, &windows)?;
        let hits = scored.iter().zip(&windows).filter(|((_, s), w)| Some(*s) == w.label).count();
        Ok(100.0 * hits as f64 / windows.len().max(1) as f64)
    };
    let before = accuracy(&model)?;
    let (tuned, report) = finetune_transfer(model, &windows, &hyper)?;
    print_report(&report);
    println!("cohort accuracy {before:.2}% -> {:.2}%", accuracy(&tuned)?);
    save_model(&tuned, &a.out)?;
    println!("wrote {}", a.out.display());
    Ok(())
}

pub fn plotdata(a: &PlotdataArgs) -> Result<()> {
    let rules = a.rules.config();
    let hyp = read_hypnogram(&a.hypnogram)?;
    let truth = match &a.data {
        Some(p) => Some(aligned_truth(&ingest_path(p, IngestOptions { fill_gaps: a.fill_gaps })?, &hyp)?),
        None => None,
    };
    let binary = postprocess(&hyp, &rules)?;
    let ev = detect_events(&binary, &rules);
    let mut w = output(a.out.as_deref())?;
    emit_plotdata(&hyp, &binary, &ev, truth.as_deref(), &mut w)?;
    finish(w, a.out.as_deref())
}
