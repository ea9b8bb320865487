use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use somnoflow::data::SynthConfig;
use somnoflow::events::EventRuleConfig;
use somnoflow::model::{HeadConfig, ModelConfig, TrainingHyper};

use crate::error::CliError;

/// Sleep/wake classification and sleep-onset / wake-up detection from
/// per-epoch vital-sign features.
#[derive(Debug, Parser)]
#[command(name = "somnoflow", version)]
pub struct Cli {
    /// key=value file; its entries act as flags placed before the command line
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// More log output (-v info, -vv debug)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate labeled synthetic nights
    Synth(SynthArgs),
    /// Train a model on labeled epoch files
    Train(TrainArgs),
    /// Write the per-minute sleep probabilities of one night
    Infer(InferArgs),
    /// Detect sleep onset and wake time from a hypnogram
    Events(EventsArgs),
    /// Score a model against labeled nights
    Eval(EvalArgs),
    /// Retrain the fusion layers of a model on a new cohort
    Finetune(FinetuneArgs),
    /// Streaming inference over stdin or TCP
    Serve(ServeArgs),
    /// Write a plotting table for one night
    Plotdata(PlotdataArgs),
}

#[derive(Debug, Args)]
pub struct SeedArg {
    /// Random seed
    #[arg(long, env = "SOMNOFLOW_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    /// Sleep probability threshold
    #[arg(long, default_value_t = EventRuleConfig::default().threshold)]
    pub threshold: f32,
    /// Moving-median width in minutes (odd)
    #[arg(long, default_value_t = EventRuleConfig::default().median_width)]
    pub median_width: usize,
    /// Shorter interior runs are flipped (minutes)
    #[arg(long, default_value_t = EventRuleConfig::default().min_run)]
    pub min_run: usize,
    /// Sleep minutes needed to confirm an onset
    #[arg(long, default_value_t = EventRuleConfig::default().sleep_confirm)]
    pub sleep_confirm: usize,
    /// Contiguous awake minutes that reject an onset candidate
    #[arg(long, default_value_t = EventRuleConfig::default().awake_break)]
    pub awake_break: usize,
    /// Contiguous awake minutes needed after a wake candidate
    #[arg(long, default_value_t = EventRuleConfig::default().wake_confirm)]
    pub wake_confirm: usize,
    /// A later sleep run this long disqualifies a wake candidate
    #[arg(long, default_value_t = EventRuleConfig::default().reentry_run)]
    pub reentry_run: usize,
}

impl RuleArgs {
    pub fn config(&self) -> EventRuleConfig {
        EventRuleConfig {
            threshold: self.threshold,
            median_width: self.median_width,
            min_run: self.min_run,
            sleep_confirm: self.sleep_confirm,
            awake_break: self.awake_break,
            wake_confirm: self.wake_confirm,
            reentry_run: self.reentry_run,
        }
    }
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    #[arg(long, default_value_t = TrainingHyper::default().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = TrainingHyper::default().batch_size)]
    pub batch_size: usize,
    /// Training epochs
    #[arg(long, default_value_t = TrainingHyper::default().n_epochs)]
    pub epochs: usize,
    /// Weight of the per-head losses
    #[arg(long, default_value_t = TrainingHyper::default().aux_loss_weight)]
    pub aux_weight: f64,
    /// Epochs without improvement before stopping (0 disables)
    #[arg(long, default_value_t = TrainingHyper::default().early_stop_patience)]
    pub patience: usize,
    #[command(flatten)]
    pub seed: SeedArg,
}

impl HyperArgs {
    pub fn hyper(&self) -> TrainingHyper {
        TrainingHyper {
            lr: self.lr,
            batch_size: self.batch_size,
            n_epochs: self.epochs,
            aux_loss_weight: self.aux_weight,
            early_stop_patience: self.patience,
            seed: self.seed.seed,
        }
    }
}

/// How training windows are cut from the input files.
#[derive(Debug, Args)]
pub struct WindowArgs {
    /// Keep windows ending within this many hours of a state change
    #[arg(long, default_value_t = 1.0)]
    pub context_hours: f64,
    /// Random subsample of at most this many windows
    #[arg(long)]
    pub max_windows: Option<usize>,
    /// Carry values forward across gaps of up to two epochs
    #[arg(long)]
    pub fill_gaps: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Record length in hours
    #[arg(long, default_value_t = SynthConfig::default().record_hours)]
    pub hours: f64,
    /// Number of nights; subject i uses seed + i
    #[arg(long, default_value_t = 1)]
    pub subjects: usize,
    /// Mean sleep-bout duration in minutes
    #[arg(long, default_value_t = SynthConfig::default().mean_sleep_bout_min)]
    pub mean_sleep_bout: f64,
    /// Mean wake-bout duration in minutes
    #[arg(long, default_value_t = SynthConfig::default().mean_wake_bout_min)]
    pub mean_wake_bout: f64,
    /// Minutes over which features blend across a transition
    #[arg(long, default_value_t = SynthConfig::default().blur_min)]
    pub blur: f64,
    /// Output CSV, or a directory when --subjects is above 1
    #[arg(short, long)]
    pub out: PathBuf,
    /// Truth sidecar (default: next to the output with a .truth.csv suffix)
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[command(flatten)]
    pub seed: SeedArg,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled epoch CSV files
    #[arg(long, required = true, num_args = 1.., action = ArgAction::Set)]
    pub data: Vec<PathBuf>,
    /// Where to write the trained model
    #[arg(short, long)]
    pub model: PathBuf,
    /// Fraction of windows held out for validation
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    /// Convolution kernel width of each head
    #[arg(long, value_delimiter = ',', action = ArgAction::Set, default_values_t = default_kernels())]
    pub kernels: Vec<usize>,
    /// Filters per head
    #[arg(long, default_value_t = HeadConfig::with_kernel(3).n_filters)]
    pub filters: usize,
    /// Width of each head's fully connected layer
    #[arg(long, default_value_t = HeadConfig::with_kernel(3).fc_width)]
    pub fc_width: usize,
    #[arg(long, default_value_t = HeadConfig::with_kernel(3).dropout_rate)]
    pub dropout: f64,
    /// Hidden width of the fusion layer
    #[arg(long, default_value_t = ModelConfig::default().trunk_widths[0])]
    pub trunk_hidden: usize,
    /// Also write the training report as JSON
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(flatten)]
    pub windows: WindowArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

fn default_kernels() -> Vec<usize> {
    ModelConfig::default().heads.iter().map(|h| h.kernel_width).collect()
}

impl TrainArgs {
    pub fn model_config(&self) -> ModelConfig {
        let heads = self
            .kernels
            .iter()
            .map(|&k| HeadConfig {
                n_filters: self.filters,
                fc_width: self.fc_width,
                dropout_rate: self.dropout,
                ..HeadConfig::with_kernel(k)
            })
            .collect();
        ModelConfig {
            heads,
            trunk_widths: vec![self.trunk_hidden, 1],
            aux_loss_weight: self.hyper.aux_weight,
            seed: self.hyper.seed.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct InferArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    /// Epoch CSV of one night
    #[arg(long)]
    pub data: PathBuf,
    /// Hypnogram CSV (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fill_gaps: bool,
}

#[derive(Debug, Args)]
pub struct EventsArgs {
    /// Hypnogram CSV written by `infer`
    #[arg(long)]
    pub hypnogram: PathBuf,
    /// Events CSV (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    /// Also write the rule engine's decision trace as JSON
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[command(flatten)]
    pub rules: RuleArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    /// Labeled epoch CSV files, one night each
    #[arg(long, required = true, num_args = 1.., action = ArgAction::Set)]
    pub data: Vec<PathBuf>,
    /// Event matching tolerance in minutes
    #[arg(long, default_value_t = 15.0)]
    pub tolerance: f64,
    /// Score every labeled window instead of every minute
    #[arg(long)]
    pub per_window: bool,
    /// Also write the metric reports as CSV
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub fill_gaps: bool,
    #[command(flatten)]
    pub rules: RuleArgs,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Base model
    #[arg(short, long)]
    pub model: PathBuf,
    /// Labeled epoch CSV files of the new cohort
    #[arg(long, required = true, num_args = 1.., action = ArgAction::Set)]
    pub data: Vec<PathBuf>,
    /// Where to write the adapted model
    #[arg(short, long)]
    pub out: PathBuf,
    /// Also train each head's fully connected and prediction layers
    #[arg(long)]
    pub train_intermediate: bool,
    #[command(flatten)]
    pub windows: WindowArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(short, long)]
    pub model: PathBuf,
    /// Accept TCP connections on this address instead of reading stdin
    #[arg(long)]
    pub listen: Option<String>,
    /// Exit after serving this many connections
    #[arg(long)]
    pub max_connections: Option<usize>,
    #[command(flatten)]
    pub rules: RuleArgs,
}

#[derive(Debug, Args)]
pub struct PlotdataArgs {
    /// Hypnogram CSV written by `infer`
    #[arg(long)]
    pub hypnogram: PathBuf,
    /// Labeled epoch CSV for the truth column
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Plot CSV (default: stdout)
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub fill_gaps: bool,
    #[command(flatten)]
    pub rules: RuleArgs,
}

/// The clap command with every subcommand letting a later flag replace an
/// earlier one, which is what lets the command line beat the config file.
pub fn command() -> clap::Command {
    let mut cmd = Cli::command().args_override_self(true);
    let names: Vec<String> = cmd.get_subcommands().map(|s| s.get_name().to_string()).collect();
    for name in names {
        cmd = cmd.mut_subcommand(name, |s| s.args_override_self(true));
    }
    cmd
}

/// Finds `--config FILE` and splices the file's entries in as flags right
/// after the subcommand name, so anything on the command line comes later
/// and wins.
pub fn expand_config(argv: Vec<OsString>) -> Result<Vec<OsString>, CliError> {
    let mut config = None;
    let mut sub_at = None;
    let cmd = command();
    let mut i = 1;
    while i < argv.len() {
        let a = argv[i].to_string_lossy();
        if a == "--config" {
            config = argv.get(i + 1).map(PathBuf::from);
            i += 2;
            continue;
        }
        if let Some(v) = a.strip_prefix("--config=") {
            config = Some(PathBuf::from(v));
        } else if sub_at.is_none() && !a.starts_with('-') && cmd.find_subcommand(a.as_ref()).is_some() {
            sub_at = Some(i);
        }
        i += 1;
    }
    let (Some(path), Some(at)) = (config, sub_at) else {
        return Ok(argv);
    };
    let sub = cmd
        .find_subcommand(argv[at].to_string_lossy().as_ref())
        .expect("found above");
    let flags = config_flags(&path, sub, &cmd)?;
    let mut out = argv[..=at].to_vec();
    out.extend(flags.into_iter().map(OsString::from));
    out.extend_from_slice(&argv[at + 1..]);
    Ok(out)
}

fn config_flags(path: &Path, sub: &clap::Command, root: &clap::Command) -> Result<Vec<String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut flags = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| CliError::Invalid(format!("{}:{}: {reason}", path.display(), n + 1));
        let (key, value) = line.split_once('=').ok_or_else(|| bad("expected key=value"))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key == "config" {
            return Err(bad("config files cannot include other config files"));
        }
        let Some(arg) = sub.get_arguments().find(|a| a.get_long() == Some(key.as_str())) else {
            let known = root
                .get_subcommands()
                .any(|s| s.get_arguments().any(|a| a.get_long() == Some(key.as_str())));
            if !known {
                return Err(bad(&format!("unknown key `{key}`")));
            }
            log::debug!("config key `{key}` does not apply to `{}`", sub.get_name());
            continue;
        };
        if arg.get_action().takes_values() {
            flags.push(format!("--{key}"));
            flags.extend(value.split_whitespace().map(str::to_string));
        } else {
            match value {
                "true" | "yes" | "1" => flags.push(format!("--{key}")),
                "false" | "no" | "0" => {}
                _ => return Err(bad(&format!("`{key}` expects true or false"))),
            }
        }
    }
    Ok(flags)
}
