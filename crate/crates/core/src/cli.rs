//! The `odl` command line tool.
//!
//! Settings resolve as flags, then the `--config` JSON file, then
//! defaults. All randomness derives from `--seed`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::datasets::{build_task, load_cooling_fan, Environment, FanScene, LabeledStream, SampleSource, TaskName};
use crate::energymodel::{workload_sweep, write_sweep_csv, CaseId, PowerProfile};
use crate::ensemble::{replay, EnsembleConfig, MovingAverageDrift, OdlEnsemble, ReplayOptions};
use crate::error::{OdlError, Result};
use crate::eval::{evaluate, summarize, EvalOptions, Method};
use crate::exec::Exec;
use crate::metrics::auc;
use crate::oselm::DEFAULT_DELTA;
use crate::preprocess::{self, DownsampleMode, PreprocessConfig};
use crate::record::DetectionRecord;

#[derive(Debug, Parser)]
#[command(name = "odl", version, about = "On-device learning anomaly detection toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// Seed for every random draw.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Input (and output) size of the autoencoders.
    #[arg(long, global = true)]
    pub n: Option<usize>,
    /// Hidden nodes per instance.
    #[arg(long, global = true)]
    pub hidden: Option<usize>,
    /// Number of ensemble instances.
    #[arg(long, global = true)]
    pub instances: Option<usize>,
    /// Regularisation of the initial inverse covariance, P0 = I / delta.
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Power profile JSON for the energy model.
    #[arg(long, global = true)]
    pub profile: Option<PathBuf>,
    /// Refuse init segments shorter than the hidden size.
    #[arg(long, global = true)]
    pub strict_init: bool,
    /// Use the data-parallel code paths.
    #[arg(long, global = true)]
    pub parallel: bool,
    /// JSON file with defaults for the flags above.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

/// Contents of a `--config` file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub n: Option<usize>,
    pub hidden: Option<usize>,
    pub instances: Option<usize>,
    pub delta: Option<f64>,
    pub profile: Option<PathBuf>,
    pub strict_init: Option<bool>,
    pub parallel: Option<bool>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub n: Option<usize>,
    pub hidden: usize,
    pub instances: usize,
    pub delta: f64,
    pub profile: Option<PathBuf>,
    pub strict_init: bool,
    pub parallel: bool,
    /// Whether `hidden` / `instances` were set explicitly rather than defaulted.
    pub shape_explicit: (bool, bool),
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs) -> Result<Self> {
        let file = match &args.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| OdlError::io(p, e))?;
                serde_json::from_str::<FileConfig>(&text)
                    .map_err(|e| OdlError::config(format!("config {}: {e}", p.display())))?
            }
            None => FileConfig::default(),
        };
        let cfg = Self {
            seed: args.seed.or(file.seed).unwrap_or(0),
            n: args.n.or(file.n),
            hidden: args.hidden.or(file.hidden).unwrap_or(32),
            instances: args.instances.or(file.instances).unwrap_or(4),
            delta: args.delta.or(file.delta).unwrap_or(DEFAULT_DELTA),
            profile: args.profile.clone().or(file.profile),
            strict_init: args.strict_init || file.strict_init.unwrap_or(false),
            parallel: args.parallel || file.parallel.unwrap_or(false),
            shape_explicit: (
                args.hidden.or(file.hidden).is_some(),
                args.instances.or(file.instances).is_some(),
            ),
        };
        if cfg.hidden == 0 || cfg.instances == 0 || cfg.n == Some(0) {
            return Err(OdlError::config("model shape must be positive"));
        }
        Ok(cfg)
    }

    pub fn exec(&self) -> Exec {
        if self.parallel {
            Exec::Parallel
        } else {
            Exec::Sequential
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn raw acceleration windows into magnitude spectra (JSONL).
    Preprocess(PreprocessArgs),
    /// Write an annotated stream for a task: init segment, then predict.
    Synth(SynthArgs),
    /// Replay an annotated stream through an ensemble.
    Run(RunArgs),
    /// Evaluate a method on a task and print metric reports.
    Eval(EvalArgs),
    /// Workload sweep of the node energy model (CSV).
    Energy(EnergyArgs),
    /// Checkpoint utilities.
    #[command(subcommand)]
    Checkpoint(CheckpointCommand),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Mean,
    Max,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Samples per window (power of two).
    #[arg(long, default_value_t = 1024)]
    pub window: usize,
    #[arg(long, default_value_t = 1024.0)]
    pub sample_rate: f64,
    #[arg(long, default_value_t = 2)]
    pub downsample: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Mean)]
    pub downsample_mode: ModeArg,
    /// Divide every bin by this value after downsampling.
    #[arg(long)]
    pub scale: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub output: PathBuf,
    /// Use the cooling-fan recordings under this directory instead of the
    /// synthetic scene.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Annotated stream (JSONL of {spectrum, label, segment}).
    #[arg(long)]
    pub stream: PathBuf,
    #[arg(long)]
    pub checkpoint_in: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint_out: PathBuf,
    /// Detections as JSONL.
    #[arg(long)]
    pub detections: PathBuf,
    /// Detections as concatenated 20-byte records.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub device_id: u32,
    /// Timestamp of the first sample; later samples add `period` seconds each.
    #[arg(long, default_value_t = 1_700_000_000)]
    pub start_epoch: u32,
    #[arg(long, default_value_t = 1)]
    pub period: u32,
    /// Enable the moving-average drift trigger with this window.
    #[arg(long)]
    pub drift_window: Option<usize>,
    #[arg(long, default_value_t = 3.0)]
    pub drift_threshold: f64,
    /// Samples trained after a drift trigger.
    #[arg(long, default_value_t = 0)]
    pub retrain: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub task: String,
    #[arg(long)]
    pub method: String,
    /// Cooling-fan recordings; the synthetic scene is used when absent.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub scenarios: usize,
    /// Write reports here instead of stdout.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EnergyArgs {
    /// Operations per hour, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "1,6,60,600,3600")]
    pub ops: Vec<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum CheckpointCommand {
    /// Print a summary of a checkpoint.
    Inspect { path: PathBuf },
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| OdlError::io(path, e))
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(create(p)?),
        None => Box::new(std::io::stdout().lock()),
    })
}

fn load_source(dataset: Option<&Path>, cfg: &RunConfig) -> Result<Box<dyn SampleSource>> {
    match dataset {
        Some(p) => Ok(Box::new(load_cooling_fan(p)?)),
        None => {
            let scene = FanScene::default();
            if let Some(n) = cfg.n {
                if n != scene.spectrum_len {
                    return Err(OdlError::config(format!(
                        "the synthetic scene produces {} bins, --n is {n}",
                        scene.spectrum_len
                    )));
                }
            }
            Ok(Box::new(scene))
        }
    }
}

pub fn cmd_preprocess(args: &PreprocessArgs, cfg: &RunConfig) -> Result<usize> {
    let windows = preprocess::read_windows(&args.input, args.window, args.sample_rate)?;
    if windows.is_empty() {
        return Err(OdlError::format(&args.input, None, "no windows found"));
    }
    let pcfg = PreprocessConfig {
        downsample_factor: args.downsample,
        downsample_mode: match args.downsample_mode {
            ModeArg::Mean => DownsampleMode::Mean,
            ModeArg::Max => DownsampleMode::Max,
        },
        scale_divisor: args.scale,
    };
    let spectra = preprocess::pipeline_batch(&windows, &pcfg, cfg.exec())?;
    let out = create(&args.output)?;
    preprocess::write_spectra(out, &spectra).map_err(|e| OdlError::io(&args.output, e))?;
    Ok(spectra.len())
}

pub fn cmd_synth(args: &SynthArgs, cfg: &RunConfig) -> Result<usize> {
    let task: TaskName = args.task.parse()?;
    let source = load_source(args.dataset.as_deref(), cfg)?;
    let data = build_task(task, source.as_ref(), cfg.seed)?;
    let mut samples = data.train.samples;
    samples.extend(data.eval.samples);
    let stream = LabeledStream::new(task.as_str(), Environment::Noisy, samples)?;
    let out = create(&args.output)?;
    stream.write_jsonl(out).map_err(|e| OdlError::io(&args.output, e))?;
    Ok(stream.len())
}

#[derive(Debug, Clone, Serialize)]
struct DetectionLine {
    seq: u32,
    index: usize,
    epoch_seconds: u32,
    score: f64,
    class: usize,
    mode: crate::ensemble::Mode,
    drift: bool,
    label: crate::datasets::Label,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub samples: usize,
    pub init_samples: usize,
    pub detections: usize,
    pub trained_total: u64,
    pub mode_switches: usize,
    pub drift_triggers: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
}

pub fn cmd_run(args: &RunArgs, cfg: &RunConfig) -> Result<RunSummary> {
    let stream = LabeledStream::read_jsonl(&args.stream, "stream", Environment::Noisy)?;
    let dim = stream.dim();
    if let Some(n) = cfg.n {
        if n != dim {
            return Err(OdlError::config(format!("--n is {n} but the stream has {dim} bins")));
        }
    }
    let mut ens: OdlEnsemble<f64> = match &args.checkpoint_in {
        Some(p) => {
            let ens = Checkpoint::load(p)?.to_ensemble::<f64>()?;
            let c = ens.config();
            if c.inputs != dim {
                return Err(OdlError::config(format!(
                    "checkpoint expects {} inputs but the stream has {dim} bins",
                    c.inputs
                )));
            }
            let (h, k) = cfg.shape_explicit;
            if (h && c.hidden != cfg.hidden) || (k && c.instances != cfg.instances) {
                return Err(OdlError::config(format!(
                    "checkpoint shape (N = {}, K = {}) differs from the requested (N = {}, K = {})",
                    c.hidden, c.instances, cfg.hidden, cfg.instances
                )));
            }
            ens
        }
        None => OdlEnsemble::new(EnsembleConfig {
            inputs: dim,
            hidden: cfg.hidden,
            instances: cfg.instances,
            delta: cfg.delta,
            seed: cfg.seed,
        })?,
    };

    let drift = match args.drift_window {
        Some(w) => Some(Box::new(MovingAverageDrift::new(w, args.drift_threshold)?) as Box<_>),
        None => None,
    };
    let opts = ReplayOptions {
        exec: cfg.exec(),
        strict_init: cfg.strict_init,
        drift,
        retrain_samples: args.retrain,
    };
    let input: Vec<_> = stream.samples.iter().map(|s| (s.spectrum.clone(), s.segment)).collect();
    let summary = replay(&mut ens, &input, opts)?;

    let mut jsonl = create(&args.detections)?;
    let mut bin = args.records.as_deref().map(create).transpose()?;
    let mut scores = Vec::new();
    let mut anomalous = Vec::new();
    for (seq, ev) in summary.events.iter().enumerate() {
        let seq = seq as u32;
        let epoch = args
            .start_epoch
            .wrapping_add((ev.index as u32).wrapping_mul(args.period));
        let label = stream.samples[ev.index].label;
        let line = DetectionLine {
            seq,
            index: ev.index,
            epoch_seconds: epoch,
            score: ev.detection.score,
            class: ev.detection.class,
            mode: ev.detection.mode,
            drift: ev.drift,
            label,
        };
        serde_json::to_writer(&mut jsonl, &line).map_err(|e| OdlError::io(&args.detections, e.into()))?;
        jsonl.write_all(b"\n").map_err(|e| OdlError::io(&args.detections, e))?;
        if let (Some(w), Some(p)) = (bin.as_mut(), args.records.as_deref()) {
            let rec = DetectionRecord::from_detection(args.device_id, seq, epoch, &ev.detection)?;
            w.write_all(&rec.to_bytes()).map_err(|e| OdlError::io(p, e))?;
        }
        if ev.detection.mode == crate::ensemble::Mode::Predict {
            match label {
                crate::datasets::Label::Normal => anomalous.push(false),
                crate::datasets::Label::Anomalous => anomalous.push(true),
                crate::datasets::Label::Class(_) => continue,
            }
            scores.push(ev.detection.score);
        }
    }
    jsonl.flush().map_err(|e| OdlError::io(&args.detections, e))?;
    if let (Some(mut w), Some(p)) = (bin, args.records.as_deref()) {
        w.flush().map_err(|e| OdlError::io(p, e))?;
    }
    Checkpoint::from_ensemble(&ens).save(&args.checkpoint_out)?;

    Ok(RunSummary {
        samples: stream.len(),
        init_samples: summary.init_samples,
        detections: summary.events.len(),
        trained_total: ens.total_trained(),
        mode_switches: summary.mode_switches.len(),
        drift_triggers: summary.events.iter().filter(|e| e.drift).count(),
        auc: auc(&scores, &anomalous).ok(),
    })
}

pub fn cmd_eval(args: &EvalArgs, cfg: &RunConfig) -> Result<Vec<crate::metrics::MetricReport>> {
    let task: TaskName = args.task.parse()?;
    let method: Method = args.method.parse()?;
    let source = load_source(args.dataset.as_deref(), cfg)?;
    if let Some(n) = cfg.n {
        if n != source.dim() {
            return Err(OdlError::config(format!("--n is {n} but the source has {} bins", source.dim())));
        }
    }
    let opts = EvalOptions {
        hidden: cfg.hidden,
        instances: cfg.instances,
        delta: cfg.delta,
        seed: cfg.seed,
        scenarios: args.scenarios,
        exec: cfg.exec(),
    };
    let outcomes = evaluate(task, method, source.as_ref(), &opts)?;
    if let Some((mean, sd)) = summarize(&outcomes) {
        log::info!("{task} {method}: mean {mean:.4}, sd {sd:.4} over {} scenarios", outcomes.len());
    }
    let reports: Vec<_> = outcomes.into_iter().map(|o| o.report).collect();
    let mut out = open_output(args.output.as_deref())?;
    let target = args.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    for r in &reports {
        serde_json::to_writer(&mut out, r).map_err(|e| OdlError::io(&target, e.into()))?;
        out.write_all(b"\n").map_err(|e| OdlError::io(&target, e))?;
    }
    out.flush().map_err(|e| OdlError::io(&target, e))?;
    Ok(reports)
}

pub fn cmd_energy(args: &EnergyArgs, cfg: &RunConfig) -> Result<usize> {
    let profile = match &cfg.profile {
        Some(p) => PowerProfile::from_json_file(p)?,
        None => PowerProfile::default(),
    };
    let rows = workload_sweep(&CaseId::ALL, &profile, &args.ops)?;
    let out = open_output(args.output.as_deref())?;
    let target = args.output.clone().unwrap_or_else(|| PathBuf::from("<stdout>"));
    write_sweep_csv(out, &rows).map_err(|e| OdlError::io(&target, e))?;
    Ok(rows.len())
}

pub fn cmd_checkpoint_inspect(path: &Path) -> Result<serde_json::Value> {
    let ck = Checkpoint::load(path)?;
    let summary = match &ck.model {
        crate::checkpoint::ModelState::OdlEnsemble(s) => serde_json::json!({
            "model_kind": ck.kind(),
            "format_version": ck.format_version,
            "precision": s.precision,
            "n": s.n,
            "N": s.hidden,
            "m": s.m,
            "K": s.instances.len(),
            "seed": s.seed,
            "delta": s.delta,
            "mode": s.mode,
            "initialized": s.initialized,
            "trained_count": s.instances.iter().map(|i| i.trained_count).collect::<Vec<_>>(),
        }),
        crate::checkpoint::ModelState::Mlp(s) => serde_json::json!({
            "model_kind": ck.kind(),
            "format_version": ck.format_version,
            "layer_sizes": s.layer_sizes,
            "output": s.output,
        }),
    };
    Ok(summary)
}

fn dispatch(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::resolve(&cli.common)?;
    match &cli.command {
        Command::Preprocess(a) => {
            let n = cmd_preprocess(a, &cfg)?;
            eprintln!("wrote {n} spectra to {}", a.output.display());
        }
        Command::Synth(a) => {
            let n = cmd_synth(a, &cfg)?;
            eprintln!("wrote {n} samples to {}", a.output.display());
        }
        Command::Run(a) => {
            let s = cmd_run(a, &cfg)?;
            println!("{}", serde_json::to_string(&s).expect("summary serialises"));
        }
        Command::Eval(a) => {
            cmd_eval(a, &cfg)?;
        }
        Command::Energy(a) => {
            cmd_energy(a, &cfg)?;
        }
        Command::Checkpoint(CheckpointCommand::Inspect { path }) => {
            let v = cmd_checkpoint_inspect(path)?;
            println!("{}", serde_json::to_string_pretty(&v).expect("summary serialises"));
        }
    }
    Ok(())
}

/// Parse `args` (program name first), run the command and return the
/// process exit code: 0 success, 1 usage or configuration, 2 I/O or
/// format, 3 numerical failure.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, OdlError::Config(_) | OdlError::InvalidInput(_)) && matches!(cli.command, Command::Eval(_)) {
                eprintln!("usage: odl eval --task <TASK> --method <METHOD> [--dataset <DIR>] [--scenarios <N>]");
            }
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(args: &[&str]) -> Cli {
        Cli::try_parse_from(std::iter::once("odl").chain(args.iter().copied())).unwrap()
    }

    #[test]
    fn precedence_is_flag_then_file_then_default() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.json");
        std::fs::write(&p, r#"{"seed": 5, "hidden": 16, "parallel": true}"#).unwrap();
        let cli = parse(&["--config", p.to_str().unwrap(), "--seed", "9", "energy"]);
        let cfg = RunConfig::resolve(&cli.common).unwrap();
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.hidden, 16);
        assert_eq!(cfg.instances, 4);
        assert!(cfg.parallel);

        std::fs::write(&p, r#"{"sead": 5}"#).unwrap();
        let cli = parse(&["--config", p.to_str().unwrap(), "energy"]);
        assert!(RunConfig::resolve(&cli.common).is_err());
    }

    #[test]
    fn usage_errors_exit_with_one() {
        assert_eq!(run(["odl", "frobnicate"]), 1);
        assert_eq!(run(["odl", "eval", "--task", "0rpm", "--method", "svm"]), 1);
        assert_eq!(run(["odl", "--help"]), 0);
    }
}
