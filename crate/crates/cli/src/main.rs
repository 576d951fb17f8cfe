//! `sedmamba`: synthetic data, training, evaluation and complexity reports.

mod config;

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use sedmamba_core::complexity::{complexity, sweep_report};
use sedmamba_core::data::write_synth_dataset;
use sedmamba_core::metrics::{write_probability_csv, MetricsReport};
use sedmamba_core::model::Sedmamba;
use sedmamba_core::train::{continue_run, evaluate_model, load_checkpoint, Trainer};
use sedmamba_core::Error;

use config::{EvalSplit, RunConfig, Weights};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_NUMERIC: u8 = 4;
const EXIT_MONOTONICITY: u8 = 5;

#[derive(Parser)]
#[command(
    name = "sedmamba",
    version,
    about = "Surgical error detection with a selective state-space model"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset (embedding files + manifest.json).
    Synth(Common),
    /// Train a detector; writes checkpoints and an epoch log.
    Train(Common),
    /// Evaluate a checkpoint; writes metrics and per-video probabilities.
    Eval(Common),
    /// Parameter and FLOP breakdown of the configured model.
    Complexity(Common),
    /// Ablation sweep over blocks, G and FCTF depth; exits 5 on a
    /// monotonicity violation.
    Sweep(Common),
}

#[derive(Args)]
struct Common {
    /// RunConfig JSON; defaults apply to omitted sections.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Checkpoint to evaluate, or to resume training from.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for training and synthetic data (overrides `seed` in the config).
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for per-sequence evaluation.
    #[arg(long, default_value_t = 1)]
    workers: usize,
    /// Replace existing outputs.
    #[arg(long)]
    force: bool,
}

enum Failure {
    Core(Error),
    Monotonicity(Vec<String>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn exit_code(e: &Error) -> u8 {
    match e {
        _ if e.is_numeric() => EXIT_NUMERIC,
        Error::Config(_) | Error::Json(_) => EXIT_CONFIG,
        Error::Io { .. } | Error::Format { .. } | Error::Csv(_) => EXIT_DATA,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                // Display already includes the underlying cause.
                Failure::Core(e) => eprintln!("error: {e}"),
                Failure::Monotonicity(v) => {
                    for line in v {
                        eprintln!("monotonicity violation: {line}");
                    }
                }
            }
            ExitCode::from(failure_code(&f))
        }
    }
}

fn failure_code(f: &Failure) -> u8 {
    match f {
        Failure::Core(e) => exit_code(e),
        Failure::Monotonicity(_) => EXIT_MONOTONICITY,
    }
}

fn run(cli: Cli) -> CmdResult {
    let (common, cmd): (&Common, fn(&Common, RunConfig) -> CmdResult) = match &cli.command {
        Command::Synth(c) => (c, cmd_synth),
        Command::Train(c) => (c, cmd_train),
        Command::Eval(c) => (c, cmd_eval),
        Command::Complexity(c) => (c, cmd_complexity),
        Command::Sweep(c) => (c, cmd_sweep),
    };
    if common.workers == 0 {
        return Err(Error::Config("--workers must be at least 1".into()).into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(common.workers)
        .build_global()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cfg = cfg.resolve(common.seed, common.out.clone())?;
    cmd(common, cfg)
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), Error> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn cmd_synth(common: &Common, cfg: RunConfig) -> CmdResult {
    // Validate before touching the filesystem.
    cfg.data.synth.validate()?;
    let dir = cfg.output_dir()?.to_path_buf();
    let manifest = write_synth_dataset(&cfg.data.synth, &dir, common.force)?;
    cfg.write_resolved(&dir)?;
    println!(
        "wrote {} sequences ({} test) and manifest.json to {}",
        manifest.sequences.len(),
        cfg.data.synth.num_test,
        dir.display()
    );
    Ok(())
}

fn cmd_train(common: &Common, mut cfg: RunConfig) -> CmdResult {
    let dir = cfg.output_dir()?.to_path_buf();
    let trainer = match &common.checkpoint {
        Some(path) => {
            let ckpt = load_checkpoint(path)?;
            cfg.model = ckpt.model_config.clone();
            cfg.train = ckpt.train_config.clone();
            Trainer::from_checkpoint(ckpt)?
        }
        None => {
            let existing = ["final.sedc", "epochs.jsonl"].map(|f| dir.join(f));
            if !common.force {
                if let Some(p) = existing.iter().find(|p| p.exists()) {
                    return Err(Error::Config(format!(
                        "{} already exists; pass --force to overwrite or --checkpoint to resume",
                        p.display()
                    ))
                    .into());
                }
            }
            Trainer::new(cfg.model.clone(), cfg.train.clone())?
        }
    };
    let dataset = cfg.load_dataset()?;
    create_dir(&dir)?;
    cfg.write_resolved(&dir)?;

    let log_path = dir.join("epochs.jsonl");
    let mut prior = String::new();
    for entry in trainer.history() {
        prior.push_str(&serde_json::to_string(entry).map_err(Error::from)?);
        prior.push('\n');
    }
    write_text(&log_path, &prior)?;
    let mut log = OpenOptions::new()
        .append(true)
        .open(&log_path)
        .map_err(|e| Error::Io {
            path: log_path.clone(),
            source: e,
        })?;

    let total = trainer.config().epochs;
    let outcome = continue_run(trainer, &dataset, Some(&dir), |entry| {
        let line = serde_json::to_string(entry)?;
        writeln!(log, "{line}").map_err(|e| Error::Io {
            path: log_path.clone(),
            source: e,
        })?;
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.4}"));
        println!(
            "epoch {:>3}/{total}  loss {:.5}  val AUC {}  val AP {}  ({:.2}s)",
            entry.epoch,
            entry.train_loss,
            fmt(entry.val_auc),
            fmt(entry.val_ap),
            entry.seconds
        );
        Ok(())
    })?;

    #[derive(Serialize)]
    struct Summary<'a> {
        epochs: usize,
        best_epoch: Option<usize>,
        best: Option<&'a sedmamba_core::train::EpochLog>,
        final_epoch: Option<&'a sedmamba_core::train::EpochLog>,
    }
    let summary = Summary {
        epochs: outcome.history.len(),
        best_epoch: outcome.best_epoch,
        best: outcome.best_epoch.and_then(|e| outcome.history.get(e - 1)),
        final_epoch: outcome.history.last(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    checkpoint: PathBuf,
    weights: Weights,
    checkpoint_epoch: usize,
    split: EvalSplit,
    videos: Vec<String>,
    metrics: MetricsReport,
}

fn render_metrics(m: &MetricsReport) -> String {
    let f = |v: Option<f64>| v.map_or("null".to_string(), |x| format!("{:.2}", 100.0 * x));
    let c = &m.counts;
    format!(
        "metric     AUC (%)   AP (%)\n\
         frame      {:>7}  {:>7}\n\
         instance   {:>7}  {:>7}\n\
         short      {:>7}  {:>7}\n\
         long       {:>7}  {:>7}\n\
         videos {}, frames {} ({} error), instances {} error / {} normal, \
         short {} ({} frames), long {} ({} frames); short < {} frames\n",
        f(m.frame_auc),
        f(m.frame_ap),
        f(m.instance_auc),
        f(m.instance_ap),
        f(m.short_auc),
        f(m.short_ap),
        f(m.long_auc),
        f(m.long_ap),
        c.videos,
        c.frames,
        c.error_frames,
        c.error_instances,
        c.normal_instances,
        c.short_error_instances,
        c.short_error_frames,
        c.long_error_instances,
        c.long_error_frames,
        m.short_threshold_frames
    )
}

fn cmd_eval(common: &Common, mut cfg: RunConfig) -> CmdResult {
    let ckpt_path = common
        .checkpoint
        .clone()
        .ok_or_else(|| Error::Config("eval needs --checkpoint".into()))?;
    let dir = cfg.output_dir()?.to_path_buf();
    let ckpt = load_checkpoint(&ckpt_path)?;
    cfg.model = ckpt.model_config.clone();
    cfg.train = ckpt.train_config.clone();
    let (params, epoch) = match cfg.eval.weights {
        Weights::Final => (ckpt.params, ckpt.epoch),
        Weights::Best => match (ckpt.best_params, ckpt.best_epoch) {
            (Some(p), Some(e)) => (p, e),
            _ => {
                return Err(
                    Error::Config("checkpoint has no best-validation weights".into()).into(),
                )
            }
        },
    };
    let model = Sedmamba::from_params(ckpt.model_config, params)?;
    let dataset = cfg.load_dataset()?;
    let seqs = match cfg.eval.split {
        EvalSplit::Train => &dataset.train,
        EvalSplit::Val => &dataset.val,
        EvalSplit::Test => &dataset.test,
    };
    if seqs.is_empty() {
        return Err(Error::Config(format!("the {:?} split is empty", cfg.eval.split)).into());
    }
    let (preds, report) = evaluate_model(&model, seqs)?;
    create_dir(&dir)?;
    cfg.write_resolved(&dir)?;
    if cfg.eval.write_probabilities {
        let prob_dir = dir.join("probabilities");
        create_dir(&prob_dir)?;
        for p in &preds {
            write_probability_csv(
                &prob_dir.join(format!("{}.csv", p.video_id)),
                &p.labels,
                &p.probs,
            )?;
        }
    }
    let table = render_metrics(&report);
    let out = EvalOutput {
        checkpoint: ckpt_path,
        weights: cfg.eval.weights,
        checkpoint_epoch: epoch,
        split: cfg.eval.split,
        videos: preds.iter().map(|p| p.video_id.clone()).collect(),
        metrics: report,
    };
    write_json(&dir.join("metrics.json"), &out)?;
    write_text(&dir.join("metrics.txt"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_complexity(_common: &Common, cfg: RunConfig) -> CmdResult {
    let report = complexity(&cfg.model, cfg.complexity.reference_len)?;
    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        cfg.write_resolved(dir)?;
        write_json(&dir.join("complexity.json"), &report)?;
        write_text(&dir.join("complexity.txt"), &report.to_table())?;
    }
    print!("{}", report.to_table());
    Ok(())
}

fn cmd_sweep(_common: &Common, cfg: RunConfig) -> CmdResult {
    let report = sweep_report(&cfg.model, cfg.complexity.reference_len)?;
    if let Some(dir) = &cfg.output_dir {
        create_dir(dir)?;
        cfg.write_resolved(dir)?;
        write_json(&dir.join("sweep.json"), &report)?;
        write_text(&dir.join("sweep.txt"), &report.to_table())?;
    }
    print!("{}", report.to_table());
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(Failure::Monotonicity(report.violations))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct_per_failure_class() {
        let numeric = Error::NumericAbort {
            epoch: 3,
            sequence: "v".into(),
            source: Box::new(Error::NonFinite { op: "matmul" }),
        };
        let codes = [
            failure_code(&Failure::Core(Error::Config("x".into()))),
            failure_code(&Failure::Core(Error::Format {
                path: "f".into(),
                detail: "d".into(),
            })),
            failure_code(&Failure::Core(numeric)),
            failure_code(&Failure::Monotonicity(vec!["blocks".into()])),
        ];
        assert_eq!(
            codes,
            [EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_MONOTONICITY]
        );
    }
}
