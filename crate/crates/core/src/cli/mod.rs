//! Command-line front end: `neoseize <subcommand> [flags]`.

mod config;
mod svg;

pub use config::{parse_range, RunConfig, RUN_CONFIG_FILE};
pub use svg::{ramp_color, render_svg, PlotKind};

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{ArgAction, Parser, Subcommand};

use crate::autograd::Tensor;
use crate::eeg_data::{
    annotation_path, load_annotations, load_dataset, load_record, subject_seed, subsample_strong, synth_dataset,
    write_dataset, AnnotationSet, EegRecord,
};
use crate::error::{Error, Result};
use crate::fcn::{count_params, load_model, receptive_field, save_model, FcnConfig, FcnMode, FcnModel};
use crate::metrics::{aggregate, roc_curve, roc_to_csv, summary_to_csv, AggregateMode, SubjectScores, Summary};
use crate::postproc::{channels_to_csv, trace_to_csv};
use crate::preprocess::segment_windows;
use crate::trainer::{evaluate_subject, folds_to_csv, loo_harness, prepare_records, train_on_subjects, Dataset, LooResult};

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "NEOSEIZE_THREADS";

#[derive(Debug, Parser)]
#[command(name = "neoseize", version, about = "Fully convolutional seizure detection for multichannel EEG")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// fcn1d or fcn2d.
    #[arg(long, global = true)]
    mode: Option<String>,
    /// Feature-extraction blocks; `a..b` ranges for sweep and rf.
    #[arg(long, global = true)]
    blocks: Option<String>,
    /// Pool stride; `a..b` ranges for sweep and rf.
    #[arg(long = "pool-stride", global = true)]
    pool_stride: Option<String>,
    /// Repeats per sweep point.
    #[arg(long, global = true)]
    repeats: Option<usize>,
    /// Dataset directory.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// Model file(s), comma separated.
    #[arg(long, global = true)]
    model: Option<String>,
    /// Single record file.
    #[arg(long, global = true)]
    record: Option<PathBuf>,
    /// Write the main CSV to standard output.
    #[arg(long, global = true)]
    stdout: bool,
    /// Extra setting, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[arg(short, long, action = ArgAction::Count, global = true)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Synth,
    /// Band-pass and resample a dataset to the model rate.
    Preprocess,
    /// Train on every subject of a dataset and save the model(s).
    Train,
    /// Score saved model(s) on records with annotations.
    Eval,
    /// Leave-one-subject-out cross-validation.
    Loo,
    /// Grid over blocks and pool stride with repeated LOO runs.
    Sweep,
    /// Receptive field and parameter count.
    Rf,
    /// Per-sample seizure probability of a record segment.
    Heatmap,
}

/// Runs the command line `argv` (program name first); returns the exit
/// code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("neoseize: error: {e}");
            1
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else { return Ok(()) };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got {v:?}")))?;
    // A pool that already exists (repeated calls in one process) is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.merge_file(path)?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
        cfg.set(k.trim(), v)?;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(m) = &cli.mode {
        cfg.set("model.mode", m)?;
    }
    if let Some(d) = &cli.data {
        cfg.data = Some(d.clone());
    }
    if let Some(m) = &cli.model {
        cfg.set("model", m)?;
    }
    if let Some(r) = &cli.record {
        cfg.record = Some(r.clone());
    }
    if let Some(r) = cli.repeats {
        cfg.sweep_repeats = r;
    }
    let ranged = matches!(cli.command, Command::Sweep | Command::Rf);
    let apply = |flag: &str, value: &Option<String>, single: &mut usize, range: &mut RangeInclusive<usize>| -> Result<()> {
        let Some(v) = value else { return Ok(()) };
        let r = parse_range(flag, v)?;
        if r.start() == r.end() {
            *single = *r.start();
        } else if !ranged {
            return Err(Error::Config(format!("{flag} {v}: ranges are only accepted by sweep and rf")));
        }
        *range = r;
        Ok(())
    };
    apply("--blocks", &cli.blocks, &mut cfg.n_blocks, &mut cfg.sweep_blocks)?;
    apply("--pool-stride", &cli.pool_stride, &mut cfg.pool_stride, &mut cfg.sweep_pool_strides)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Writes outputs into the run directory and, with `--stdout`, the main
/// CSV to standard output. Progress text goes to stderr in that case.
struct Sink {
    dir: PathBuf,
    stdout: bool,
}

impl Sink {
    fn file(&self, name: &str, content: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        std::fs::write(&path, content).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    fn main_csv(&self, name: &str, content: &str) -> Result<()> {
        self.file(name, content)?;
        if self.stdout {
            let mut out = std::io::stdout().lock();
            out.write_all(content.as_bytes()).map_err(|e| Error::io("<stdout>", e))?;
        }
        Ok(())
    }

    fn say(&self, msg: impl AsRef<str>) {
        if self.stdout {
            eprintln!("{}", msg.as_ref());
        } else {
            println!("{}", msg.as_ref());
        }
    }
}

fn execute(cli: &Cli) -> Result<()> {
    configure_threads()?;
    let cfg = resolve(cli)?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| Error::io(&cfg.out, e))?;
    let sink = Sink { dir: cfg.out.clone(), stdout: cli.stdout };
    sink.file(RUN_CONFIG_FILE, &cfg.to_text())?;
    match cli.command {
        Command::Synth => cmd_synth(&cfg, &sink),
        Command::Preprocess => cmd_preprocess(&cfg, &sink),
        Command::Train => cmd_train(&cfg, &sink),
        Command::Eval => cmd_eval(&cfg, &sink),
        Command::Loo => cmd_loo(&cfg, &sink),
        Command::Sweep => cmd_sweep(&cfg, &sink),
        Command::Rf => cmd_rf(&cfg, &sink, cli.blocks.is_some(), cli.pool_stride.is_some()),
        Command::Heatmap => cmd_heatmap(&cfg, &sink),
    }
}

fn data_dir(cfg: &RunConfig) -> Result<&Path> {
    cfg.data.as_deref().ok_or_else(|| Error::Config("no dataset given: set data = <dir> or pass --data".into()))
}

fn load_subjects(cfg: &RunConfig) -> Result<Dataset> {
    let subjects = load_dataset(data_dir(cfg)?)?;
    let (records, annotations): (Vec<EegRecord>, Vec<AnnotationSet>) = subjects.into_iter().unzip();
    let annotations = if cfg.strong_fraction < 1.0 {
        subsample_strong(&annotations, cfg.strong_fraction, subject_seed(cfg.seed, usize::MAX))?
    } else {
        annotations
    };
    Dataset::new(records.into_iter().zip(annotations).collect(), &cfg.preprocess)
}

fn load_models(cfg: &RunConfig) -> Result<Vec<FcnModel>> {
    if cfg.model.is_empty() {
        return Err(Error::Config("no model given: set model = <file> or pass --model".into()));
    }
    cfg.model.iter().map(load_model).collect()
}

fn cmd_synth(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let subjects = synth_dataset(&cfg.synth_config())?;
    write_dataset(&cfg.out, &subjects)?;
    let events: usize = subjects.iter().map(|(_, a)| a.weak().count()).sum();
    sink.say(format!("wrote {} synthetic subjects with {events} seizures to {}", subjects.len(), cfg.out.display()));
    Ok(())
}

fn cmd_preprocess(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let subjects = load_dataset(data_dir(cfg)?)?;
    let (records, annotations): (Vec<EegRecord>, Vec<AnnotationSet>) = subjects.into_iter().unzip();
    let processed = prepare_records(&records, &cfg.preprocess)?;
    let pairs: Vec<(EegRecord, AnnotationSet)> = processed.into_iter().zip(annotations).collect();
    write_dataset(&cfg.out, &pairs)?;
    sink.say(format!("preprocessed {} records to {} Hz in {}", pairs.len(), cfg.preprocess.target_rate, cfg.out.display()));
    Ok(())
}

fn model_file(n_models: usize, k: usize) -> String {
    if n_models == 1 {
        "model.nszm".into()
    } else {
        format!("model_split{k}.nszm")
    }
}

fn cmd_train(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let ds = load_subjects(cfg)?;
    let all: Vec<usize> = (0..ds.len()).collect();
    let splits = train_on_subjects(&ds, &all, &cfg.fcn_config(), &cfg.train_config(), cfg.seed)?;
    let mut history = String::from("split,epoch,train_loss,val_auc,n_samples\n");
    for s in &splits {
        let path = cfg.out.join(model_file(splits.len(), s.split));
        save_model(&s.model, &path)?;
        sink.say(format!(
            "split {}: best epoch {} (validation AUC {:.2}) saved to {}",
            s.split,
            s.history.best_epoch,
            s.history.best_val_auc,
            path.display()
        ));
        for e in &s.history.epochs {
            let _ = writeln!(history, "{},{},{:.6},{:.4},{}", s.split, e.epoch, e.train_loss, e.val_auc, e.n_samples);
        }
    }
    sink.main_csv("history.csv", &history)
}

fn opt4(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

fn summary_rows(method: &str, scores: &[SubjectScores]) -> Vec<(String, Summary)> {
    [AggregateMode::MeanPerSubject, AggregateMode::Concatenated]
        .into_iter()
        .filter_map(|m| aggregate(scores, m).ok().map(|s| (method.to_string(), s)))
        .collect()
}

fn cmd_eval(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let models = load_models(cfg)?;
    let subjects: Vec<(EegRecord, AnnotationSet)> = match &cfg.record {
        Some(path) => {
            let rec = load_record(path)?;
            let ann_path = annotation_path(path);
            let ann = if ann_path.exists() {
                load_annotations(&ann_path, Some(rec.n_channels()))?
            } else {
                AnnotationSet::empty(rec.subject_id.clone())
            };
            vec![(rec, ann)]
        }
        None => load_dataset(data_dir(cfg)?)?,
    };
    let mut table = String::from("subject,hours,auc,auc90\n");
    let mut scores = Vec::new();
    let (mut hours, mut seconds) = (0.0, 0.0);
    for (rec, ann) in &subjects {
        let start = Instant::now();
        let processed = prepare_records(std::slice::from_ref(rec), &cfg.preprocess)?.remove(0);
        let ev = evaluate_subject(&models, &processed, ann, &cfg.preprocess, &cfg.post)?;
        let elapsed = start.elapsed().as_secs_f64();
        let h = rec.duration() / 3600.0;
        hours += h;
        seconds += elapsed;
        log::info!("{}: {:.3} h in {elapsed:.2} s", ev.subject, h);
        let id = &ev.subject;
        sink.file(&format!("{id}_trace.csv"), &trace_to_csv(&ev.trace))?;
        let names: Vec<String> = match models[0].config().mode {
            FcnMode::Fcn1d => processed.channel_names().to_vec(),
            FcnMode::Fcn2d => vec!["montage".into()],
        };
        sink.file(&format!("{id}_channels.csv"), &channels_to_csv(&ev.raw, &names, ev.trace.period, ev.trace.t0)?)?;
        if ev.auc.is_some() {
            let roc = roc_curve(ev.trace.values(), &ev.labels)?;
            sink.file(&format!("{id}_roc.csv"), &roc_to_csv(&roc))?;
            let fpr: Vec<f64> = roc.specificity.iter().map(|s| 1.0 - s).collect();
            sink.file(&format!("{id}_roc.svg"), &render_svg(&[fpr, roc.sensitivity.clone()], PlotKind::Roc)?)?;
        }
        let _ = writeln!(table, "{id},{h:.4},{},{}", opt4(ev.auc.map(|a| a.0)), opt4(ev.auc.map(|a| a.1)));
        scores.push(SubjectScores { subject: id.clone(), scores: ev.trace.values().to_vec(), labels: ev.labels });
    }
    let summary = summary_rows("fcn", &scores);
    if !summary.is_empty() {
        sink.file("summary.csv", &summary_to_csv(&summary))?;
    }
    sink.main_csv("eval.csv", &table)?;
    let per_hour = if hours > 0.0 { seconds / hours } else { 0.0 };
    sink.say(format!(
        "processed {hours:.3} h of EEG in {seconds:.2} s ({per_hour:.1} s per hour of EEG, preprocessing included)"
    ));
    Ok(())
}

fn fold_traces(result: &LooResult, sink: &Sink) -> Result<()> {
    for f in &result.folds {
        sink.file(&format!("{}_trace.csv", f.subject), &trace_to_csv(&f.evaluation.trace))?;
    }
    Ok(())
}

fn cmd_loo(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let ds = load_subjects(cfg)?;
    let result = loo_harness(&ds, &cfg.fcn_config(), &cfg.train_config(), &cfg.post, Some(&cfg.out.join("models")))?;
    fold_traces(&result, sink)?;
    let summary = summary_rows(cfg.mode.as_str(), &result.subject_scores());
    if let Some((_, s)) = summary.iter().find(|(_, s)| s.mode == cfg.aggregation) {
        sink.say(format!("LOO AUC {:.2} ± {:.2}, AUC90 {:.2} ± {:.2}", s.auc_mean, s.auc_std, s.auc90_mean, s.auc90_std));
    }
    sink.file("summary.csv", &summary_to_csv(&summary))?;
    sink.main_csv("folds.csv", &folds_to_csv(&result))
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn cmd_sweep(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let ds = load_subjects(cfg)?;
    let mut table = String::from("n_blocks,pool_stride,receptive_field,params,repeats,auc_mean,auc_std\n");
    let mut runs = String::from("n_blocks,pool_stride,repeat,auc,auc90\n");
    let strides: Vec<usize> = cfg.sweep_pool_strides.clone().collect();
    let mut lines: Vec<Vec<f64>> = vec![Vec::new(); strides.len()];
    for n_blocks in cfg.sweep_blocks.clone() {
        for (si, &pool_stride) in strides.iter().enumerate() {
            let mut aucs = Vec::with_capacity(cfg.sweep_repeats);
            let base = FcnConfig { n_blocks, pool_stride, ..cfg.fcn_config() };
            for r in 0..cfg.sweep_repeats {
                let seed = subject_seed(cfg.seed, r);
                let fcn = FcnConfig { seed, ..base.clone() };
                let tcfg = crate::trainer::TrainConfig { seed, ..cfg.train_config() };
                let result = loo_harness(&ds, &fcn, &tcfg, &cfg.post, None)?;
                let s = aggregate(&result.subject_scores(), cfg.aggregation)?;
                let _ = writeln!(runs, "{n_blocks},{pool_stride},{r},{:.4},{:.4}", s.auc_mean, s.auc90_mean);
                aucs.push(s.auc_mean);
            }
            let (m, sd) = mean_std(&aucs);
            lines[si].push(m);
            let _ = writeln!(
                table,
                "{n_blocks},{pool_stride},{},{},{},{m:.4},{sd:.4}",
                receptive_field(&base),
                count_params(&base),
                cfg.sweep_repeats
            );
            sink.say(format!("n_blocks {n_blocks}, pool stride {pool_stride}: AUC {m:.2} ± {sd:.2}"));
        }
    }
    sink.file("sweep_runs.csv", &runs)?;
    sink.file("sweep.svg", &render_svg(&lines, PlotKind::Sweep)?)?;
    sink.main_csv("sweep.csv", &table)
}

fn cmd_rf(cfg: &RunConfig, sink: &Sink, blocks_given: bool, strides_given: bool) -> Result<()> {
    let blocks = if blocks_given { cfg.sweep_blocks.clone() } else { cfg.n_blocks..=cfg.n_blocks };
    let strides = if strides_given { cfg.sweep_pool_strides.clone() } else { cfg.pool_stride..=cfg.pool_stride };
    let mut table = String::from("n_blocks,pool_stride,receptive_field,params\n");
    for n_blocks in blocks {
        for pool_stride in strides.clone() {
            let c = FcnConfig { n_blocks, pool_stride, ..cfg.fcn_config() };
            c.validate()?;
            let _ = writeln!(table, "{n_blocks},{pool_stride},{},{}", receptive_field(&c), count_params(&c));
        }
    }
    sink.file("rf.csv", &table)?;
    // The table is the whole result, so it always goes to stdout.
    print!("{table}");
    Ok(())
}

/// Per-sample probabilities of `record` from `start_s` over consecutive
/// non-overlapping windows, averaged over `models`. One row per channel.
pub fn record_heatmap(models: &[FcnModel], record: &EegRecord, window_len_s: f64, start_s: f64, duration_s: f64) -> Result<Vec<Vec<f64>>> {
    let first = models.first().ok_or_else(|| Error::InvalidArgument("no models".into()))?;
    let len = first.config().input_len;
    let fs = record.sample_rate();
    let first_sample = (start_s * fs).round() as usize;
    let avail = record.n_samples().saturating_sub(first_sample);
    let n_windows = ((duration_s * fs).round() as usize).min(avail) / len;
    if n_windows == 0 {
        return Err(Error::TooShort(format!("fewer than {window_len_s} s of signal after {start_s} s")));
    }
    let n_ch = record.n_channels();
    let mut rows = vec![Vec::with_capacity(n_windows * len); n_ch];
    for w in 0..n_windows {
        let s0 = first_sample + w * len;
        let slice = |c: usize| record.channel(c)[s0..s0 + len].iter().map(|&v| v as f64);
        let mut acc = vec![vec![0.0; len]; n_ch];
        for m in models {
            let maps: Vec<Vec<f64>> = match m.config().mode {
                FcnMode::Fcn1d => (0..n_ch)
                    .map(|c| Ok(m.heatmap(&Tensor::new(vec![1, len], slice(c).collect())?)?.remove(0)))
                    .collect::<Result<_>>()?,
                FcnMode::Fcn2d => m.heatmap(&Tensor::new(vec![n_ch, len], (0..n_ch).flat_map(slice).collect())?)?,
            };
            for (a, row) in acc.iter_mut().zip(maps) {
                a.iter_mut().zip(row).for_each(|(x, v)| *x += v);
            }
        }
        for (r, a) in rows.iter_mut().zip(acc) {
            r.extend(a.into_iter().map(|v| v / models.len() as f64));
        }
    }
    Ok(rows)
}

fn cmd_heatmap(cfg: &RunConfig, sink: &Sink) -> Result<()> {
    let models = load_models(cfg)?;
    let path = cfg.record.as_ref().ok_or_else(|| Error::Config("no record given: set record = <file> or pass --record".into()))?;
    let record = prepare_records(&[load_record(path)?], &cfg.preprocess)?.remove(0);
    segment_windows(&record, cfg.preprocess.window_len, cfg.preprocess.window_shift)?;
    let rows = record_heatmap(&models, &record, cfg.preprocess.window_len, cfg.heatmap_start_s, cfg.heatmap_duration_s)?;
    let fs = record.sample_rate();
    let t = |i: usize| cfg.heatmap_start_s + i as f64 / fs;
    let mut fused = String::from("time_s,seizureness\n");
    let mut wide = format!("time_s,{}\n", record.channel_names().join(","));
    for i in 0..rows[0].len() {
        let m = rows.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max);
        let _ = writeln!(fused, "{:.5},{m:.6}", t(i));
        let _ = write!(wide, "{:.5}", t(i));
        for r in &rows {
            let _ = write!(wide, ",{:.6}", r[i]);
        }
        wide.push('\n');
    }
    sink.file("heatmap_channels.csv", &wide)?;
    sink.file("heatmap.svg", &render_svg(&rows, PlotKind::Heatmap)?)?;
    sink.main_csv("heatmap.csv", &fused)?;
    sink.say(format!("heatmap of {} samples x {} channels written to {}", rows[0].len(), rows.len(), cfg.out.display()));
    Ok(())
}
