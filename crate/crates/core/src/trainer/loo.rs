use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::samples::{prepare_records, strong_samples, weak_samples};
use super::train::train_model;
use super::{History, SampleSet, TrainConfig};
use crate::eeg_data::{rasterize, subject_seed, AnnotationSet, EegRecord};
use crate::error::{Error, Result};
use crate::fcn::{save_model, FcnConfig, FcnMode, FcnModel};
use crate::metrics::{auc_pair, SubjectScores};
use crate::postproc::{postprocess_chain, PostprocConfig, ProbabilityTrace};
use crate::preprocess::{segment_windows, PreprocessConfig};

/// Preprocessed records with their annotations, one entry per subject.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Arc<Vec<EegRecord>>,
    annotations: Vec<AnnotationSet>,
    preprocess: PreprocessConfig,
}

impl Dataset {
    /// Preprocesses every record that is not yet at the target rate.
    pub fn new(subjects: Vec<(EegRecord, AnnotationSet)>, preprocess: &PreprocessConfig) -> Result<Self> {
        let (raw, annotations): (Vec<EegRecord>, Vec<AnnotationSet>) = subjects.into_iter().unzip();
        if let Some(w) = raw.windows(2).find(|w| w[0].n_channels() != w[1].n_channels()) {
            return Err(Error::Shape(format!("records {} and {} differ in channel count", w[0].subject_id, w[1].subject_id)));
        }
        let records = prepare_records(&raw, preprocess)?;
        Ok(Self { records: Arc::new(records), annotations, preprocess: preprocess.clone() })
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &Arc<Vec<EegRecord>> {
        &self.records
    }

    pub fn annotations(&self) -> &[AnnotationSet] {
        &self.annotations
    }

    pub fn preprocess(&self) -> &PreprocessConfig {
        &self.preprocess
    }

    pub fn subject(&self, i: usize) -> &str {
        &self.records[i].subject_id
    }

    pub fn n_channels(&self) -> usize {
        self.records.first().map_or(0, EegRecord::n_channels)
    }
}

/// One trained model of a fold.
#[derive(Debug, Clone)]
pub struct SplitResult {
    pub split: usize,
    pub model: FcnModel,
    pub history: History,
}

fn mix(seed: u64, a: usize, b: usize) -> u64 {
    subject_seed(subject_seed(seed, a), b)
}

fn has_seizure(ann: &AnnotationSet) -> bool {
    ann.weak().next().is_some()
}

/// Train/validation sample sets for a model trained on `train_idx`.
/// 1D: strong samples with a per-subject, per-class random validation
/// share. 2D: one pair per split, each holding out randomly chosen whole
/// subjects.
pub fn split_samples(
    ds: &Dataset,
    train_idx: &[usize],
    mode: FcnMode,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Vec<(SampleSet, SampleSet)>> {
    let pcfg = &ds.preprocess;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        FcnMode::Fcn1d => {
            let all = strong_samples(&ds.records, &ds.annotations, train_idx, pcfg)?;
            if all.count(1) == 0 {
                return Err(Error::InvalidArgument("no strong-label seizure samples in the training subjects".into()));
            }
            let mut train_i = Vec::new();
            let mut val_i = Vec::new();
            for &r in train_idx {
                for label in [0u8, 1] {
                    let mut idx: Vec<usize> =
                        (0..all.len()).filter(|&i| all.refs()[i].record == r && all.labels()[i] == label).collect();
                    idx.shuffle(&mut rng);
                    let n_val = (idx.len() as f64 * cfg.validation_fraction).round() as usize;
                    val_i.extend_from_slice(&idx[..n_val]);
                    train_i.extend_from_slice(&idx[n_val..]);
                }
            }
            train_i.sort_unstable();
            val_i.sort_unstable();
            Ok(vec![(all.subset(&train_i), all.subset(&val_i))])
        }
        FcnMode::Fcn2d => {
            let n_val = cfg.n_validation_subjects;
            if train_idx.len() <= n_val {
                return Err(Error::Config(format!(
                    "{} training subjects cannot spare {n_val} for validation",
                    train_idx.len()
                )));
            }
            let mut out = Vec::with_capacity(cfg.n_splits);
            for _ in 0..cfg.n_splits {
                let mut chosen = None;
                for _ in 0..1000 {
                    let mut pool = train_idx.to_vec();
                    pool.shuffle(&mut rng);
                    let (val, train) = pool.split_at(n_val);
                    if val.iter().any(|&i| has_seizure(&ds.annotations[i])) && train.iter().any(|&i| has_seizure(&ds.annotations[i])) {
                        let (mut val, mut train) = (val.to_vec(), train.to_vec());
                        val.sort_unstable();
                        train.sort_unstable();
                        chosen = Some((train, val));
                        break;
                    }
                }
                let (train, val) = chosen.ok_or_else(|| {
                    Error::InvalidArgument("cannot find a validation split with seizures on both sides".into())
                })?;
                out.push((
                    weak_samples(&ds.records, &ds.annotations, &train, pcfg)?,
                    weak_samples(&ds.records, &ds.annotations, &val, pcfg)?,
                ));
            }
            Ok(out)
        }
    }
}

/// Trains one model (1D) or `n_splits` models (2D) on the subjects at
/// `train_idx`.
pub fn train_on_subjects(ds: &Dataset, train_idx: &[usize], fcn: &FcnConfig, cfg: &TrainConfig, seed: u64) -> Result<Vec<SplitResult>> {
    let fcn = fitted_config(ds, fcn)?;
    let splits = split_samples(ds, train_idx, fcn.mode, cfg, seed)?;
    splits
        .into_iter()
        .enumerate()
        .map(|(k, (train, val))| {
            let model = FcnModel::build(FcnConfig { seed: mix(fcn.seed ^ seed, k, 1), ..fcn.clone() })?;
            let tcfg = TrainConfig { seed: mix(cfg.seed ^ seed, k, 2), ..cfg.clone() };
            let (model, history) = train_model(model, &train, &val, &tcfg)?;
            log::info!("split {k}: best epoch {} with validation AUC {:.2}", history.best_epoch, history.best_val_auc);
            Ok(SplitResult { split: k, model, history })
        })
        .collect()
}

fn fitted_config(ds: &Dataset, fcn: &FcnConfig) -> Result<FcnConfig> {
    let mut fcn = fcn.clone();
    if fcn.input_len != ds.preprocess.window_samples() {
        return Err(Error::Config(format!(
            "model input_len {} differs from the {}-sample windows",
            fcn.input_len,
            ds.preprocess.window_samples()
        )));
    }
    if fcn.mode == FcnMode::Fcn2d {
        fcn.n_input_channels = ds.n_channels();
    }
    fcn.validate()?;
    Ok(fcn)
}

/// Mean seizure probability of `models` for each window of a flat
/// `[n, channels, len]` buffer.
pub fn ensemble_average(models: &[FcnModel], windows: &[f64]) -> Result<Vec<f64>> {
    let first = models.first().ok_or_else(|| Error::InvalidArgument("empty ensemble".into()))?;
    let key = |m: &FcnModel| FcnConfig { seed: 0, ..m.config().clone() };
    if models.iter().any(|m| key(m) != key(first)) {
        return Err(Error::Config("ensemble members differ in configuration".into()));
    }
    let mut sum = first.predict(windows)?;
    for m in &models[1..] {
        for (s, p) in sum.iter_mut().zip(m.predict(windows)?) {
            *s += p;
        }
    }
    let n = models.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    Ok(sum)
}

/// Test-time output for one subject.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub subject: String,
    /// Window probabilities before post-processing, one row per channel in
    /// 1D mode and a single row in 2D mode.
    pub raw: Vec<Vec<f64>>,
    pub trace: ProbabilityTrace,
    /// Weak-label ground truth for each trace entry.
    pub labels: Vec<bool>,
    /// `(AUC, AUC90)` of the trace; `None` without both classes.
    pub auc: Option<(f64, f64)>,
}

/// Scores a preprocessed record: per-window probabilities, post-processing,
/// and epoch labels from the weak annotations for the epoch ending at each
/// window's end.
pub fn evaluate_subject(
    models: &[FcnModel],
    record: &EegRecord,
    annotations: &AnnotationSet,
    pcfg: &PreprocessConfig,
    post: &PostprocConfig,
) -> Result<Evaluation> {
    let first = models.first().ok_or_else(|| Error::InvalidArgument("no models to evaluate".into()))?;
    if record.sample_rate() != pcfg.target_rate {
        return Err(Error::Config(format!("record is at {} Hz, expected {} Hz", record.sample_rate(), pcfg.target_rate)));
    }
    let windows = segment_windows(record, pcfg.window_len, pcfg.window_shift)?;
    let n = windows.len();
    let len = windows.window_samples();
    let raw = match first.config().mode {
        FcnMode::Fcn1d => (0..record.n_channels())
            .map(|c| {
                let mut buf = Vec::with_capacity(n * len);
                for i in 0..n {
                    buf.extend(windows.channel(i, c).iter().map(|&v| v as f64));
                }
                ensemble_average(models, &buf)
            })
            .collect::<Result<Vec<_>>>()?,
        FcnMode::Fcn2d => {
            let mut buf = Vec::with_capacity(n * len * record.n_channels());
            for i in 0..n {
                for c in 0..record.n_channels() {
                    buf.extend(windows.channel(i, c).iter().map(|&v| v as f64));
                }
            }
            vec![ensemble_average(models, &buf)?]
        }
    };
    let period = pcfg.window_shift;
    let t0 = windows.end_time(0);
    let trace = postprocess_chain(&raw, period, t0, post)?;
    let n_epochs = (record.duration() / period).floor() as usize;
    let mask = rasterize(annotations, period, n_epochs, record.n_channels());
    let labels: Vec<bool> = (0..n)
        .map(|i| {
            let e = ((windows.end_time(i) / period).round() as usize).clamp(1, n_epochs.max(1)) - 1;
            mask.weak.get(e).copied().unwrap_or(false)
        })
        .collect();
    let auc = match auc_pair(trace.values(), &labels) {
        Ok(v) => Some(v),
        Err(Error::SingleClass) => None,
        Err(e) => return Err(e),
    };
    Ok(Evaluation { subject: record.subject_id.clone(), raw, trace, labels, auc })
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub subject: String,
    pub splits: Vec<SplitResult>,
    pub evaluation: Evaluation,
}

#[derive(Debug, Clone)]
pub struct LooResult {
    pub folds: Vec<FoldResult>,
}

impl LooResult {
    pub fn subject_scores(&self) -> Vec<SubjectScores> {
        self.folds
            .iter()
            .map(|f| SubjectScores {
                subject: f.subject.clone(),
                scores: f.evaluation.trace.values().to_vec(),
                labels: f.evaluation.labels.clone(),
            })
            .collect()
    }
}

/// Leave-one-subject-out: every subject is the test subject once, with
/// models trained on the others. Models are saved under `model_dir` when
/// given.
pub fn loo_harness(
    ds: &Dataset,
    fcn: &FcnConfig,
    cfg: &TrainConfig,
    post: &PostprocConfig,
    model_dir: Option<&Path>,
) -> Result<LooResult> {
    if ds.len() < 3 {
        return Err(Error::InvalidArgument(format!("leave-one-out needs at least 3 subjects, got {}", ds.len())));
    }
    cfg.validate()?;
    if let Some(dir) = model_dir {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut folds = Vec::with_capacity(ds.len());
    for test in 0..ds.len() {
        let train_idx: Vec<usize> = (0..ds.len()).filter(|&i| i != test).collect();
        log::info!("fold {}/{}: testing on {}", test + 1, ds.len(), ds.subject(test));
        let splits = train_on_subjects(ds, &train_idx, fcn, cfg, mix(cfg.seed, test, 0))?;
        if let Some(dir) = model_dir {
            for s in &splits {
                save_model(&s.model, dir.join(format!("fold{:02}_{}_split{}.nszm", test, ds.subject(test), s.split)))?;
            }
        }
        let models: Vec<FcnModel> = splits.iter().map(|s| s.model.clone()).collect();
        let evaluation = evaluate_subject(&models, &ds.records[test], &ds.annotations[test], &ds.preprocess, post)?;
        folds.push(FoldResult { subject: ds.subject(test).to_string(), splits, evaluation });
    }
    Ok(LooResult { folds })
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.4}"))
}

/// `subject,split,best_epoch,val_auc,test_auc,test_auc90`, one row per
/// trained model; test scores belong to the fold's ensemble.
pub fn folds_to_csv(result: &LooResult) -> String {
    let mut s = String::from("subject,split,best_epoch,val_auc,test_auc,test_auc90\n");
    for f in &result.folds {
        for sp in &f.splits {
            let _ = writeln!(
                s,
                "{},{},{},{:.4},{},{}",
                f.subject,
                sp.split,
                sp.history.best_epoch,
                sp.history.best_val_auc,
                opt(f.evaluation.auc.map(|a| a.0)),
                opt(f.evaluation.auc.map(|a| a.1)),
            );
        }
    }
    s
}
