//! Run configuration: `key = value` lines with `#` comments, merged over
//! built-in defaults and echoed back fully resolved.

use std::fmt::Write as _;
use std::ops::RangeInclusive;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::eeg_data::{ChannelSpread, SynthConfig};
use crate::error::{Error, Result};
use crate::fcn::{FcnConfig, FcnMode};
use crate::metrics::AggregateMode;
use crate::postproc::PostprocConfig;
use crate::preprocess::PreprocessConfig;
use crate::trainer::{ClassWeighting, TrainConfig};

/// File name of the echoed configuration inside the output directory.
pub const RUN_CONFIG_FILE: &str = "run_config.txt";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub data: Option<PathBuf>,
    pub out: PathBuf,
    /// One path per ensemble member.
    pub model: Vec<PathBuf>,
    pub record: Option<PathBuf>,
    pub synth: SynthConfig,
    pub preprocess: PreprocessConfig,
    pub mode: FcnMode,
    pub n_blocks: usize,
    pub pool_stride: usize,
    pub n_maps: usize,
    pub filter_width: usize,
    /// `batch_size` and `patience` here are overridden by the two options
    /// below when set; otherwise they follow the mode.
    pub train: TrainConfig,
    pub batch_size: Option<usize>,
    pub patience: Option<usize>,
    /// Share of seizure events that keep their channel labels.
    pub strong_fraction: f64,
    pub post: PostprocConfig,
    pub aggregation: AggregateMode,
    pub sweep_blocks: RangeInclusive<usize>,
    pub sweep_pool_strides: RangeInclusive<usize>,
    pub sweep_repeats: usize,
    pub heatmap_start_s: f64,
    pub heatmap_duration_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let fcn = FcnConfig::default();
        Self {
            seed: 0,
            data: None,
            out: PathBuf::from("out"),
            model: Vec::new(),
            record: None,
            synth: SynthConfig::default(),
            preprocess: PreprocessConfig::default(),
            mode: fcn.mode,
            n_blocks: fcn.n_blocks,
            pool_stride: fcn.pool_stride,
            n_maps: fcn.n_maps,
            filter_width: fcn.filter_width,
            train: TrainConfig::default(),
            batch_size: None,
            patience: None,
            strong_fraction: 1.0,
            post: PostprocConfig::default(),
            aggregation: AggregateMode::MeanPerSubject,
            sweep_blocks: 1..=5,
            sweep_pool_strides: 1..=3,
            sweep_repeats: 3,
            heatmap_start_s: 0.0,
            heatmap_duration_s: 60.0,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected true or false, got {value:?}"))),
    }
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value {
        "none" | "auto" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

/// `a..b` (inclusive) or a single value.
pub fn parse_range(key: &str, value: &str) -> Result<RangeInclusive<usize>> {
    let (lo, hi) = match value.split_once("..") {
        Some((a, b)) => (parse(key, a.trim())?, parse(key, b.trim_start_matches('=').trim())?),
        None => {
            let v = parse(key, value)?;
            (v, v)
        }
    };
    if lo > hi {
        return Err(Error::Config(format!("{key}: empty range {value:?}")));
    }
    Ok(lo..=hi)
}

fn show_range(r: &RangeInclusive<usize>) -> String {
    if r.start() == r.end() {
        r.start().to_string()
    } else {
        format!("{}..{}", r.start(), r.end())
    }
}

fn show_opt<T: ToString>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), T::to_string)
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(String::new, |p| p.display().to_string())
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let k = key;
        let v = value.trim();
        match k {
            "seed" => self.seed = parse(k, v)?,
            "data" => self.data = (!v.is_empty()).then(|| PathBuf::from(v)),
            "out" => self.out = PathBuf::from(v),
            "model" => self.model = v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(PathBuf::from).collect(),
            "record" => self.record = (!v.is_empty()).then(|| PathBuf::from(v)),
            "synth.n_subjects" => self.synth.n_subjects = parse(k, v)?,
            "synth.record_duration_s" => self.synth.record_duration = parse(k, v)?,
            "synth.n_channels" => self.synth.n_channels = parse(k, v)?,
            "synth.sample_rate" => self.synth.sample_rate = parse(k, v)?,
            "synth.seizure_rate" => self.synth.seizure_rate = parse(k, v)?,
            "synth.min_duration_s" => self.synth.duration_range.0 = parse(k, v)?,
            "synth.max_duration_s" => self.synth.duration_range.1 = parse(k, v)?,
            "synth.channel_spread" => {
                let r = parse_range(k, v)?;
                self.synth.channel_spread = if r.start() == r.end() {
                    ChannelSpread::Fixed(*r.start())
                } else {
                    ChannelSpread::Uniform { min: *r.start(), max: *r.end() }
                };
            }
            "synth.snr" => self.synth.snr = parse(k, v)?,
            "preprocess.band_lo" => self.preprocess.band_lo = parse(k, v)?,
            "preprocess.band_hi" => self.preprocess.band_hi = parse(k, v)?,
            "preprocess.target_rate" => self.preprocess.target_rate = parse(k, v)?,
            "preprocess.window_len_s" => self.preprocess.window_len = parse(k, v)?,
            "preprocess.window_shift_s" => self.preprocess.window_shift = parse(k, v)?,
            "model.mode" => self.mode = parse(k, v)?,
            "model.n_blocks" => self.n_blocks = parse(k, v)?,
            "model.pool_stride" => self.pool_stride = parse(k, v)?,
            "model.n_maps" => self.n_maps = parse(k, v)?,
            "model.filter_width" => self.filter_width = parse(k, v)?,
            "train.learning_rate" => self.train.learning_rate = parse(k, v)?,
            "train.momentum" => self.train.momentum = parse(k, v)?,
            "train.batch_size" => self.batch_size = parse_opt(k, v)?,
            "train.micro_batch_rows" => self.train.micro_batch_rows = parse(k, v)?,
            "train.patience" => self.patience = parse_opt(k, v)?,
            "train.max_epochs" => self.train.max_epochs = parse(k, v)?,
            "train.class_weighting" => {
                self.train.class_weighting = match v {
                    "none" => ClassWeighting::None,
                    "inverse" => ClassWeighting::InverseFrequency,
                    _ => return Err(Error::Config(format!("{k}: expected none or inverse, got {v:?}"))),
                }
            }
            "train.validation_fraction" => self.train.validation_fraction = parse(k, v)?,
            "train.n_validation_subjects" => self.train.n_validation_subjects = parse(k, v)?,
            "train.n_splits" => self.train.n_splits = parse(k, v)?,
            "train.negative_ratio" => self.train.negative_ratio = parse_opt(k, v)?,
            "train.max_samples_per_epoch" => self.train.max_samples_per_epoch = parse_opt(k, v)?,
            "train.strong_fraction" => self.strong_fraction = parse(k, v)?,
            "post.fuse" => self.post.fuse = parse_bool(k, v)?,
            "post.smooth" => self.post.smooth = parse_bool(k, v)?,
            "post.smooth_window_s" => self.post.smooth_window_s = parse(k, v)?,
            "post.adapt" => self.post.adapt = parse_bool(k, v)?,
            "post.adapt_time_constant_s" => self.post.adapt_time_constant_s = parse(k, v)?,
            "post.adapt_beta" => self.post.adapt_beta = parse(k, v)?,
            "post.collar" => self.post.collar = parse_bool(k, v)?,
            "post.collar_s" => self.post.collar_s = parse(k, v)?,
            "eval.aggregation" => {
                self.aggregation = match v {
                    "mean" => AggregateMode::MeanPerSubject,
                    "concatenated" => AggregateMode::Concatenated,
                    _ => return Err(Error::Config(format!("{k}: expected mean or concatenated, got {v:?}"))),
                }
            }
            "sweep.blocks" => self.sweep_blocks = parse_range(k, v)?,
            "sweep.pool_strides" => self.sweep_pool_strides = parse_range(k, v)?,
            "sweep.repeats" => self.sweep_repeats = parse(k, v)?,
            "heatmap.start_s" => self.heatmap_start_s = parse(k, v)?,
            "heatmap.duration_s" => self.heatmap_duration_s = parse(k, v)?,
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies every setting of a config file body. Errors name the line.
    pub fn merge_str(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value, got {raw:?}", n + 1)))?;
            self.set(key.trim(), value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn merge_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.merge_str(&text)
    }

    pub fn from_str_with_defaults(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.merge_str(text)?;
        Ok(cfg)
    }

    pub fn fcn_config(&self) -> FcnConfig {
        FcnConfig {
            n_blocks: self.n_blocks,
            pool_stride: self.pool_stride,
            n_maps: self.n_maps,
            filter_width: self.filter_width,
            n_input_channels: 1,
            mode: self.mode,
            input_len: self.preprocess.window_samples(),
            seed: self.seed,
        }
    }

    /// Training settings with the mode-dependent defaults filled in.
    pub fn train_config(&self) -> TrainConfig {
        let base = TrainConfig::for_mode(self.mode);
        TrainConfig {
            batch_size: self.batch_size.unwrap_or(base.batch_size),
            patience: self.patience.unwrap_or(base.patience),
            seed: self.seed,
            ..self.train.clone()
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig { seed: self.seed, ..self.synth.clone() }
    }

    /// Checks every section that has its own invariants.
    pub fn validate(&self) -> Result<()> {
        self.synth_config().validate()?;
        self.preprocess.validate()?;
        self.fcn_config().validate()?;
        self.train_config().validate()?;
        if !(0.0..=1.0).contains(&self.strong_fraction) {
            return Err(Error::Config(format!("train.strong_fraction {} must be in [0, 1]", self.strong_fraction)));
        }
        if self.sweep_repeats == 0 {
            return Err(Error::Config("sweep.repeats must be positive".into()));
        }
        if !(self.heatmap_start_s >= 0.0 && self.heatmap_duration_s > 0.0) {
            return Err(Error::Config("heatmap.start_s must be >= 0 and heatmap.duration_s > 0".into()));
        }
        Ok(())
    }

    /// Every key with its resolved value, in a form [`Self::merge_str`]
    /// reads back to an identical configuration.
    pub fn to_text(&self) -> String {
        let t = self.train_config();
        let spread = match self.synth.channel_spread {
            ChannelSpread::Fixed(k) => k.to_string(),
            ChannelSpread::Uniform { min, max } => format!("{min}..{max}"),
        };
        let entries: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("data", show_path(&self.data)),
            ("out", self.out.display().to_string()),
            ("model", self.model.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(",")),
            ("record", show_path(&self.record)),
            ("synth.n_subjects", self.synth.n_subjects.to_string()),
            ("synth.record_duration_s", self.synth.record_duration.to_string()),
            ("synth.n_channels", self.synth.n_channels.to_string()),
            ("synth.sample_rate", self.synth.sample_rate.to_string()),
            ("synth.seizure_rate", self.synth.seizure_rate.to_string()),
            ("synth.min_duration_s", self.synth.duration_range.0.to_string()),
            ("synth.max_duration_s", self.synth.duration_range.1.to_string()),
            ("synth.channel_spread", spread),
            ("synth.snr", self.synth.snr.to_string()),
            ("preprocess.band_lo", self.preprocess.band_lo.to_string()),
            ("preprocess.band_hi", self.preprocess.band_hi.to_string()),
            ("preprocess.target_rate", self.preprocess.target_rate.to_string()),
            ("preprocess.window_len_s", self.preprocess.window_len.to_string()),
            ("preprocess.window_shift_s", self.preprocess.window_shift.to_string()),
            ("model.mode", self.mode.to_string()),
            ("model.n_blocks", self.n_blocks.to_string()),
            ("model.pool_stride", self.pool_stride.to_string()),
            ("model.n_maps", self.n_maps.to_string()),
            ("model.filter_width", self.filter_width.to_string()),
            ("train.learning_rate", t.learning_rate.to_string()),
            ("train.momentum", t.momentum.to_string()),
            ("train.batch_size", t.batch_size.to_string()),
            ("train.micro_batch_rows", t.micro_batch_rows.to_string()),
            ("train.patience", t.patience.to_string()),
            ("train.max_epochs", t.max_epochs.to_string()),
            (
                "train.class_weighting",
                match t.class_weighting {
                    ClassWeighting::None => "none".into(),
                    ClassWeighting::InverseFrequency => "inverse".into(),
                },
            ),
            ("train.validation_fraction", t.validation_fraction.to_string()),
            ("train.n_validation_subjects", t.n_validation_subjects.to_string()),
            ("train.n_splits", t.n_splits.to_string()),
            ("train.negative_ratio", show_opt(&t.negative_ratio)),
            ("train.max_samples_per_epoch", show_opt(&t.max_samples_per_epoch)),
            ("train.strong_fraction", self.strong_fraction.to_string()),
            ("post.fuse", self.post.fuse.to_string()),
            ("post.smooth", self.post.smooth.to_string()),
            ("post.smooth_window_s", self.post.smooth_window_s.to_string()),
            ("post.adapt", self.post.adapt.to_string()),
            ("post.adapt_time_constant_s", self.post.adapt_time_constant_s.to_string()),
            ("post.adapt_beta", self.post.adapt_beta.to_string()),
            ("post.collar", self.post.collar.to_string()),
            ("post.collar_s", self.post.collar_s.to_string()),
            (
                "eval.aggregation",
                match self.aggregation {
                    AggregateMode::MeanPerSubject => "mean".into(),
                    AggregateMode::Concatenated => "concatenated".into(),
                },
            ),
            ("sweep.blocks", show_range(&self.sweep_blocks)),
            ("sweep.pool_strides", show_range(&self.sweep_pool_strides)),
            ("sweep.repeats", self.sweep_repeats.to_string()),
            ("heatmap.start_s", self.heatmap_start_s.to_string()),
            ("heatmap.duration_s", self.heatmap_duration_s.to_string()),
        ];
        let mut s = String::from("# neoseize run configuration\n");
        for (k, v) in entries {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
