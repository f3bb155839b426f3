//! Sample extraction, the training loop with early stopping, and the
//! leave-one-subject-out harness.

mod loo;
mod samples;
mod train;

pub use loo::{
    ensemble_average, evaluate_subject, folds_to_csv, loo_harness, split_samples, train_on_subjects, Dataset, Evaluation, FoldResult,
    LooResult, SplitResult,
};
pub use samples::{
    make_samples_strong, make_samples_weak, prepare_records, strong_samples, weak_samples, SampleKind, SampleRef,
    SampleSet,
};
pub use train::{class_weights, train_model, EarlyStopping, EpochLog, History, StopDecision};

use crate::error::{Error, Result};
use crate::fcn::FcnMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassWeighting {
    None,
    InverseFrequency,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    /// Samples per optimiser step.
    pub batch_size: usize,
    /// Rows (single-channel windows) per forward pass; batches larger than
    /// this accumulate gradients over several passes, each normalised with
    /// its own batch statistics.
    pub micro_batch_rows: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub class_weighting: ClassWeighting,
    /// Fraction of each training subject's samples held out for validation
    /// (1D mode).
    pub validation_fraction: f64,
    /// Validation subjects per split (2D mode).
    pub n_validation_subjects: usize,
    /// Independent train/validation splits per fold (2D mode).
    pub n_splits: usize,
    /// Background samples drawn per seizure sample each epoch; `None` uses
    /// every background sample. Validation sets are thinned once with the
    /// same ratio.
    pub negative_ratio: Option<f64>,
    /// Upper bound on samples per epoch after background thinning.
    pub max_samples_per_epoch: Option<usize>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_mode(mode: FcnMode) -> Self {
        let (batch_size, patience) = match mode {
            FcnMode::Fcn1d => (4096, 25),
            FcnMode::Fcn2d => (300, 8),
        };
        Self {
            learning_rate: 0.001,
            momentum: 0.9,
            batch_size,
            micro_batch_rows: 256,
            patience,
            max_epochs: 100,
            class_weighting: ClassWeighting::InverseFrequency,
            validation_fraction: 0.2,
            n_validation_subjects: 3,
            n_splits: 3,
            negative_ratio: None,
            max_samples_per_epoch: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(self.learning_rate > 0.0) || !(0.0..1.0).contains(&self.momentum) {
            return bad("learning_rate must be positive and momentum in [0, 1)");
        }
        if self.batch_size == 0 || self.micro_batch_rows == 0 || self.max_epochs == 0 || self.patience == 0 {
            return bad("batch_size, micro_batch_rows, patience and max_epochs must be positive");
        }
        if self.patience >= self.max_epochs {
            return bad("patience must be smaller than max_epochs");
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation_fraction must be in (0, 1)");
        }
        if self.n_validation_subjects == 0 || self.n_splits == 0 {
            return bad("n_validation_subjects and n_splits must be positive");
        }
        if self.negative_ratio.is_some_and(|r| !(r > 0.0)) {
            return bad("negative_ratio must be positive");
        }
        if self.max_samples_per_epoch == Some(0) {
            return bad("max_samples_per_epoch must be positive");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::for_mode(FcnMode::Fcn1d)
    }
}
