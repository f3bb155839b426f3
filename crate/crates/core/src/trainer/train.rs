use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ClassWeighting, SampleKind, SampleSet, TrainConfig};
use crate::autograd::{sgd_nesterov_step, BnMode, Graph, OptimizerState, Tensor};
use crate::error::{Error, Result};
use crate::fcn::{FcnMode, FcnModel};
use crate::metrics::{auc, roc_curve};

/// Windows per inference pass during validation.
const VALIDATION_CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopDecision {
    Improved,
    Continue,
    Stop,
}

/// Tracks the best validation score; a score must be strictly higher to
/// count as an improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self { patience, best: None, since_best: 0 }
    }

    pub fn update(&mut self, epoch: usize, score: f64) -> StopDecision {
        let improved = match self.best {
            None => !score.is_nan(),
            Some((_, b)) => score > b,
        };
        if improved {
            self.best = Some((epoch, score));
            self.since_best = 0;
            return StopDecision::Improved;
        }
        self.since_best += 1;
        if self.since_best >= self.patience {
            StopDecision::Stop
        } else {
            StopDecision::Continue
        }
    }

    /// `(epoch, score)` of the best update so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_auc: f64,
    pub stopped_early: bool,
}

/// Inverse class frequency scaled so that balanced classes get `(1, 1)`.
pub fn class_weights(n_negative: usize, n_positive: usize) -> [f64; 2] {
    let n = (n_negative + n_positive) as f64;
    [n / (2.0 * n_negative.max(1) as f64), n / (2.0 * n_positive.max(1) as f64)]
}

fn split_by_label(labels: &[u8]) -> (Vec<usize>, Vec<usize>) {
    let neg = (0..labels.len()).filter(|&i| labels[i] == 0).collect();
    let pos = (0..labels.len()).filter(|&i| labels[i] == 1).collect();
    (neg, pos)
}

/// All positives plus at most `ratio · positives` randomly chosen negatives.
fn thin(neg: &[usize], pos: &[usize], ratio: Option<f64>, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let keep = ratio.map_or(neg.len(), |r| ((pos.len() as f64 * r).ceil() as usize).min(neg.len()));
    let mut picked: Vec<usize> = if keep == neg.len() {
        neg.to_vec()
    } else {
        rand::seq::index::sample(rng, neg.len(), keep).into_iter().map(|k| neg[k]).collect()
    };
    picked.extend_from_slice(pos);
    picked.sort_unstable();
    picked
}

fn check_compatible(model: &FcnModel, set: &SampleSet, what: &str) -> Result<()> {
    let cfg = model.config();
    let kind_ok = matches!(
        (cfg.mode, set.kind()),
        (FcnMode::Fcn1d, SampleKind::Strong) | (FcnMode::Fcn2d, SampleKind::Weak)
    );
    if !kind_ok || set.rows() != cfg.n_input_channels || set.window_len() != cfg.input_len {
        return Err(Error::Shape(format!(
            "{what} samples ({:?}, {} rows of {}) do not fit a {} model with {} channels of {}",
            set.kind(),
            set.rows(),
            set.window_len(),
            cfg.mode,
            cfg.n_input_channels,
            cfg.input_len
        )));
    }
    Ok(())
}

/// Seizure probability for each sample at `indices`.
pub(crate) fn predict_samples(model: &FcnModel, set: &SampleSet, indices: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(indices.len());
    let mut buf = Vec::new();
    for chunk in indices.chunks(VALIDATION_CHUNK) {
        set.fill(chunk, &mut buf);
        out.extend(model.predict(&buf)?);
    }
    Ok(out)
}

/// Window-level AUC (percent) of `model` on the samples at `indices`.
fn sample_auc(model: &FcnModel, set: &SampleSet, indices: &[usize]) -> Result<f64> {
    let scores = predict_samples(model, set, indices)?;
    let labels: Vec<bool> = indices.iter().map(|&i| set.labels()[i] == 1).collect();
    Ok(auc(&roc_curve(&scores, &labels)?))
}

/// One forward/backward pass over `idx`; returns the loss and adds the
/// gradients, scaled by `scale`, into `acc`.
#[allow(clippy::too_many_arguments)]
fn accumulate(
    model: &mut FcnModel,
    set: &SampleSet,
    idx: &[usize],
    weights: [f64; 2],
    scale: f64,
    buf: &mut Vec<f64>,
    acc: &mut [Tensor],
) -> Result<f64> {
    let cfg = model.config().clone();
    set.fill(idx, buf);
    let rows = idx.len() * cfg.n_input_channels;
    let mut g = Graph::new();
    let vars = model.bind(&mut g, true);
    let x = g.constant(Tensor::new(vec![rows, 1, cfg.input_len], std::mem::take(buf))?);
    let mut stats = model.bn_stats().to_vec();
    let maps = model.class_maps(&mut g, &vars, x, &mut stats, BnMode::Train)?;
    let out = model.head(&mut g, maps)?;
    let labels = set.labels();
    let loss = match cfg.mode {
        FcnMode::Fcn1d => {
            let targets: Vec<usize> = idx.iter().map(|&i| labels[i] as usize).collect();
            g.cross_entropy(out, &targets, &weights)?
        }
        FcnMode::Fcn2d => {
            let targets: Vec<f64> = idx.iter().map(|&i| labels[i] as f64).collect();
            g.binary_cross_entropy(out, &targets, weights)?
        }
    };
    let value = g.value(loss).item();
    if value.is_finite() {
        g.backward(loss)?;
        for (a, &v) in acc.iter_mut().zip(&vars) {
            let grad = g.grad(v).expect("parameters feed the loss");
            a.data_mut().iter_mut().zip(grad).for_each(|(s, d)| *s += scale * d);
        }
        model.bn_stats_mut().clone_from_slice(&stats);
    }
    Ok(value)
}

/// Trains with Nesterov SGD on shuffled mini-batches, scoring window-level
/// validation AUC after every epoch. Stops once the score has not improved
/// for `patience` epochs and returns the best-scoring snapshot.
pub fn train_model(
    mut model: FcnModel,
    train: &SampleSet,
    validation: &SampleSet,
    cfg: &TrainConfig,
) -> Result<(FcnModel, History)> {
    cfg.validate()?;
    if train.is_empty() || validation.is_empty() {
        return Err(Error::InvalidArgument("training and validation sets must be non-empty".into()));
    }
    check_compatible(&model, train, "training")?;
    check_compatible(&model, validation, "validation")?;
    let (neg, pos) = split_by_label(train.labels());
    if neg.is_empty() || pos.is_empty() {
        return Err(Error::SingleClass);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (vneg, vpos) = split_by_label(validation.labels());
    if vneg.is_empty() || vpos.is_empty() {
        return Err(Error::SingleClass);
    }
    let val_idx = thin(&vneg, &vpos, cfg.negative_ratio, &mut rng);

    let rows = model.config().n_input_channels;
    let micro = (cfg.micro_batch_rows / rows).max(1);
    let mut opt = OptimizerState::new(cfg.learning_rate, cfg.momentum);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best = model.clone();
    let mut epochs = Vec::new();
    let mut stopped_early = false;
    let mut buf = Vec::new();

    for epoch in 1..=cfg.max_epochs {
        let mut order = thin(&neg, &pos, cfg.negative_ratio, &mut rng);
        order.shuffle(&mut rng);
        if let Some(cap) = cfg.max_samples_per_epoch {
            order.truncate(cap);
        }
        let n_pos = order.iter().filter(|&&i| train.labels()[i] == 1).count();
        let weights = match cfg.class_weighting {
            ClassWeighting::None => [1.0, 1.0],
            ClassWeighting::InverseFrequency => class_weights(order.len() - n_pos, n_pos),
        };
        let mut loss_sum = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<Tensor> = model.params().iter().map(|p| Tensor::zeros(p.shape().to_vec())).collect();
            let mut batch_loss = 0.0;
            for part in batch.chunks(micro) {
                let scale = part.len() as f64 / batch.len() as f64;
                let l = accumulate(&mut model, train, part, weights, scale, &mut buf, &mut grads)?;
                if !l.is_finite() {
                    return Err(Error::NonFiniteLoss { epoch, batch: b + 1 });
                }
                batch_loss += scale * l;
            }
            sgd_nesterov_step(model.params_mut(), &grads, &mut opt)?;
            loss_sum += batch_loss * batch.len() as f64;
        }
        let val_auc = sample_auc(&model, validation, &val_idx)?;
        let train_loss = loss_sum / order.len() as f64;
        log::debug!("epoch {epoch}: loss {train_loss:.5}, validation AUC {val_auc:.2}");
        epochs.push(EpochLog { epoch, train_loss, val_auc, n_samples: order.len() });
        match stopper.update(epoch, val_auc) {
            StopDecision::Improved => best = model.clone(),
            StopDecision::Continue => {}
            StopDecision::Stop => {
                stopped_early = true;
                break;
            }
        }
    }
    let (best_epoch, best_val_auc) = stopper.best().unwrap_or((0, f64::NAN));
    Ok((best, History { epochs, best_epoch, best_val_auc, stopped_early }))
}
