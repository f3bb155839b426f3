use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::infer::{row_probability, Folded};
use super::{FcnConfig, FcnMode, Layer, BN_EPS, BN_MOMENTUM, N_CLASSES};
use crate::autograd::{BnMode, BnStats, Graph, Padding, PoolKind, Tensor, Var};
use crate::error::{Error, Result};

/// Output of [`FcnModel::forward`] for one window.
#[derive(Debug, Clone, PartialEq)]
pub enum Prediction {
    /// 1D mode: the two softmax outputs.
    Classes { background: f64, seizure: f64 },
    /// 2D mode: max over the per-channel seizure probabilities.
    Channels { seizure: f64, per_channel: Vec<f64> },
}

impl Prediction {
    pub fn seizure(&self) -> f64 {
        match self {
            Prediction::Classes { seizure, .. } | Prediction::Channels { seizure, .. } => *seizure,
        }
    }
}

/// An instantiated network: configuration, layer plan, named parameters and
/// batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct FcnModel {
    config: FcnConfig,
    plan: Vec<Layer>,
    names: Vec<String>,
    params: Vec<Tensor>,
    bn_names: Vec<String>,
    bn: Vec<BnStats>,
}

impl FcnModel {
    /// Builds the network with uniform fan-in initialisation drawn from
    /// `config.seed`. Biases and BN shifts start at zero, BN scales at one,
    /// running statistics at mean 0 / variance 1.
    pub fn build(config: FcnConfig) -> Result<Self> {
        config.validate()?;
        let plan = config.layer_plan();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let (mut names, mut params, mut bn_names, mut bn) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        let n_conv = config.n_conv_layers();
        let (mut conv_i, mut bn_i) = (0, 0);
        for layer in &plan {
            match *layer {
                Layer::Conv { c_in, c_out, width, .. } => {
                    let prefix = conv_name(conv_i, n_conv);
                    let fan_in = (c_in * width) as f64;
                    let bound = (6.0 / fan_in).sqrt();
                    let w = (0..c_out * c_in * width).map(|_| rng.gen_range(-bound..bound)).collect();
                    names.push(format!("{prefix}.weight"));
                    params.push(Tensor::new(vec![c_out, c_in, width], w)?);
                    names.push(format!("{prefix}.bias"));
                    params.push(Tensor::zeros(vec![c_out]));
                    conv_i += 1;
                }
                Layer::BatchNorm { channels } => {
                    let prefix = format!("block{}.bn{}", bn_i / 3, bn_i % 3);
                    names.push(format!("{prefix}.gamma"));
                    params.push(Tensor::full(vec![channels], 1.0));
                    names.push(format!("{prefix}.beta"));
                    params.push(Tensor::zeros(vec![channels]));
                    bn_names.push(prefix);
                    bn.push(BnStats::identity(channels));
                    bn_i += 1;
                }
                _ => {}
            }
        }
        Ok(Self { config, plan, names, params, bn_names, bn })
    }

    pub(crate) fn from_parts(config: FcnConfig, params: Vec<Tensor>, bn: Vec<BnStats>) -> Result<Self> {
        let mut model = Self::build(config)?;
        model.set_params(params)?;
        if bn.len() != model.bn.len() || bn.iter().zip(&model.bn).any(|(a, b)| a.mean.len() != b.mean.len()) {
            return Err(Error::Shape("batch-norm statistics do not match the configuration".into()));
        }
        model.bn = bn;
        Ok(model)
    }

    pub fn config(&self) -> &FcnConfig {
        &self.config
    }

    pub fn plan(&self) -> &[Layer] {
        &self.plan
    }

    pub fn param_names(&self) -> &[String] {
        &self.names
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: Vec<Tensor>) -> Result<()> {
        if params.len() != self.params.len() || params.iter().zip(&self.params).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::Shape("parameters do not match the configuration".into()));
        }
        self.params = params;
        Ok(())
    }

    /// Names of the batch-norm layers, aligned with [`Self::bn_stats`].
    pub fn bn_names(&self) -> &[String] {
        &self.bn_names
    }

    pub fn bn_stats(&self) -> &[BnStats] {
        &self.bn
    }

    pub fn bn_stats_mut(&mut self) -> &mut [BnStats] {
        &mut self.bn
    }

    pub fn n_params(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    /// Puts the parameters on `g`, as gradient-receiving leaves when
    /// `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> Vec<Var> {
        self.params
            .iter()
            .map(|p| if trainable { g.param(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// Runs the conv stack on `x: [R, 1, L]` and returns the class maps
    /// `[R, 2, L']` before global pooling.
    pub fn class_maps(&self, g: &mut Graph, vars: &[Var], x: Var, stats: &mut [BnStats], mode: BnMode) -> Result<Var> {
        if vars.len() != self.params.len() || stats.len() != self.bn.len() {
            return Err(Error::Shape("bound parameters do not match the model".into()));
        }
        let shape = g.value(x).shape().to_vec();
        if shape.len() != 3 || shape[1] != 1 || shape[2] != self.config.input_len {
            return Err(Error::Shape(format!("class_maps expects [R, 1, {}], got {shape:?}", self.config.input_len)));
        }
        let (mut p, mut s) = (0, 0);
        let mut h = x;
        for layer in &self.plan {
            match *layer {
                Layer::Conv { stride, .. } => {
                    h = g.conv1d(h, vars[p], vars[p + 1], stride, Padding::Same)?;
                    p += 2;
                }
                Layer::BatchNorm { .. } => {
                    h = g.batch_norm(h, vars[p], vars[p + 1], &mut stats[s], mode, BN_MOMENTUM, BN_EPS)?;
                    p += 2;
                    s += 1;
                }
                Layer::Relu => h = g.relu(h),
                Layer::AvgPool { width, stride } => {
                    if stride > 1 {
                        h = g.pool1d(h, PoolKind::Avg, width, stride)?;
                    }
                }
                Layer::GlobalAvgPool | Layer::Softmax | Layer::ChannelMax => break,
            }
        }
        Ok(h)
    }

    /// Classification head on top of [`Self::class_maps`]. 1D: class
    /// probabilities `[B, 2]`. 2D: seizure probability `[B]` where
    /// `B = R / n_input_channels`.
    pub fn head(&self, g: &mut Graph, maps: Var) -> Result<Var> {
        let pooled = g.global_avg_pool(maps)?;
        let probs = g.softmax(pooled)?;
        match self.config.mode {
            FcnMode::Fcn1d => Ok(probs),
            FcnMode::Fcn2d => {
                let per_channel = self.per_channel(g, probs)?;
                g.max_last(per_channel)
            }
        }
    }

    fn per_channel(&self, g: &mut Graph, probs: Var) -> Result<Var> {
        let rows = g.value(probs).shape()[0];
        let n = self.config.n_input_channels;
        let seizure = g.select(probs, 1)?;
        g.reshape(seizure, vec![rows / n, n])
    }

    fn check_window(&self, window: &Tensor) -> Result<()> {
        let want = [self.config.n_input_channels, self.config.input_len];
        if window.shape() != want {
            return Err(Error::Shape(format!("window {:?}, model expects {want:?}", window.shape())));
        }
        Ok(())
    }

    /// Inference on one window `[n_input_channels, input_len]` using the
    /// running statistics.
    pub fn forward(&self, window: &Tensor) -> Result<Prediction> {
        self.check_window(window)?;
        let maps = Folded::new(self)?.class_maps(window.data());
        let per_row: Vec<f64> = maps.iter().map(|m| row_probability(m)).collect();
        Ok(match self.config.mode {
            FcnMode::Fcn1d => Prediction::Classes { background: 1.0 - per_row[0], seizure: per_row[0] },
            FcnMode::Fcn2d => Prediction::Channels { seizure: channel_max(&per_row), per_channel: per_row },
        })
    }

    /// Seizure probability for each window of a flat buffer laid out as
    /// `[n_windows, n_input_channels, input_len]`.
    pub fn predict(&self, windows: &[f64]) -> Result<Vec<f64>> {
        let per_window = self.config.n_input_channels * self.config.input_len;
        if windows.len() % per_window != 0 {
            return Err(Error::Shape(format!("buffer of {} values is not a whole number of windows", windows.len())));
        }
        let maps = Folded::new(self)?.class_maps(windows);
        let per_row: Vec<f64> = maps.iter().map(|m| row_probability(m)).collect();
        Ok(per_row.chunks(self.config.n_input_channels).map(channel_max).collect())
    }

    /// Per-sample seizure-ness: positionwise softmax of the two class maps,
    /// repeated by the total pool stride and padded with the last value to
    /// `input_len`. One row per input channel.
    pub fn heatmap(&self, window: &Tensor) -> Result<Vec<Vec<f64>>> {
        self.check_window(window)?;
        let len = self.config.input_len;
        let factor = self.config.downsampling();
        let maps = Folded::new(self)?.class_maps(window.data());
        Ok(maps
            .iter()
            .map(|m| {
                let lf = m.len() / N_CLASSES;
                let (z0, z1) = m.split_at(lf);
                let mut row: Vec<f64> = z0
                    .iter()
                    .zip(z1)
                    .flat_map(|(&a, &b)| {
                        let mx = a.max(b);
                        let (ea, eb) = ((a - mx).exp(), (b - mx).exp());
                        std::iter::repeat(eb / (ea + eb)).take(factor)
                    })
                    .take(len)
                    .collect();
                let last = row.last().copied().unwrap_or(0.5);
                row.resize(len, last);
                row
            })
            .collect())
    }
}

/// First maximum, matching the tape's channel max.
fn channel_max(p: &[f64]) -> f64 {
    p.iter().copied().fold(f64::NEG_INFINITY, |a, b| if b > a { b } else { a })
}

fn conv_name(i: usize, n_conv: usize) -> String {
    if i + 1 == n_conv {
        "classifier.conv".into()
    } else {
        format!("block{}.conv{}", i / 3, i % 3)
    }
}

/// Alias of [`FcnModel::build`].
pub fn build_fcn(config: FcnConfig) -> Result<FcnModel> {
    FcnModel::build(config)
}
