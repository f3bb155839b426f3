//! The 1D and 2D fully convolutional networks.
//!
//! Both modes share one stack of `n_blocks` feature-extraction blocks
//! (`[conv → BN → ReLU] × 3 → avg pool`) and a classification conv with one
//! map per class. In 2D mode every EEG channel runs through the stack on its
//! own; per-channel seizure probabilities are then reduced with a max.

mod container;
mod infer;
mod model;

pub use container::{load_model, read_model, save_model, write_model, MODEL_MAGIC};
pub use model::{build_fcn, FcnModel, Prediction};

use crate::error::{Error, Result};

/// Momentum of the batch-norm running statistics.
pub const BN_MOMENTUM: f64 = 0.1;
pub const BN_EPS: f64 = 1e-5;
/// Number of output classes (background, seizure).
pub const N_CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FcnMode {
    Fcn1d,
    Fcn2d,
}

impl FcnMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FcnMode::Fcn1d => "fcn1d",
            FcnMode::Fcn2d => "fcn2d",
        }
    }
}

impl std::str::FromStr for FcnMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fcn1d" | "1d" => Ok(FcnMode::Fcn1d),
            "fcn2d" | "2d" => Ok(FcnMode::Fcn2d),
            _ => Err(Error::Config(format!("unknown mode {s:?}, expected fcn1d or fcn2d"))),
        }
    }
}

impl std::fmt::Display for FcnMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FcnConfig {
    pub n_blocks: usize,
    pub pool_stride: usize,
    pub n_maps: usize,
    pub filter_width: usize,
    /// 1 in 1D mode, the EEG channel count in 2D mode.
    pub n_input_channels: usize,
    pub mode: FcnMode,
    pub input_len: usize,
    pub seed: u64,
}

impl Default for FcnConfig {
    fn default() -> Self {
        Self {
            n_blocks: 3,
            pool_stride: 2,
            n_maps: 32,
            filter_width: 3,
            n_input_channels: 1,
            mode: FcnMode::Fcn1d,
            input_len: 256,
            seed: 0,
        }
    }
}

impl FcnConfig {
    pub fn fcn1d(n_blocks: usize, pool_stride: usize) -> Self {
        Self { n_blocks, pool_stride, ..Self::default() }
    }

    pub fn fcn2d(n_blocks: usize, pool_stride: usize, n_channels: usize) -> Self {
        Self { n_blocks, pool_stride, n_input_channels: n_channels, mode: FcnMode::Fcn2d, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(1..=5).contains(&self.n_blocks) {
            return bad(format!("n_blocks must be in 1..=5, got {}", self.n_blocks));
        }
        if !(1..=3).contains(&self.pool_stride) {
            return bad(format!("pool_stride must be 1, 2 or 3, got {}", self.pool_stride));
        }
        if self.n_maps < 2 {
            return bad(format!("n_maps must be at least 2, got {}", self.n_maps));
        }
        if self.filter_width % 2 == 0 {
            return bad(format!("filter_width must be odd, got {}", self.filter_width));
        }
        match self.mode {
            FcnMode::Fcn1d if self.n_input_channels != 1 => {
                return bad(format!("fcn1d takes 1 input channel, got {}", self.n_input_channels))
            }
            FcnMode::Fcn2d if self.n_input_channels < 2 => {
                return bad(format!("fcn2d needs at least 2 input channels, got {}", self.n_input_channels))
            }
            _ => {}
        }
        if self.input_len < self.downsampling() {
            return bad(format!(
                "input_len {} is shorter than the total pool stride {}",
                self.input_len,
                self.downsampling()
            ));
        }
        Ok(())
    }

    /// Product of all pool strides.
    pub fn downsampling(&self) -> usize {
        self.pool_stride.pow(self.n_blocks as u32)
    }

    /// Length of the class maps before global pooling.
    pub fn class_map_len(&self) -> usize {
        (0..self.n_blocks).fold(self.input_len, |len, _| len / self.pool_stride)
    }

    /// Ordered layer descriptors of the network.
    pub fn layer_plan(&self) -> Vec<Layer> {
        let mut plan = Vec::with_capacity(11 * self.n_blocks + 5);
        let mut c_in = 1;
        for _ in 0..self.n_blocks {
            for _ in 0..3 {
                plan.push(Layer::Conv { c_in, c_out: self.n_maps, width: self.filter_width, stride: 1 });
                plan.push(Layer::BatchNorm { channels: self.n_maps });
                plan.push(Layer::Relu);
                c_in = self.n_maps;
            }
            plan.push(Layer::AvgPool { width: self.pool_stride, stride: self.pool_stride });
        }
        plan.push(Layer::Conv { c_in, c_out: N_CLASSES, width: self.filter_width, stride: 1 });
        plan.push(Layer::GlobalAvgPool);
        plan.push(Layer::Softmax);
        if self.mode == FcnMode::Fcn2d {
            plan.push(Layer::ChannelMax);
        }
        plan
    }

    pub fn n_conv_layers(&self) -> usize {
        self.layer_plan().iter().filter(|l| matches!(l, Layer::Conv { .. })).count()
    }
}

/// One step of the network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Conv { c_in: usize, c_out: usize, width: usize, stride: usize },
    BatchNorm { channels: usize },
    Relu,
    /// Identity when `stride == 1`.
    AvgPool { width: usize, stride: usize },
    GlobalAvgPool,
    Softmax,
    /// Max of per-channel seizure probabilities (2D mode only).
    ChannelMax,
}

impl Layer {
    /// Width and stride for the receptive-field recursion, if the layer has
    /// a spatial extent.
    pub fn window(&self) -> Option<(usize, usize)> {
        match *self {
            Layer::Conv { width, stride, .. } => Some((width, stride)),
            Layer::AvgPool { width, stride } => Some((width, stride)),
            _ => None,
        }
    }

    pub fn n_params(&self) -> usize {
        match *self {
            Layer::Conv { c_in, c_out, width, .. } => c_out * c_in * width + c_out,
            Layer::BatchNorm { channels } => 2 * channels,
            _ => 0,
        }
    }
}

/// Receptive field of the last windowed layer in `layers` (given in
/// forward order), uncapped: `RF = (RF − 1)·s + f` walking back from the
/// deepest layer, starting from its own width.
pub fn receptive_field_of(layers: &[(usize, usize)]) -> usize {
    let mut iter = layers.iter().rev();
    let Some(&(f, _)) = iter.next() else { return 1 };
    iter.fold(f, |rf, &(f, s)| (rf - 1) * s + f)
}

/// Receptive field of one class-map position in input samples, capped at
/// `input_len`.
pub fn receptive_field(config: &FcnConfig) -> usize {
    receptive_field_uncapped(config).min(config.input_len)
}

pub fn receptive_field_uncapped(config: &FcnConfig) -> usize {
    let windows: Vec<(usize, usize)> = config.layer_plan().iter().filter_map(Layer::window).collect();
    receptive_field_of(&windows)
}

/// Trainable parameters: conv weights and biases plus BN scales and shifts.
pub fn count_params(config: &FcnConfig) -> usize {
    config.layer_plan().iter().map(Layer::n_params).sum()
}
