//! Neonatal seizure detection from raw multichannel EEG with fully
//! convolutional networks.
//!
//! The crate covers the whole pipeline:
//!
//! ```text
//! NEEG record (256 Hz, N channels)
//!   ├─ preprocess::bandpass_filter   0.5–12.8 Hz linear-phase FIR
//!   ├─ preprocess::resample          anti-aliased decimation to 32 Hz
//!   ├─ preprocess::segment_windows   8 s windows, 1 s shift
//!   ├─ fcn::FcnModel::forward        1D FCN per channel, or 2D FCN over all channels
//!   ├─ postproc::postprocess_chain   channel max → 60 s moving average → adaptation → collar
//!   └─ metrics                       AUC / AUC90, per subject or concatenated
//! ```
//!
//! Training runs on a small reverse-mode differentiation engine
//! ([`autograd`]) that implements only the layers the networks need.
//! Synthetic recordings with weak and strong seizure annotations come from
//! [`eeg_data::synth_dataset`].

pub mod autograd;
pub mod cli;
pub mod eeg_data;
pub mod error;
pub mod fcn;
pub mod metrics;
pub mod postproc;
pub mod preprocess;
pub mod trainer;

pub use error::{Error, Result};
