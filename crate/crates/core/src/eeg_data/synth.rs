//! Synthetic neonatal-like EEG: 1/f background with rhythmic, evolving
//! seizure discharges injected into a subset of channels.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use super::{AnnotationSet, EegRecord, SeizureEvent};
use crate::error::{Error, Result};

const BACKGROUND_RMS_UV: f64 = 30.0;
/// Gap kept between consecutive seizures and from the record edges.
const MIN_GAP_S: f64 = 30.0;

const MONTAGE_8: [&str; 8] = ["F4-C4", "C4-O2", "F3-C3", "C3-O1", "T4-C4", "C4-Cz", "Cz-C3", "C3-T3"];

/// How many channels a seizure occupies.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ChannelSpread {
    Fixed(usize),
    /// Uniform over `min..=max` channels.
    Uniform { min: usize, max: usize },
}

impl ChannelSpread {
    fn sample(&self, rng: &mut impl Rng) -> usize {
        match *self {
            ChannelSpread::Fixed(k) => k,
            ChannelSpread::Uniform { min, max } => rng.gen_range(min..=max),
        }
    }

    fn bounds(&self) -> (usize, usize) {
        match *self {
            ChannelSpread::Fixed(k) => (k, k),
            ChannelSpread::Uniform { min, max } => (min, max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub n_subjects: usize,
    /// Seconds per record.
    pub record_duration: f64,
    pub n_channels: usize,
    pub sample_rate: f64,
    /// Expected seizures per hour.
    pub seizure_rate: f64,
    /// Seizure duration range in seconds; the lower bound is at least 10.
    pub duration_range: (f64, f64),
    pub channel_spread: ChannelSpread,
    /// Peak seizure amplitude over background RMS.
    pub snr: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_subjects: 9,
            record_duration: 3600.0,
            n_channels: 8,
            sample_rate: 256.0,
            seizure_rate: 6.0,
            duration_range: (30.0, 180.0),
            channel_spread: ChannelSpread::Uniform { min: 1, max: 3 },
            snr: 1.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_subjects == 0 || self.n_channels == 0 {
            return bad("n_subjects and n_channels must be positive".into());
        }
        if !(self.sample_rate > 0.0 && self.record_duration > 0.0) {
            return bad("sample_rate and record_duration must be positive".into());
        }
        let (lo, hi) = self.duration_range;
        if !(lo >= 10.0 && hi >= lo) {
            return bad(format!("duration_range [{lo}, {hi}] must satisfy 10 <= min <= max"));
        }
        if !(self.seizure_rate >= 0.0 && self.seizure_rate.is_finite()) {
            return bad(format!("seizure_rate {} must be non-negative", self.seizure_rate));
        }
        if !(self.snr > 0.0) {
            return bad(format!("snr {} must be positive", self.snr));
        }
        let (cmin, cmax) = self.channel_spread.bounds();
        if cmin == 0 || cmax > self.n_channels || cmin > cmax {
            return bad(format!("channel_spread {cmin}..={cmax} invalid for {} channels", self.n_channels));
        }
        let expected = self.seizure_rate * self.record_duration / 3600.0 * 0.5 * (lo + hi);
        if expected > self.record_duration {
            return bad(format!(
                "expected seizure time {expected:.0} s exceeds record duration {} s",
                self.record_duration
            ));
        }
        Ok(())
    }
}

/// Generates `config.n_subjects` records with their annotations. Each
/// subject uses a sub-seed derived from the master seed, so the output does
/// not depend on scheduling.
pub fn synth_dataset(config: &SynthConfig) -> Result<Vec<(EegRecord, AnnotationSet)>> {
    config.validate()?;
    (0..config.n_subjects)
        .into_par_iter()
        .map(|i| synth_subject(config, i))
        .collect()
}

pub fn subject_seed(master: u64, index: usize) -> u64 {
    // splitmix64 finaliser
    let mut z = master ^ (index as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates the `index`-th subject of `config`.
pub fn synth_subject(config: &SynthConfig, index: usize) -> Result<(EegRecord, AnnotationSet)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(subject_seed(config.seed, index));
    let fs = config.sample_rate;
    let n_samples = (config.record_duration * fs).round() as usize;
    let duration = n_samples as f64 / fs;

    let mut channels: Vec<Vec<f64>> = (0..config.n_channels)
        .map(|_| {
            let rms = BACKGROUND_RMS_UV * rng.gen_range(0.8..1.2);
            pink_noise(n_samples, rms, &mut rng)
        })
        .collect();

    let events = place_events(config, duration, &mut rng);
    let mut annotations = Vec::new();
    for &(onset, offset) in &events {
        let spread = config.channel_spread.sample(&mut rng);
        let chosen = rand::seq::index::sample(&mut rng, config.n_channels, spread).into_vec();
        let mut chosen = chosen;
        chosen.sort_unstable();
        let f_start = rng.gen_range(1.0..3.0);
        let f_end = rng.gen_range(1.0..3.0);
        let harmonic = rng.gen_range(0.2..0.5);
        let harmonic_phase = rng.gen_range(0.0..2.0 * PI);
        annotations.push(SeizureEvent::weak(onset, offset));
        for &c in &chosen {
            let gain = BACKGROUND_RMS_UV * config.snr * rng.gen_range(0.8..1.0);
            let phase0 = rng.gen_range(0.0..2.0 * PI);
            let discharge = Discharge { onset, offset, f_start, f_end, harmonic, harmonic_phase, phase0, gain };
            discharge.inject(&mut channels[c], fs);
            annotations.push(SeizureEvent::strong(onset, offset, c));
        }
    }

    let names: Vec<String> = if config.n_channels == MONTAGE_8.len() {
        MONTAGE_8.iter().map(|s| s.to_string()).collect()
    } else {
        (0..config.n_channels).map(|i| format!("ch{i}")).collect()
    };
    let subject = format!("synth{:02}", index + 1);
    let rows = channels.into_iter().map(|c| c.into_iter().map(|v| v as f32).collect()).collect();
    let record = EegRecord::new(subject.clone(), fs as f32, names, rows)?;
    let annotations = AnnotationSet::new(subject, annotations, Some(config.n_channels))?;
    Ok((record, annotations))
}

/// Non-overlapping seizure intervals with a Poisson count, placed uniformly
/// at random in the space left after the minimum gaps.
fn place_events(config: &SynthConfig, duration: f64, rng: &mut ChaCha8Rng) -> Vec<(f64, f64)> {
    let lambda = config.seizure_rate * duration / 3600.0;
    let mut n = if lambda > 0.0 {
        Poisson::new(lambda).expect("positive rate").sample(rng) as usize
    } else {
        0
    };
    let (lo, hi) = config.duration_range;
    let mut durations: Vec<f64> = (0..n).map(|_| rng.gen_range(lo..=hi).round()).collect();
    loop {
        let used: f64 = durations.iter().sum::<f64>() + (n as f64 + 1.0) * MIN_GAP_S;
        if used <= duration || n == 0 {
            break;
        }
        n -= 1;
        durations.pop();
    }
    if n == 0 {
        return Vec::new();
    }
    let free = duration - durations.iter().sum::<f64>() - (n as f64 + 1.0) * MIN_GAP_S;
    let mut cuts: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..=1.0) * free).collect();
    cuts.sort_by(f64::total_cmp);
    let mut events = Vec::with_capacity(n);
    let mut cursor = MIN_GAP_S;
    let mut prev_cut = 0.0;
    for (d, cut) in durations.iter().zip(cuts) {
        cursor += cut - prev_cut;
        prev_cut = cut;
        let onset = cursor.floor();
        events.push((onset, onset + d));
        cursor = onset + d + MIN_GAP_S;
    }
    events
}

struct Discharge {
    onset: f64,
    offset: f64,
    f_start: f64,
    f_end: f64,
    harmonic: f64,
    harmonic_phase: f64,
    phase0: f64,
    gain: f64,
}

impl Discharge {
    fn inject(&self, channel: &mut [f64], fs: f64) {
        let d = self.offset - self.onset;
        let ramp = (0.2 * d).min(5.0);
        let first = (self.onset * fs).ceil() as usize;
        let last = ((self.offset * fs).floor() as usize).min(channel.len());
        for (i, sample) in channel.iter_mut().enumerate().take(last).skip(first) {
            let t = i as f64 / fs - self.onset;
            // linear chirp: phase = 2π (f0 t + (f1 - f0) t² / 2d)
            let phase = self.phase0 + 2.0 * PI * (self.f_start * t + (self.f_end - self.f_start) * t * t / (2.0 * d));
            let env = (t / ramp).min((d - t) / ramp).clamp(0.0, 1.0);
            let wave = phase.sin() + self.harmonic * (2.0 * phase + self.harmonic_phase).sin();
            *sample += self.gain * env * wave;
        }
    }
}

/// Gaussian white noise shaped to a 1/f spectrum with a bank of first-order
/// sections, rescaled to the requested RMS.
fn pink_noise(n: usize, rms: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    const POLES: [f64; 6] = [0.99886, 0.99332, 0.96900, 0.86650, 0.55000, -0.7616];
    const GAINS: [f64; 6] = [0.0555179, 0.0750759, 0.1538520, 0.3104856, 0.5329522, -0.0168980];
    let mut state = [0.0f64; 6];
    let mut prev_white = 0.0;
    // burn-in so the slowest section starts near steady state
    let burn = 4096;
    let mut out = Vec::with_capacity(n);
    for i in 0..n + burn {
        let white: f64 = StandardNormal.sample(rng);
        let mut acc = 0.0;
        for k in 0..6 {
            state[k] = POLES[k] * state[k] + GAINS[k] * white;
            acc += state[k];
        }
        let pink = acc + 0.5362 * white + 0.115926 * prev_white;
        prev_white = white;
        if i >= burn {
            out.push(pink);
        }
    }
    if n == 0 {
        return out;
    }
    let mean = out.iter().sum::<f64>() / n as f64;
    let var = out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    let scale = if var > 0.0 { rms / var.sqrt() } else { 0.0 };
    out.iter_mut().for_each(|v| *v = (*v - mean) * scale);
    out
}
