use crate::error::{Error, Result};

/// A multichannel recording in microvolts, stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EegRecord {
    pub subject_id: String,
    sample_rate: f32,
    channel_names: Vec<String>,
    n_samples: usize,
    data: Vec<f32>,
}

impl EegRecord {
    /// Builds a record from one vector per channel.
    pub fn new(
        subject_id: impl Into<String>,
        sample_rate: f32,
        channel_names: Vec<String>,
        channels: Vec<Vec<f32>>,
    ) -> Result<Self> {
        let n_samples = channels.first().map_or(0, Vec::len);
        for (i, row) in channels.iter().enumerate() {
            if row.len() != n_samples {
                return Err(Error::Shape(format!(
                    "channel {i} has {} samples, channel 0 has {n_samples}",
                    row.len()
                )));
            }
        }
        if channel_names.len() != channels.len() {
            return Err(Error::Shape(format!(
                "{} channel names for {} channels",
                channel_names.len(),
                channels.len()
            )));
        }
        let data = channels.into_iter().flatten().collect();
        Self::from_flat(subject_id, sample_rate, channel_names, n_samples, data)
    }

    /// Builds a record from a channel-major buffer of `names.len() * n_samples` values.
    pub fn from_flat(
        subject_id: impl Into<String>,
        sample_rate: f32,
        channel_names: Vec<String>,
        n_samples: usize,
        data: Vec<f32>,
    ) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::Format(format!("sample rate must be positive, got {sample_rate}")));
        }
        if channel_names.is_empty() {
            return Err(Error::Format("record has no channels".into()));
        }
        if data.len() != channel_names.len() * n_samples {
            return Err(Error::Shape(format!(
                "buffer of {} values does not match {} channels x {n_samples} samples",
                data.len(),
                channel_names.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let (channel, sample) = if n_samples == 0 { (0, 0) } else { (pos / n_samples, pos % n_samples) };
            return Err(Error::NonFinite { channel, sample });
        }
        Ok(Self {
            subject_id: subject_id.into(),
            sample_rate,
            channel_names,
            n_samples,
            data,
        })
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate as f64
    }

    /// The rate exactly as stored in the binary header.
    pub fn sample_rate_f32(&self) -> f32 {
        self.sample_rate
    }

    pub fn n_channels(&self) -> usize {
        self.channel_names.len()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.n_samples as f64 / self.sample_rate()
    }

    pub fn channel_names(&self) -> &[String] {
        &self.channel_names
    }

    pub fn channel(&self, index: usize) -> &[f32] {
        &self.data[index * self.n_samples..(index + 1) * self.n_samples]
    }

    pub fn channels(&self) -> impl Iterator<Item = &[f32]> + '_ {
        (0..self.n_channels()).map(move |c| self.channel(c))
    }

    /// Channel-major sample buffer.
    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Returns a record with the same identity and channel names but new
    /// per-channel signals (and possibly a new rate).
    pub fn with_signals(&self, sample_rate: f32, channels: Vec<Vec<f32>>) -> Result<Self> {
        Self::new(self.subject_id.clone(), sample_rate, self.channel_names.clone(), channels)
    }
}
