use std::sync::Arc;

use rayon::prelude::*;

use crate::eeg_data::{AnnotationSet, EegRecord};
use crate::error::{Error, Result};
use crate::preprocess::{preprocess_record, segment_windows, PreprocessConfig};

/// Whether samples are single channels (strong labels) or whole montages
/// (weak labels).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleKind {
    Strong,
    Weak,
}

/// Where a sample comes from: record index, channel (strong samples only)
/// and first sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SampleRef {
    pub record: usize,
    pub channel: Option<usize>,
    pub start: usize,
}

/// Training windows as references into shared preprocessed records.
#[derive(Debug, Clone)]
pub struct SampleSet {
    records: Arc<Vec<EegRecord>>,
    kind: SampleKind,
    window_len: usize,
    refs: Vec<SampleRef>,
    labels: Vec<u8>,
}

impl SampleSet {
    pub fn empty(records: Arc<Vec<EegRecord>>, kind: SampleKind, window_len: usize) -> Self {
        Self { records, kind, window_len, refs: Vec::new(), labels: Vec::new() }
    }

    pub fn kind(&self) -> SampleKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.refs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.refs.is_empty()
    }

    pub fn window_len(&self) -> usize {
        self.window_len
    }

    /// Rows per sample: 1 for strong samples, the channel count for weak.
    pub fn rows(&self) -> usize {
        match self.kind {
            SampleKind::Strong => 1,
            SampleKind::Weak => self.records.first().map_or(0, EegRecord::n_channels),
        }
    }

    /// 0 = background, 1 = seizure.
    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn refs(&self) -> &[SampleRef] {
        &self.refs
    }

    pub fn records(&self) -> &Arc<Vec<EegRecord>> {
        &self.records
    }

    /// `(subject, channel, start time in seconds)` of sample `i`.
    pub fn provenance(&self, i: usize) -> (&str, Option<usize>, f64) {
        let r = self.refs[i];
        let rec = &self.records[r.record];
        (&rec.subject_id, r.channel, r.start as f64 / rec.sample_rate())
    }

    pub fn count(&self, label: u8) -> usize {
        self.labels.iter().filter(|&&l| l == label).count()
    }

    pub fn push(&mut self, r: SampleRef, label: u8) {
        self.refs.push(r);
        self.labels.push(label);
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            records: Arc::clone(&self.records),
            kind: self.kind,
            window_len: self.window_len,
            refs: indices.iter().map(|&i| self.refs[i]).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    /// Appends the samples of `other`, which must share the records.
    pub fn extend(&mut self, other: &SampleSet) -> Result<()> {
        if !Arc::ptr_eq(&self.records, &other.records) || self.kind != other.kind || self.window_len != other.window_len {
            return Err(Error::InvalidArgument("sample sets do not share records and layout".into()));
        }
        self.refs.extend_from_slice(&other.refs);
        self.labels.extend_from_slice(&other.labels);
        Ok(())
    }

    /// Writes the windows at `indices` into `out` as
    /// `[indices.len(), rows, window_len]`.
    pub fn fill(&self, indices: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.reserve(indices.len() * self.rows() * self.window_len);
        for &i in indices {
            let r = self.refs[i];
            let rec = &self.records[r.record];
            let span = r.start..r.start + self.window_len;
            match r.channel {
                Some(c) => out.extend(rec.channel(c)[span].iter().map(|&v| v as f64)),
                None => {
                    for c in 0..rec.n_channels() {
                        out.extend(rec.channel(c)[span.clone()].iter().map(|&v| v as f64));
                    }
                }
            }
        }
    }

    /// All windows as one flat buffer.
    pub fn inputs(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.fill(&(0..self.len()).collect::<Vec<_>>(), &mut out);
        out
    }
}

/// Brings every record to the target rate of `cfg` (records already there
/// are kept as they are).
pub fn prepare_records(records: &[EegRecord], cfg: &PreprocessConfig) -> Result<Vec<EegRecord>> {
    cfg.validate()?;
    records
        .par_iter()
        .map(|r| if r.sample_rate() == cfg.target_rate { Ok(r.clone()) } else { preprocess_record(r, cfg) })
        .collect()
}

fn check_inputs(records: &[EegRecord], annotations: &[AnnotationSet], cfg: &PreprocessConfig) -> Result<()> {
    if records.len() != annotations.len() {
        return Err(Error::InvalidArgument(format!(
            "{} records but {} annotation sets",
            records.len(),
            annotations.len()
        )));
    }
    if let Some(r) = records.iter().find(|r| r.sample_rate() != cfg.target_rate) {
        return Err(Error::Config(format!(
            "record {} is at {} Hz, samples need {} Hz",
            r.subject_id,
            r.sample_rate(),
            cfg.target_rate
        )));
    }
    if let Some(r) = records.windows(2).find(|w| w[0].n_channels() != w[1].n_channels()) {
        return Err(Error::Shape(format!("records {} and {} differ in channel count", r[0].subject_id, r[1].subject_id)));
    }
    Ok(())
}

/// Single-channel windows: seizure when fully inside a strong event on that
/// channel, background when clear of every weak event. Only the records at
/// `which` are used.
pub fn strong_samples(
    records: &Arc<Vec<EegRecord>>,
    annotations: &[AnnotationSet],
    which: &[usize],
    cfg: &PreprocessConfig,
) -> Result<SampleSet> {
    check_inputs(records, annotations, cfg)?;
    let mut set = SampleSet::empty(Arc::clone(records), SampleKind::Strong, cfg.window_samples());
    for &r in which {
        let rec = &records[r];
        let ann = &annotations[r];
        let windows = segment_windows(rec, cfg.window_len, cfg.window_shift)?;
        for i in 0..windows.len() {
            let (t0, t1) = (windows.start_time(i), windows.end_time(i));
            let clear = !ann.weak().any(|e| e.overlaps_span(t0, t1));
            for c in 0..rec.n_channels() {
                let r_ = SampleRef { record: r, channel: Some(c), start: windows.start_sample(i) };
                if clear {
                    set.push(r_, 0);
                } else if ann.strong().any(|e| e.channel == Some(c) && e.contains_span(t0, t1)) {
                    set.push(r_, 1);
                }
            }
        }
    }
    Ok(set)
}

/// All-channel windows: 1 when fully inside a weak event, 0 when clear of
/// all of them; windows straddling a boundary are left out.
pub fn weak_samples(
    records: &Arc<Vec<EegRecord>>,
    annotations: &[AnnotationSet],
    which: &[usize],
    cfg: &PreprocessConfig,
) -> Result<SampleSet> {
    check_inputs(records, annotations, cfg)?;
    let mut set = SampleSet::empty(Arc::clone(records), SampleKind::Weak, cfg.window_samples());
    for &r in which {
        let rec = &records[r];
        let ann = &annotations[r];
        let windows = segment_windows(rec, cfg.window_len, cfg.window_shift)?;
        for i in 0..windows.len() {
            let (t0, t1) = (windows.start_time(i), windows.end_time(i));
            let r_ = SampleRef { record: r, channel: None, start: windows.start_sample(i) };
            if ann.weak().any(|e| e.contains_span(t0, t1)) {
                set.push(r_, 1);
            } else if !ann.weak().any(|e| e.overlaps_span(t0, t1)) {
                set.push(r_, 0);
            }
        }
    }
    Ok(set)
}

/// Strong-label samples from every record. Records not yet at the target
/// rate are preprocessed first.
pub fn make_samples_strong(records: &[EegRecord], annotations: &[AnnotationSet], cfg: &PreprocessConfig) -> Result<SampleSet> {
    if annotations.iter().all(|a| a.strong().next().is_none()) {
        return Err(Error::InvalidArgument("no strong annotations: strong-label samples need channel-level events".into()));
    }
    let records = Arc::new(prepare_records(records, cfg)?);
    let all: Vec<usize> = (0..records.len()).collect();
    strong_samples(&records, annotations, &all, cfg)
}

/// Weak-label samples from every record.
pub fn make_samples_weak(records: &[EegRecord], annotations: &[AnnotationSet], cfg: &PreprocessConfig) -> Result<SampleSet> {
    let records = Arc::new(prepare_records(records, cfg)?);
    let all: Vec<usize> = (0..records.len()).collect();
    weak_samples(&records, annotations, &all, cfg)
}
