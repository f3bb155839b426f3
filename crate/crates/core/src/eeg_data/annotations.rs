use std::collections::HashSet;
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A seizure interval in seconds. Without a channel it is a weak event;
/// with a channel it is a strong (spatially localised) event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeizureEvent {
    pub onset: f64,
    pub offset: f64,
    pub channel: Option<usize>,
}

impl SeizureEvent {
    pub fn weak(onset: f64, offset: f64) -> Self {
        Self { onset, offset, channel: None }
    }

    pub fn strong(onset: f64, offset: f64, channel: usize) -> Self {
        Self { onset, offset, channel: Some(channel) }
    }

    pub fn is_weak(&self) -> bool {
        self.channel.is_none()
    }

    pub fn duration(&self) -> f64 {
        self.offset - self.onset
    }

    /// True when `[start, end)` lies entirely inside this event.
    pub fn contains_span(&self, start: f64, end: f64) -> bool {
        start >= self.onset && end <= self.offset
    }

    pub fn overlaps_span(&self, start: f64, end: f64) -> bool {
        start < self.offset && end > self.onset
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Completeness {
    WeakOnly,
    WeakPartialStrong,
}

/// All seizure annotations of one subject, sorted by onset.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationSet {
    pub subject_id: String,
    events: Vec<SeizureEvent>,
}

impl AnnotationSet {
    /// Validates and sorts `events`. `n_channels`, when known, bounds the
    /// channel index of strong events.
    pub fn new(
        subject_id: impl Into<String>,
        mut events: Vec<SeizureEvent>,
        n_channels: Option<usize>,
    ) -> Result<Self> {
        for (i, ev) in events.iter().enumerate() {
            check_event(ev, n_channels).map_err(|reason| Error::Annotation { line: i + 1, reason })?;
        }
        events.sort_by(|a, b| {
            a.onset
                .total_cmp(&b.onset)
                .then(b.offset.total_cmp(&a.offset))
                .then(a.channel.cmp(&b.channel))
        });
        let set = Self { subject_id: subject_id.into(), events };
        for (i, ev) in set.events.iter().enumerate() {
            if !ev.is_weak() && !set.weak().any(|w| w.contains_span(ev.onset, ev.offset)) {
                return Err(Error::Annotation {
                    line: i + 1,
                    reason: format!(
                        "strong event [{}, {}) on channel {} is not inside any weak event",
                        ev.onset,
                        ev.offset,
                        ev.channel.unwrap_or_default()
                    ),
                });
            }
        }
        Ok(set)
    }

    pub fn empty(subject_id: impl Into<String>) -> Self {
        Self { subject_id: subject_id.into(), events: Vec::new() }
    }

    pub fn events(&self) -> &[SeizureEvent] {
        &self.events
    }

    pub fn weak(&self) -> impl Iterator<Item = &SeizureEvent> + '_ {
        self.events.iter().filter(|e| e.is_weak())
    }

    pub fn strong(&self) -> impl Iterator<Item = &SeizureEvent> + '_ {
        self.events.iter().filter(|e| !e.is_weak())
    }

    pub fn completeness(&self) -> Completeness {
        if self.strong().next().is_some() {
            Completeness::WeakPartialStrong
        } else {
            Completeness::WeakOnly
        }
    }

    /// Checks that every event ends inside a record of `duration` seconds.
    pub fn check_duration(&self, duration: f64) -> Result<()> {
        match self.events.iter().position(|e| e.offset > duration) {
            Some(i) => Err(Error::Annotation {
                line: i + 1,
                reason: format!("event ends at {} s, record lasts {duration} s", self.events[i].offset),
            }),
            None => Ok(()),
        }
    }

    /// Keeps every weak event but only the strong events whose weak parent
    /// satisfies `keep` (called with the parent's index among weak events).
    pub fn restrict_strong(&self, mut keep: impl FnMut(usize) -> bool) -> Self {
        let weak: Vec<SeizureEvent> = self.weak().copied().collect();
        let kept: Vec<bool> = (0..weak.len()).map(&mut keep).collect();
        let events = self
            .events
            .iter()
            .filter(|e| {
                e.is_weak()
                    || weak
                        .iter()
                        .position(|w| w.contains_span(e.onset, e.offset))
                        .is_some_and(|p| kept[p])
            })
            .copied()
            .collect();
        Self { subject_id: self.subject_id.clone(), events }
    }

    /// Parses the annotation CSV (`onset_s,offset_s,channel`; blank channel
    /// for weak events).
    pub fn from_csv_str(subject_id: impl Into<String>, text: &str, n_channels: Option<usize>) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, header)) if header.trim() == "onset_s,offset_s,channel" => {}
            Some((_, header)) => {
                return Err(Error::Format(format!("unexpected annotation header '{}'", header.trim())))
            }
            None => return Err(Error::Format("empty annotation file".into())),
        }
        let mut events = Vec::new();
        for (idx, line) in lines {
            let line_no = idx + 1;
            let bad = |reason: String| Error::Annotation { line: line_no, reason };
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 || fields.len() > 3 {
                return Err(bad(format!("expected 3 fields, found {}", fields.len())));
            }
            let onset: f64 = fields[0].parse().map_err(|_| bad(format!("bad onset '{}'", fields[0])))?;
            let offset: f64 = fields[1].parse().map_err(|_| bad(format!("bad offset '{}'", fields[1])))?;
            let channel = match fields.get(2) {
                Some(c) if !c.is_empty() => Some(c.parse::<usize>().map_err(|_| bad(format!("bad channel '{c}'")))?),
                _ => None,
            };
            let ev = SeizureEvent { onset, offset, channel };
            check_event(&ev, n_channels).map_err(bad)?;
            events.push(ev);
        }
        Self::new(subject_id, events, n_channels)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("onset_s,offset_s,channel\n");
        for e in &self.events {
            match e.channel {
                Some(c) => writeln!(out, "{},{},{c}", e.onset, e.offset),
                None => writeln!(out, "{},{},", e.onset, e.offset),
            }
            .expect("writing to a String cannot fail");
        }
        out
    }
}

fn check_event(ev: &SeizureEvent, n_channels: Option<usize>) -> std::result::Result<(), String> {
    if !(ev.onset.is_finite() && ev.offset.is_finite()) {
        return Err("non-finite time".into());
    }
    if ev.onset < 0.0 {
        return Err(format!("negative onset {}", ev.onset));
    }
    if ev.offset <= ev.onset {
        return Err(format!("offset {} is not after onset {}", ev.offset, ev.onset));
    }
    if let (Some(c), Some(n)) = (ev.channel, n_channels) {
        if c >= n {
            return Err(format!("channel {c} out of range for {n} channels"));
        }
    }
    Ok(())
}

/// Per-epoch boolean rasterization of an [`AnnotationSet`].
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMask {
    pub epoch_period: f64,
    pub weak: Vec<bool>,
    /// `[n_channels][n_epochs]`, present when the set carries strong events.
    pub strong: Option<Vec<Vec<bool>>>,
}

impl LabelMask {
    pub fn n_epochs(&self) -> usize {
        self.weak.len()
    }
}

/// Epoch `e` covers `[e·period, (e+1)·period)`; it is labelled when the
/// events cover at least half of it.
pub fn rasterize(annotations: &AnnotationSet, epoch_period: f64, n_epochs: usize, n_channels: usize) -> LabelMask {
    assert!(epoch_period > 0.0, "epoch period must be positive");
    let weak = raster_row(annotations.weak(), epoch_period, n_epochs);
    let strong = (annotations.completeness() == Completeness::WeakPartialStrong).then(|| {
        (0..n_channels)
            .map(|c| raster_row(annotations.strong().filter(|e| e.channel == Some(c)), epoch_period, n_epochs))
            .collect()
    });
    LabelMask { epoch_period, weak, strong }
}

fn raster_row<'a>(events: impl Iterator<Item = &'a SeizureEvent>, period: f64, n_epochs: usize) -> Vec<bool> {
    let end = n_epochs as f64 * period;
    let mut spans: Vec<(f64, f64)> = events
        .map(|e| (e.onset.max(0.0), e.offset.min(end)))
        .filter(|(a, b)| b > a)
        .collect();
    spans.sort_by(|a, b| a.0.total_cmp(&b.0));
    // union of intervals
    let mut merged: Vec<(f64, f64)> = Vec::with_capacity(spans.len());
    for (a, b) in spans {
        match merged.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => merged.push((a, b)),
        }
    }
    let mut row = vec![false; n_epochs];
    for (a, b) in merged {
        let first = ((a / period).floor() as usize).min(n_epochs);
        let last = ((b / period).ceil() as usize).min(n_epochs);
        for (e, flag) in row.iter_mut().enumerate().take(last).skip(first) {
            let lo = e as f64 * period;
            let hi = lo + period;
            let overlap = b.min(hi) - a.max(lo);
            if overlap >= 0.5 * period {
                *flag = true;
            }
        }
    }
    row
}

/// Keeps strong labels on a random `fraction` of all weak events pooled
/// over `sets` (at least one when `fraction > 0`); weak events are kept.
pub fn subsample_strong(sets: &[AnnotationSet], fraction: f64, seed: u64) -> Result<Vec<AnnotationSet>> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("strong fraction {fraction} must be in [0, 1]")));
    }
    let owners: Vec<(usize, usize)> =
        sets.iter().enumerate().flat_map(|(i, s)| (0..s.weak().count()).map(move |j| (i, j))).collect();
    let mut n_keep = (fraction * owners.len() as f64).round() as usize;
    if fraction > 0.0 && !owners.is_empty() {
        n_keep = n_keep.max(1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let chosen: HashSet<(usize, usize)> =
        rand::seq::index::sample(&mut rng, owners.len(), n_keep).into_iter().map(|k| owners[k]).collect();
    Ok(sets.iter().enumerate().map(|(i, s)| s.restrict_strong(|j| chosen.contains(&(i, j)))).collect())
}
