//! From per-window probabilities to the final per-epoch seizure trace:
//! channel max, centred moving average, background adaptation, collar.

use std::fmt::Write as _;

use crate::error::{Error, Result};

/// Seizure probabilities at a fixed period. Entry `i` is stamped at
/// `t0 + i·period`, the end of the window it was computed from.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityTrace {
    pub period: f64,
    pub t0: f64,
    values: Vec<f64>,
    per_channel: Option<Vec<Vec<f64>>>,
}

fn check_unit(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(Error::InvalidArgument(format!("probability {} at entry {i} is outside [0, 1]", values[i]))),
        None => Ok(()),
    }
}

impl ProbabilityTrace {
    pub fn new(period: f64, t0: f64, values: Vec<f64>) -> Result<Self> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(Error::InvalidArgument(format!("trace period must be positive, got {period}")));
        }
        check_unit(&values)?;
        Ok(Self { period, t0, values, per_channel: None })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Per-channel probabilities this trace was fused from, if any.
    pub fn per_channel(&self) -> Option<&[Vec<f64>]> {
        self.per_channel.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.period
    }

    fn with_values(&self, values: Vec<f64>) -> Self {
        Self { period: self.period, t0: self.t0, values, per_channel: None }
    }
}

/// Elementwise maximum over channels `[n_channels][n_epochs]`.
pub fn fuse_channels_max(per_channel: &[Vec<f64>], period: f64, t0: f64) -> Result<ProbabilityTrace> {
    let first = per_channel.first().ok_or_else(|| Error::InvalidArgument("no channels to fuse".into()))?;
    if let Some(r) = per_channel.iter().position(|r| r.len() != first.len()) {
        return Err(Error::Shape(format!("channel {r} has {} epochs, channel 0 has {}", per_channel[r].len(), first.len())));
    }
    for row in per_channel {
        check_unit(row)?;
    }
    let values = (0..first.len()).map(|i| per_channel.iter().map(|r| r[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let mut trace = ProbabilityTrace::new(period, t0, values)?;
    trace.per_channel = Some(per_channel.to_vec());
    Ok(trace)
}

/// Centred mean over `⌊window_s / period⌋` entries, truncated at the edges.
pub fn moving_average(trace: &ProbabilityTrace, window_s: f64) -> Result<ProbabilityTrace> {
    let w = (window_s / trace.period).floor();
    if !(w >= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "moving-average window {window_s} s is shorter than the period {} s",
            trace.period
        )));
    }
    let w = w as usize;
    let x = &trace.values;
    let n = x.len();
    let back = w / 2;
    let out = (0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + w - back).min(n);
            let win = &x[lo..hi];
            // mean taken relative to the centre keeps constant runs exact
            let c = x[i];
            let mean = c + win.iter().map(|v| v - c).sum::<f64>() / win.len() as f64;
            let (mn, mx) = win.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
            mean.clamp(mn, mx)
        })
        .collect();
    Ok(trace.with_values(out))
}

/// Subtracts `beta` times a causal exponential moving average (time
/// constant `time_constant_s`, starting from 0) and rescales by
/// `1 / (1 − beta·baseline)`. Entries where that factor is undefined are 0.
pub fn background_adapt(trace: &ProbabilityTrace, time_constant_s: f64, beta: f64) -> Result<ProbabilityTrace> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidArgument(format!("adaptation beta must be non-negative, got {beta}")));
    }
    if !(time_constant_s > 0.0) {
        return Err(Error::InvalidArgument(format!("adaptation time constant must be positive, got {time_constant_s}")));
    }
    let alpha = 1.0 - (-trace.period / time_constant_s).exp();
    let mut baseline = 0.0;
    let out = trace
        .values
        .iter()
        .map(|&x| {
            baseline += alpha * (x - baseline);
            let denom = 1.0 - beta * baseline;
            if denom > 0.0 {
                ((x - beta * baseline).clamp(0.0, 1.0) / denom).min(1.0)
            } else {
                0.0
            }
        })
        .collect();
    Ok(trace.with_values(out))
}

/// Centred sliding maximum of width `2·⌊collar_s / period⌋ + 1`.
pub fn collar(trace: &ProbabilityTrace, collar_s: f64) -> Result<ProbabilityTrace> {
    if !(collar_s >= 0.0) {
        return Err(Error::InvalidArgument(format!("collar must be non-negative, got {collar_s}")));
    }
    let k = (collar_s / trace.period).floor() as usize;
    let x = &trace.values;
    let n = x.len();
    let out = (0..n)
        .map(|i| x[i.saturating_sub(k)..(i + k + 1).min(n)].iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(trace.with_values(out))
}

#[derive(Debug, Clone, PartialEq)]
pub struct PostprocConfig {
    pub fuse: bool,
    pub smooth: bool,
    pub smooth_window_s: f64,
    pub adapt: bool,
    pub adapt_time_constant_s: f64,
    pub adapt_beta: f64,
    pub collar: bool,
    pub collar_s: f64,
}

impl Default for PostprocConfig {
    fn default() -> Self {
        Self {
            fuse: true,
            smooth: true,
            smooth_window_s: 60.0,
            adapt: false,
            adapt_time_constant_s: 600.0,
            adapt_beta: 1.0,
            collar: true,
            collar_s: 30.0,
        }
    }
}

impl PostprocConfig {
    /// Every stage off.
    pub fn identity() -> Self {
        Self { fuse: false, smooth: false, adapt: false, collar: false, ..Self::default() }
    }
}

/// Channel max → moving average → background adaptation → collar, each
/// stage switchable. With fusion off the input must be a single row.
pub fn postprocess_chain(per_channel: &[Vec<f64>], period: f64, t0: f64, cfg: &PostprocConfig) -> Result<ProbabilityTrace> {
    let mut trace = if cfg.fuse {
        fuse_channels_max(per_channel, period, t0)?
    } else {
        match per_channel {
            [row] => ProbabilityTrace::new(period, t0, row.clone())?,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "channel fusion is disabled but {} channels were given",
                    per_channel.len()
                )))
            }
        }
    };
    if cfg.smooth {
        trace = moving_average(&trace, cfg.smooth_window_s)?;
    }
    if cfg.adapt {
        trace = background_adapt(&trace, cfg.adapt_time_constant_s, cfg.adapt_beta)?;
    }
    if cfg.collar {
        trace = collar(&trace, cfg.collar_s)?;
    }
    Ok(trace)
}

/// `time_s,probability` rows.
pub fn trace_to_csv(trace: &ProbabilityTrace) -> String {
    let mut s = String::from("time_s,probability\n");
    for (i, v) in trace.values.iter().enumerate() {
        let _ = writeln!(s, "{:.3},{:.6}", trace.time(i), v);
    }
    s
}

/// Wide per-channel CSV: `time_s,<name>...`.
pub fn channels_to_csv(per_channel: &[Vec<f64>], names: &[String], period: f64, t0: f64) -> Result<String> {
    if names.len() != per_channel.len() {
        return Err(Error::Shape(format!("{} names for {} channels", names.len(), per_channel.len())));
    }
    let n = per_channel.first().map_or(0, Vec::len);
    if per_channel.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("channels differ in length".into()));
    }
    let mut s = format!("time_s,{}\n", names.join(","));
    for i in 0..n {
        let _ = write!(s, "{:.3}", t0 + i as f64 * period);
        for row in per_channel {
            let _ = write!(s, ",{:.6}", row[i]);
        }
        s.push('\n');
    }
    Ok(s)
}

pub fn trace_from_csv(text: &str) -> Result<ProbabilityTrace> {
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("time_s,probability") {
        return Err(Error::Format("trace CSV must start with time_s,probability".into()));
    }
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let parse = |f: Option<&str>| {
            f.and_then(|v| v.trim().parse::<f64>().ok())
                .ok_or_else(|| Error::Format(format!("trace CSV line {}: {line:?}", i + 2)))
        };
        let mut it = line.split(',');
        times.push(parse(it.next())?);
        values.push(parse(it.next())?);
    }
    let period = if times.len() > 1 { times[1] - times[0] } else { 1.0 };
    ProbabilityTrace::new(period, times.first().copied().unwrap_or(0.0), values)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn tr(v: Vec<f64>) -> ProbabilityTrace {
        ProbabilityTrace::new(1.0, 8.0, v).unwrap()
    }

    #[test]
    fn fuse_examples() {
        let t = fuse_channels_max(&[vec![0.2, 0.9], vec![0.7, 0.1]], 1.0, 0.0).unwrap();
        assert_eq!(t.values(), &[0.7, 0.9]);
        let one = fuse_channels_max(&[vec![0.3, 0.4]], 1.0, 0.0).unwrap();
        assert_eq!(one.values(), &[0.3, 0.4]);
        assert!(fuse_channels_max(&[], 1.0, 0.0).is_err());
        assert!(matches!(fuse_channels_max(&[vec![0.1], vec![0.1, 0.2]], 1.0, 0.0), Err(Error::Shape(_))));
        assert!(fuse_channels_max(&[vec![1.5]], 1.0, 0.0).is_err());
    }

    #[test]
    fn moving_average_examples() {
        let c = moving_average(&tr(vec![0.37; 500]), 60.0).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.37));
        let mut x = vec![0.0; 400];
        x[200] = 1.0;
        let m = moving_average(&tr(x), 60.0).unwrap();
        let nonzero: Vec<usize> = (0..400).filter(|&i| m.values()[i] > 0.0).collect();
        assert_eq!(nonzero.len(), 60);
        assert!(nonzero.iter().all(|&i| (m.values()[i] - 1.0 / 60.0).abs() < 1e-15));
        assert!(moving_average(&tr(vec![0.1; 3]), 0.5).is_err());
        // truncated edge window
        let e = moving_average(&tr(vec![1.0, 0.0, 0.0, 0.0]), 3.0).unwrap();
        assert!((e.values()[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn adaptation_examples() {
        let z = background_adapt(&tr(vec![0.0; 50]), 600.0, 1.0).unwrap();
        assert!(z.values().iter().all(|&v| v == 0.0));
        let x = vec![0.1, 0.8, 0.33, 1.0, 0.0];
        assert_eq!(background_adapt(&tr(x.clone()), 600.0, 0.0).unwrap().values(), &x[..]);
        let c = background_adapt(&tr(vec![0.4; 3000]), 60.0, 1.0).unwrap();
        let v = c.values();
        assert!(v.windows(2).all(|w| w[1] <= w[0]));
        // closed form: baseline_t = c·(1 − (1−α)^(t+1))
        let alpha = 1.0 - (-1.0f64 / 60.0).exp();
        let b = 0.4 * (1.0 - (1.0 - alpha).powi(100));
        assert!((v[99] - (0.4 - b) / (1.0 - b)).abs() < 1e-12);
        assert!(v[2999] < 1e-6);
        assert!(background_adapt(&tr(x), 600.0, -0.5).is_err());
    }

    #[test]
    fn collar_examples() {
        let mut x = vec![0.0; 300];
        x[100..=110].iter_mut().for_each(|v| *v = 0.9);
        let c = collar(&ProbabilityTrace::new(1.0, 0.0, x.clone()).unwrap(), 30.0).unwrap();
        for (i, &v) in c.values().iter().enumerate() {
            assert_eq!(v, if (70..=140).contains(&i) { 0.9 } else { 0.0 }, "{i}");
        }
        assert_eq!(collar(&tr(x.clone()), 0.0).unwrap().values(), &x[..]);
        assert!(collar(&tr(x), -1.0).is_err());
    }

    #[test]
    fn chain_examples() {
        let rows = vec![vec![0.2, 0.5, 0.9, 0.1]];
        let id = postprocess_chain(&rows, 1.0, 8.0, &PostprocConfig::identity()).unwrap();
        assert_eq!(id.values(), &rows[0][..]);
        assert!(postprocess_chain(&[vec![0.1], vec![0.2]], 1.0, 0.0, &PostprocConfig::identity()).is_err());

        let constant = vec![vec![0.3; 200], vec![0.3; 200]];
        let cfg = PostprocConfig::default();
        let out = postprocess_chain(&constant, 1.0, 0.0, &cfg).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.3));
        let adapted = postprocess_chain(&constant, 1.0, 0.0, &PostprocConfig { adapt: true, ..cfg.clone() }).unwrap();
        assert!(adapted.values()[199] < 0.3);

        let single: Vec<f64> = (0..300).map(|i| ((i * 37) % 100) as f64 / 100.0).collect();
        let chained = postprocess_chain(&[single.clone()], 1.0, 0.0, &PostprocConfig { adapt: true, ..cfg }).unwrap();
        let manual = collar(&background_adapt(&moving_average(&tr(single), 60.0).unwrap(), 600.0, 1.0).unwrap(), 30.0).unwrap();
        assert_eq!(chained.values(), manual.values());
    }

    #[test]
    fn csv_round_trip() {
        let t = ProbabilityTrace::new(1.0, 8.0, vec![0.25, 0.5, 0.125]).unwrap();
        let text = trace_to_csv(&t);
        assert!(text.starts_with("time_s,probability\n8.000,0.250000\n"));
        assert_eq!(trace_from_csv(&text).unwrap(), t);
        let wide = channels_to_csv(&[vec![0.1, 0.2], vec![0.3, 0.4]], &["a".into(), "b".into()], 1.0, 8.0).unwrap();
        assert_eq!(wide, "time_s,a,b\n8.000,0.100000,0.300000\n9.000,0.200000,0.400000\n");
    }

    fn unit_trace() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.0f64..=1.0, 1..300)
    }

    proptest! {
        #[test]
        fn stages_stay_in_unit_interval(x in unit_trace(), w in 1.0f64..90.0, c in 0.0f64..40.0, tau in 1.0f64..1000.0, beta in 0.0f64..2.0) {
            let t = tr(x.clone());
            for out in [
                moving_average(&t, w).unwrap(),
                background_adapt(&t, tau, beta).unwrap(),
                collar(&t, c).unwrap(),
            ] {
                prop_assert_eq!(out.len(), x.len());
                prop_assert!(out.values().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }

        #[test]
        fn moving_average_within_range(x in unit_trace(), w in 1.0f64..90.0) {
            let m = moving_average(&tr(x.clone()), w).unwrap();
            let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(m.values().iter().all(|&v| v >= lo && v <= hi));
        }

        #[test]
        fn collar_dominates_and_is_monotone(x in unit_trace(), d in prop::collection::vec(0.0f64..0.5, 300), c in 0.0f64..40.0) {
            let y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| (a + b).min(1.0)).collect();
            let cx = collar(&tr(x.clone()), c).unwrap();
            let cy = collar(&tr(y), c).unwrap();
            prop_assert!(cx.values().iter().zip(&x).all(|(o, i)| o >= i));
            prop_assert!(cx.values().iter().zip(cy.values()).all(|(a, b)| a <= b));
        }

        #[test]
        fn fuse_is_monotone_upper_bound(rows in prop::collection::vec(prop::collection::vec(0.0f64..=1.0, 20), 1..6)) {
            let f = fuse_channels_max(&rows, 1.0, 0.0).unwrap();
            for r in &rows {
                prop_assert!(f.values().iter().zip(r).all(|(a, b)| a >= b));
            }
            let raised: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|v| (v + 0.1).min(1.0)).collect()).collect();
            let g = fuse_channels_max(&raised, 1.0, 0.0).unwrap();
            prop_assert!(f.values().iter().zip(g.values()).all(|(a, b)| a <= b));
        }
    }
}
