//! Self-contained SVG plots with fixed formatting, so equal input gives
//! byte-equal output.

use std::fmt::Write as _;

use crate::error::{Error, Result};

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 90.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
/// Colour ramp stops at 0, 0.5 and 1.
const RAMP: [(f64, f64, f64); 3] = [(44.0, 123.0, 182.0), (255.0, 255.0, 191.0), (215.0, 25.0, 28.0)];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotKind {
    /// Series in `(1 − specificity, sensitivity)` pairs.
    Roc,
    /// One row of values in `[0, 1]` per series.
    Heatmap,
    /// One line per series; x is the 1-based position.
    Sweep,
}

/// Ramp colour of `v` clamped to `[0, 1]`.
pub fn ramp_color(v: f64) -> String {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    let (a, b, t) = if v <= 0.5 { (RAMP[0], RAMP[1], v / 0.5) } else { (RAMP[1], RAMP[2], (v - 0.5) / 0.5) };
    let mix = |x: f64, y: f64| (x + (y - x) * t).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(a.0, b.0), mix(a.1, b.1), mix(a.2, b.2))
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

fn header(s: &mut String, title: &str) {
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, WIDTH / 2.0);
}

fn axes(s: &mut String, f: &Frame, xlabel: &str, ylabel: &str, xticks: &[f64], yticks: &[f64]) {
    let (l, r, t, b) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<path d="M{l:.2},{t:.2} L{l:.2},{b:.2} L{r:.2},{b:.2}" fill="none" stroke="black"/>"#);
    for &x in xticks {
        let p = f.px(x);
        let _ = writeln!(s, r#"<line x1="{p:.2}" y1="{b:.2}" x2="{p:.2}" y2="{:.2}" stroke="black"/>"#, b + 5.0);
        let _ = writeln!(s, r#"<text x="{p:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, b + 18.0, tick_label(x));
    }
    for &y in yticks {
        let p = f.py(y);
        let _ = writeln!(s, r#"<line x1="{:.2}" y1="{p:.2}" x2="{l:.2}" y2="{p:.2}" stroke="black"/>"#, l - 5.0);
        let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, l - 8.0, p + 4.0, tick_label(y));
    }
    let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{xlabel}</text>"#, (l + r) / 2.0, HEIGHT - 10.0);
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{ylabel}</text>"#,
        (t + b) / 2.0,
        (t + b) / 2.0
    );
}

fn tick_label(v: f64) -> String {
    if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

fn polyline(s: &mut String, f: &Frame, xs: &[f64], ys: &[f64], color: &str, dash: bool) {
    let pts: Vec<String> = xs.iter().zip(ys).map(|(&x, &y)| format!("{:.2},{:.2}", f.px(x), f.py(y))).collect();
    let dash = if dash { r#" stroke-dasharray="4 4""# } else { "" };
    let _ = writeln!(s, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"{dash}/>"#, pts.join(" "));
}

fn check_finite(series: &[Vec<f64>]) -> Result<()> {
    if series.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("plot values must be finite".into()));
    }
    Ok(())
}

/// Renders `series` as an SVG document.
pub fn render_svg(series: &[Vec<f64>], kind: PlotKind) -> Result<String> {
    if series.is_empty() || series.iter().any(Vec::is_empty) {
        return Err(Error::InvalidArgument("nothing to plot: empty series".into()));
    }
    check_finite(series)?;
    let mut s = String::new();
    match kind {
        PlotKind::Roc => {
            if series.len() % 2 != 0 || series.chunks(2).any(|p| p[0].len() != p[1].len()) {
                return Err(Error::Shape("ROC series come in (x, y) pairs of equal length".into()));
            }
            let f = Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
            header(&mut s, "ROC");
            let ticks = [0.0, 0.25, 0.5, 0.75, 1.0];
            axes(&mut s, &f, "1 - specificity", "sensitivity", &ticks, &ticks);
            polyline(&mut s, &f, &[0.0, 1.0], &[0.0, 1.0], "#999999", true);
            for (k, pair) in series.chunks(2).enumerate() {
                polyline(&mut s, &f, &pair[0], &pair[1], PALETTE[k % PALETTE.len()], false);
            }
        }
        PlotKind::Heatmap => {
            let cols = series.iter().map(Vec::len).max().unwrap_or(1);
            let rows = series.len();
            let f = Frame { x0: 0.0, x1: cols as f64, y0: rows as f64, y1: 0.0 };
            header(&mut s, "seizure probability");
            let (cw, rh) = ((WIDTH - LEFT - RIGHT) / cols as f64, (HEIGHT - TOP - BOTTOM) / rows as f64);
            for (r, row) in series.iter().enumerate() {
                for (c, &v) in row.iter().enumerate() {
                    let _ = writeln!(
                        s,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                        f.px(c as f64),
                        f.py(r as f64),
                        cw + 0.05,
                        rh,
                        ramp_color(v)
                    );
                }
            }
            let xticks: Vec<f64> = (0..=4).map(|k| (cols as f64 * k as f64 / 4.0).round()).collect();
            axes(&mut s, &Frame { y0: 0.0, y1: rows as f64, ..f }, "sample", "channel", &xticks, &[]);
            for r in 0..rows {
                let y = TOP + (r as f64 + 0.5) * rh + 4.0;
                let _ = writeln!(s, r#"<text x="{:.2}" y="{y:.2}" text-anchor="end">{r}</text>"#, LEFT - 8.0);
            }
            let bar_x = WIDTH - RIGHT + 20.0;
            let steps = 20;
            let h = (HEIGHT - TOP - BOTTOM) / steps as f64;
            for k in 0..steps {
                let v = 1.0 - (k as f64 + 0.5) / steps as f64;
                let _ = writeln!(
                    s,
                    r#"<rect x="{bar_x:.2}" y="{:.2}" width="16" height="{:.2}" fill="{}"/>"#,
                    TOP + k as f64 * h,
                    h + 0.05,
                    ramp_color(v)
                );
            }
            for (v, y) in [(1.0, TOP), (0.5, (TOP + HEIGHT - BOTTOM) / 2.0), (0.0, HEIGHT - BOTTOM)] {
                let _ = writeln!(s, r#"<text x="{:.2}" y="{:.2}">{v:.1}</text>"#, bar_x + 22.0, y + 4.0);
            }
        }
        PlotKind::Sweep => {
            let n = series.iter().map(Vec::len).max().unwrap_or(1);
            let lo = series.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            let hi = series.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
            let pad = ((hi - lo) * 0.1).max(0.5);
            let f = Frame { x0: 0.5, x1: n as f64 + 0.5, y0: lo - pad, y1: hi + pad };
            header(&mut s, "architecture sweep");
            let xticks: Vec<f64> = (1..=n).map(|k| k as f64).collect();
            let yticks: Vec<f64> = (0..=4).map(|k| f.y0 + (f.y1 - f.y0) * k as f64 / 4.0).collect();
            axes(&mut s, &f, "configuration", "AUC (%)", &xticks, &yticks);
            for (k, ys) in series.iter().enumerate() {
                let xs: Vec<f64> = (1..=ys.len()).map(|i| i as f64).collect();
                let color = PALETTE[k % PALETTE.len()];
                polyline(&mut s, &f, &xs, ys, color, false);
                for (&x, &y) in xs.iter().zip(ys) {
                    let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{color}"/>"#, f.px(x), f.py(y));
                }
                let _ = writeln!(
                    s,
                    r#"<text x="{:.2}" y="{:.2}" fill="{color}">series {}</text>"#,
                    WIDTH - RIGHT + 10.0,
                    TOP + 16.0 * (k as f64 + 1.0),
                    k + 1
                );
            }
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_roc_passes_through_the_corner() {
        let svg = render_svg(&[vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]], PlotKind::Roc).unwrap();
        let f = Frame { x0: 0.0, x1: 1.0, y0: 0.0, y1: 1.0 };
        assert!(svg.contains(&format!("{:.2},{:.2}", f.px(0.0), f.py(1.0))));
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
    }

    #[test]
    fn flat_heatmap_is_one_mid_ramp_colour() {
        let svg = render_svg(&[vec![0.5; 10], vec![0.5; 10]], PlotKind::Heatmap).unwrap();
        let mid = ramp_color(0.5);
        assert_eq!(mid, "#ffffbf");
        let cells: Vec<&str> = svg.lines().filter(|l| l.starts_with("<rect") && !l.contains("width=\"16\"")).skip(1).collect();
        assert_eq!(cells.len(), 20);
        assert!(cells.iter().all(|l| l.contains(&mid)));
    }

    #[test]
    fn rendering_is_deterministic() {
        let series = vec![vec![90.0, 92.5, 95.0], vec![91.0, 93.0, 94.0]];
        assert_eq!(render_svg(&series, PlotKind::Sweep).unwrap(), render_svg(&series, PlotKind::Sweep).unwrap());
    }

    #[test]
    fn empty_or_malformed_input_is_rejected() {
        for kind in [PlotKind::Roc, PlotKind::Heatmap, PlotKind::Sweep] {
            assert!(render_svg(&[], kind).is_err());
            assert!(render_svg(&[vec![]], kind).is_err());
        }
        assert!(render_svg(&[vec![0.0, 1.0]], PlotKind::Roc).is_err());
        assert!(render_svg(&[vec![f64::NAN]], PlotKind::Sweep).is_err());
    }

    #[test]
    fn ramp_end_points() {
        assert_eq!(ramp_color(0.0), "#2c7bb6");
        assert_eq!(ramp_color(1.0), "#d7191c");
        assert_eq!(ramp_color(7.0), ramp_color(1.0));
    }
}
