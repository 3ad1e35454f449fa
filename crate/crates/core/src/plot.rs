//! Self-contained SVG line plots of term series.
//!
//! Output depends only on the inputs: coordinates are printed with a fixed
//! number of decimals and elements are emitted in input order, so identical
//! inputs give identical bytes.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::asymptotics::TermSeries;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scale {
    Linear,
    /// Base-10 logarithmic; non-positive values are not drawn.
    Log,
}

/// A horizontal reference line, e.g. a theoretical limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefLine {
    pub label: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlotStyle {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub x_scale: Scale,
    pub y_scale: Scale,
    pub ref_lines: Vec<RefLine>,
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

struct Axis {
    scale: Scale,
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn new(scale: Scale, values: impl Iterator<Item = f64>, px_lo: f64, px_hi: f64) -> Option<Self> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter_map(|v| transform(scale, v)) {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if !lo.is_finite() {
            return None;
        }
        let pad = if hi > lo {
            0.05 * (hi - lo)
        } else {
            0.5_f64.max(0.05 * lo.abs())
        };
        Some(Self {
            scale,
            lo: lo - pad,
            hi: hi + pad,
            px_lo,
            px_hi,
        })
    }

    fn px(&self, v: f64) -> Option<f64> {
        transform(self.scale, v).map(|t| self.px_lo + (t - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo))
    }

    /// Tick positions in data units.
    fn ticks(&self) -> Vec<f64> {
        match self.scale {
            Scale::Linear => {
                let span = self.hi - self.lo;
                let raw = span / 5.0;
                let mag = 10f64.powf(raw.log10().floor());
                let step = [1.0, 2.0, 5.0, 10.0]
                    .iter()
                    .map(|m| m * mag)
                    .find(|s| *s >= raw)
                    .unwrap_or(10.0 * mag);
                let first = (self.lo / step).ceil() as i64;
                let last = (self.hi / step).floor() as i64;
                (first..=last).map(|i| i as f64 * step).collect()
            }
            Scale::Log => {
                let (a, b) = (self.lo.floor() as i32, self.hi.ceil() as i32);
                let mults: &[f64] = if self.hi - self.lo < 1.5 {
                    &[1.0, 2.0, 5.0]
                } else {
                    &[1.0]
                };
                let mut out = Vec::new();
                for e in a..=b {
                    for m in mults {
                        let v = m * 10f64.powi(e);
                        let t = v.log10();
                        if t >= self.lo && t <= self.hi {
                            out.push(v);
                        }
                    }
                }
                out
            }
        }
    }
}

fn transform(scale: Scale, v: f64) -> Option<f64> {
    match scale {
        Scale::Linear if v.is_finite() => Some(v),
        Scale::Log if v.is_finite() && v > 0.0 => Some(v.log10()),
        _ => None,
    }
}

fn tick_label(v: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    let a = v.abs();
    if !(1e-3..1e4).contains(&a) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders `series` as polylines with optional horizontal reference lines.
pub fn emit_plot(series: &[TermSeries], style: &PlotStyle) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.is_empty()) {
        return Err(Error::InvalidInput("nothing to plot: empty series".into()));
    }
    let xs = series.iter().flat_map(|s| s.maturities().iter().copied());
    let ys = series
        .iter()
        .flat_map(|s| s.values().iter().copied())
        .chain(style.ref_lines.iter().map(|r| r.value));
    let x_axis = Axis::new(style.x_scale, xs, LEFT, WIDTH - RIGHT)
        .ok_or_else(|| Error::InvalidInput("no drawable maturities".into()))?;
    let y_axis = Axis::new(style.y_scale, ys, HEIGHT - BOTTOM, TOP)
        .ok_or_else(|| Error::InvalidInput("no drawable values".into()))?;

    let mut svg = String::new();
    let w = &mut svg;
    // writing to a String cannot fail
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&style.title)
    );
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let _ = writeln!(
        w,
        r#"<rect x="{x0:.2}" y="{y1:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y0 - y1
    );
    for t in x_axis.ticks() {
        if let Some(px) = x_axis.px(t) {
            let _ = writeln!(
                w,
                r#"<line x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                y0 + 5.0,
                y0 + 20.0,
                tick_label(t)
            );
        }
    }
    for t in y_axis.ticks() {
        if let Some(py) = y_axis.px(t) {
            let _ = writeln!(
                w,
                r##"<line x1="{:.2}" y1="{py:.2}" x2="{x1:.2}" y2="{py:.2}" stroke="#dddddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                x0,
                x0 - 8.0,
                py + 4.0,
                tick_label(t)
            );
        }
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 15.0,
        escape(&style.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0,
        escape(&style.y_label)
    );

    let mut legend = Vec::new();
    for r in &style.ref_lines {
        if let Some(py) = y_axis.px(r.value) {
            let _ = writeln!(
                w,
                r#"<line x1="{x0:.2}" y1="{py:.2}" x2="{x1:.2}" y2="{py:.2}" stroke="gray" stroke-dasharray="6 4"/>"#
            );
            legend.push(("gray", true, r.label.clone()));
        }
    }
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let points: Vec<String> = s
            .maturities()
            .iter()
            .zip(s.values())
            .filter_map(|(&t, &v)| Some(format!("{:.2},{:.2}", x_axis.px(t)?, y_axis.px(v)?)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            points.join(" ")
        );
        legend.push((color, false, s.label().to_string()));
    }
    for (i, (color, dashed, label)) in legend.iter().enumerate() {
        let ly = TOP + 10.0 + 18.0 * i as f64;
        let lx = x1 + 12.0;
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { "" };
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="1.5"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
            lx + 24.0,
            lx + 30.0,
            ly + 4.0,
            escape(label)
        );
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn style(x: Scale, y: Scale, refs: Vec<RefLine>) -> PlotStyle {
        PlotStyle {
            title: "t".into(),
            x_label: "T".into(),
            y_label: "v".into(),
            x_scale: x,
            y_scale: y,
            ref_lines: refs,
        }
    }

    fn series() -> TermSeries {
        TermSeries::new("ratio", vec![0.01, 0.1, 1.0], vec![0.5, 0.49, 0.48], vec![0.0; 3]).unwrap()
    }

    #[test]
    fn one_series_gives_one_polyline() {
        let svg = emit_plot(&[series()], &style(Scale::Linear, Scale::Linear, vec![])).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("stroke-dasharray").count(), 0);
    }

    #[test]
    fn reference_line_is_drawn() {
        let refs = vec![RefLine {
            label: "1/(H+3/2)".into(),
            value: 0.5,
        }];
        let svg = emit_plot(&[series()], &style(Scale::Log, Scale::Linear, refs)).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        // the reference line and its legend entry
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
    }

    #[test]
    fn output_is_deterministic() {
        let st = style(Scale::Log, Scale::Log, vec![]);
        assert_eq!(
            emit_plot(&[series()], &st).unwrap(),
            emit_plot(&[series()], &st).unwrap()
        );
    }

    #[test]
    fn empty_input_is_rejected() {
        let st = style(Scale::Linear, Scale::Linear, vec![]);
        assert!(emit_plot(&[], &st).is_err());
        let empty = TermSeries::new("e", vec![], vec![], vec![]).unwrap();
        assert!(emit_plot(&[empty], &st).is_err());
    }

    #[test]
    fn labels_are_escaped() {
        let mut st = style(Scale::Linear, Scale::Linear, vec![]);
        st.title = "a < b & c".into();
        let svg = emit_plot(&[series()], &st).unwrap();
        assert!(svg.contains("a &lt; b &amp; c"));
    }
}
