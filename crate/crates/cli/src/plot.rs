//! Minimal standalone SVG plots (lines, points, bands, bars, histograms).
//!
//! Every plot is written next to a CSV holding exactly the plotted series,
//! so the SVG is only a convenience view of tabulated data. Output is a
//! pure function of the inputs, which keeps artifacts byte-reproducible.

use std::fmt::Write;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
/// Right margin, which holds the legend.
const RIGHT: f64 = 200.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

/// One drawable element of a figure.
#[derive(Debug, Clone, PartialEq)]
pub enum Element {
    Line { label: String, x: Vec<f64>, y: Vec<f64> },
    Points { label: String, x: Vec<f64>, y: Vec<f64> },
    /// Shaded region between `lo` and `hi`.
    Band { label: String, x: Vec<f64>, lo: Vec<f64>, hi: Vec<f64> },
    /// Rectangles `[left, right] x [0, height]`.
    Bars { label: String, left: Vec<f64>, right: Vec<f64>, height: Vec<f64> },
    /// Vertical marker.
    VLine { label: String, x: f64 },
    /// Symmetric error bars.
    ErrorBars { x: Vec<f64>, y: Vec<f64>, err: Vec<f64> },
}

/// A 2-D figure with linear axes.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Figure {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub elements: Vec<Element>,
    /// Categorical tick labels placed at integer x positions.
    pub x_categories: Option<Vec<String>>,
}

impl Figure {
    pub fn new(title: &str, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Default::default()
        }
    }

    pub fn with(mut self, e: Element) -> Self {
        self.elements.push(e);
        self
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for e in &self.elements {
            match e {
                Element::Line { x, y, .. } | Element::Points { x, y, .. } => {
                    xs.extend(x);
                    ys.extend(y);
                }
                Element::Band { x, lo, hi, .. } => {
                    xs.extend(x);
                    ys.extend(lo);
                    ys.extend(hi);
                }
                Element::Bars {
                    left,
                    right,
                    height,
                    ..
                } => {
                    xs.extend(left);
                    xs.extend(right);
                    ys.extend(height);
                    ys.push(0.0);
                }
                Element::VLine { x, .. } => xs.push(*x),
                Element::ErrorBars { x, y, err } => {
                    xs.extend(x);
                    ys.extend(y.iter().zip(err).map(|(y, e)| y + e));
                    ys.extend(y.iter().zip(err).map(|(y, e)| y - e));
                }
            }
        }
        let finite = |v: &Vec<f64>| -> (f64, f64) {
            let (lo, hi) = v
                .iter()
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            if !lo.is_finite() {
                (0.0, 1.0)
            } else if hi - lo <= f64::EPSILON * lo.abs().max(1.0) {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.04 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = finite(&xs);
        let (y0, y1) = finite(&ys);
        (x0, x1, y0, y1)
    }

    /// Renders the figure as a standalone SVG document.
    pub fn to_svg(&self) -> String {
        let (x0, x1, y0, y1) = self.bounds();
        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;
        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            escape(&self.title)
        );
        // Axes and ticks.
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
        );
        match &self.x_categories {
            Some(cats) => {
                for (i, c) in cats.iter().enumerate() {
                    let x = sx(i as f64);
                    let _ = writeln!(
                        s,
                        r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                        TOP + ph + 18.0,
                        escape(c)
                    );
                }
            }
            None => {
                for t in ticks(x0, x1) {
                    let x = sx(t);
                    let _ = writeln!(
                        s,
                        r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                        TOP + ph,
                        TOP + ph + 5.0,
                        TOP + ph + 18.0,
                        fmt_tick(t)
                    );
                }
            }
        }
        for t in ticks(y0, y1) {
            let y = sy(t);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
                LEFT - 5.0,
                LEFT - 8.0,
                y + 4.0,
                fmt_tick(t)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 15.0,
            escape(&self.x_label)
        );
        let _ = writeln!(
            s,
            r#"<text x="15" y="{:.2}" text-anchor="middle" transform="rotate(-90 15 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(&self.y_label)
        );
        // Elements.
        let mut legend = Vec::new();
        for (i, e) in self.elements.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            match e {
                Element::Band { label, x, lo, hi } => {
                    let mut pts: Vec<String> = x
                        .iter()
                        .zip(hi)
                        .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                        .collect();
                    pts.extend(
                        x.iter()
                            .zip(lo)
                            .rev()
                            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y))),
                    );
                    let _ = writeln!(
                        s,
                        r#"<polygon points="{}" fill="{color}" fill-opacity="0.25" stroke="none"/>"#,
                        pts.join(" ")
                    );
                    legend.push((label.clone(), color));
                }
                Element::Line { label, x, y } => {
                    let pts: Vec<String> = x
                        .iter()
                        .zip(y)
                        .filter(|(_, y)| y.is_finite())
                        .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                        .collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
                        pts.join(" ")
                    );
                    legend.push((label.clone(), color));
                }
                Element::Points { label, x, y } => {
                    for (x, y) in x.iter().zip(y).filter(|(_, y)| y.is_finite()) {
                        let _ = writeln!(
                            s,
                            r#"<circle cx="{:.2}" cy="{:.2}" r="2" fill="{color}"/>"#,
                            sx(*x),
                            sy(*y)
                        );
                    }
                    legend.push((label.clone(), color));
                }
                Element::Bars {
                    label,
                    left,
                    right,
                    height,
                } => {
                    for ((l, r), h) in left.iter().zip(right).zip(height) {
                        let (top, bottom) = (sy(h.max(0.0)), sy(h.min(0.0)));
                        let _ = writeln!(
                            s,
                            r#"<rect x="{:.2}" y="{top:.2}" width="{:.2}" height="{:.2}" fill="{color}" fill-opacity="0.7" stroke="{color}"/>"#,
                            sx(*l),
                            (sx(*r) - sx(*l)).max(0.5),
                            (bottom - top).max(0.0)
                        );
                    }
                    legend.push((label.clone(), color));
                }
                Element::VLine { label, x } => {
                    let px = sx(*x);
                    let _ = writeln!(
                        s,
                        r#"<line x1="{px:.2}" y1="{TOP}" x2="{px:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="5,3"/>"#,
                        TOP + ph,
                    );
                    legend.push((label.clone(), color));
                }
                Element::ErrorBars { x, y, err } => {
                    for ((x, y), e) in x.iter().zip(y).zip(err) {
                        let _ = writeln!(
                            s,
                            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black"/>"#,
                            sx(*x),
                            sy(y - e),
                            sx(*x),
                            sy(y + e)
                        );
                    }
                }
            }
        }
        for (i, (label, color)) in legend.iter().filter(|(l, _)| !l.is_empty()).enumerate() {
            let y = TOP + 14.0 + 16.0 * i as f64;
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="10" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                WIDTH - RIGHT + 12.0,
                y - 9.0,
                WIDTH - RIGHT + 27.0,
                y,
                escape(label)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn fmt_tick(t: f64) -> String {
    if t == 0.0 {
        "0".into()
    } else if t.abs() >= 1e4 || t.abs() < 1e-3 {
        format!("{t:.1e}")
    } else {
        let s = format!("{t:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// About five "nice" tick positions covering `[lo, hi]`.
fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span.is_finite() && span > 0.0) {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

/// Equal-width histogram: bin edges (`bins + 1`) and counts.
pub fn histogram(values: &[f64], bins: usize) -> (Vec<f64>, Vec<usize>) {
    let bins = bins.max(1);
    let (lo, hi) = values
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
            (a.min(v), b.max(v))
        });
    let (lo, hi) = if !lo.is_finite() {
        (0.0, 1.0)
    } else if hi <= lo {
        (lo - 0.5, lo + 0.5)
    } else {
        (lo, hi)
    };
    let width = (hi - lo) / bins as f64;
    let edges: Vec<f64> = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0usize; bins];
    for v in values.iter().filter(|v| v.is_finite()) {
        let b = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[b] += 1;
    }
    (edges, counts)
}

/// Histogram table `bin_lo,bin_hi,count,density` (density integrates to 1).
pub fn histogram_csv(edges: &[f64], counts: &[usize]) -> String {
    let total: usize = counts.iter().sum();
    let mut out = String::from("bin_lo,bin_hi,count,density\n");
    for (i, c) in counts.iter().enumerate() {
        let w = edges[i + 1] - edges[i];
        let d = if total > 0 {
            *c as f64 / (total as f64 * w)
        } else {
            0.0
        };
        let _ = writeln!(out, "{:e},{:e},{c},{d:e}", edges[i], edges[i + 1]);
    }
    out
}

/// Histogram bars (as densities) for a figure.
pub fn histogram_bars(label: &str, edges: &[f64], counts: &[usize]) -> Element {
    let total: usize = counts.iter().sum::<usize>().max(1);
    Element::Bars {
        label: label.into(),
        left: edges[..counts.len()].to_vec(),
        right: edges[1..].to_vec(),
        height: counts
            .iter()
            .zip(edges.windows(2))
            .map(|(c, w)| *c as f64 / (total as f64 * (w[1] - w[0])))
            .collect(),
    }
}

/// CSV with a header and one row per index of equally long columns.
pub fn columns_csv(header: &[&str], columns: &[&[f64]]) -> String {
    let mut out = header.join(",");
    out.push('\n');
    let n = columns.first().map_or(0, |c| c.len());
    for i in 0..n {
        let row: Vec<String> = columns.iter().map(|c| format!("{:e}", c[i])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_every_value() {
        let v: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let (edges, counts) = histogram(&v, 10);
        assert_eq!(edges.len(), 11);
        assert_eq!(counts.iter().sum::<usize>(), 100);
        assert!(counts.iter().all(|c| *c == 10));
        let (_, counts) = histogram(&[2.0, 2.0], 3);
        assert_eq!(counts.iter().sum::<usize>(), 2);
    }

    #[test]
    fn svg_is_deterministic_and_well_formed() {
        let fig = Figure::new("t <1>", "x", "y")
            .with(Element::Line {
                label: "a".into(),
                x: vec![0.0, 1.0, 2.0],
                y: vec![1.0, 3.0, 2.0],
            })
            .with(Element::VLine {
                label: "m".into(),
                x: 1.5,
            });
        let a = fig.to_svg();
        assert_eq!(a, fig.clone().to_svg());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("t &lt;1&gt;"));
        assert!(a.contains("polyline"));
    }

    #[test]
    fn ticks_are_nice() {
        let t = ticks(0.0, 1.0);
        assert_eq!(t.len(), 6);
        assert_eq!((t[0], t[5]), (0.0, 1.0));
        assert!(ticks(-3.0, 7.0).contains(&0.0));
    }
}
