//! Minimal SVG plots: line/scatter charts with optional log axes, and
//! heatmaps. Output is a pure function of the data.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, style: Style::Line }
    }

    pub fn markers(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, style: Style::Markers }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Chart {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series>,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

impl Chart {
    pub fn new(title: &str, xlabel: &str, ylabel: &str) -> Self {
        Self { title: title.into(), xlabel: xlabel.into(), ylabel: ylabel.into(), ..Default::default() }
    }

    pub fn log_log(mut self) -> Self {
        self.log_x = true;
        self.log_y = true;
        self
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn tx(&self, x: f64) -> Option<f64> {
        let v = if self.log_x { x.log10() } else { x };
        v.is_finite().then_some(v)
    }

    fn ty(&self, y: f64) -> Option<f64> {
        let v = if self.log_y { y.log10() } else { y };
        v.is_finite().then_some(v)
    }

    pub fn render(&self) -> String {
        let pts: Vec<Vec<(f64, f64)>> = self
            .series
            .iter()
            .map(|s| s.points.iter().filter_map(|&(x, y)| Some((self.tx(x)?, self.ty(y)?))).collect())
            .collect();
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in pts.iter().flatten() {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-12 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        if y1 - y0 < 1e-12 {
            y0 -= 0.5;
            y1 += 0.5;
        }
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
        let pw = W - LEFT - RIGHT;
        let ph = H - TOP - BOTTOM;
        let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
            LEFT + pw / 2.0,
            esc(&self.title)
        );
        let _ = writeln!(s, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
        for i in 0..=4 {
            let f = i as f64 / 4.0;
            let xv = x0 + f * (x1 - x0);
            let yv = y0 + f * (y1 - y0);
            let xl = if self.log_x { format!("1e{xv:.1}") } else { format!("{xv:.3}") };
            let yl = if self.log_y { format!("1e{yv:.1}") } else { format!("{yv:.3}") };
            let _ =
                writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{xl}</text>"#, sx(xv), TOP + ph + 15.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{yl}</text>"#, LEFT - 5.0, sy(yv) + 4.0);
            let _ = writeln!(
                s,
                r##"<line x1="{:.1}" y1="{TOP}" x2="{:.1}" y2="{:.1}" stroke="#ddd"/>"##,
                sx(xv),
                sx(xv),
                TOP + ph
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            H - 12.0,
            esc(&self.xlabel)
        );
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            esc(&self.ylabel)
        );
        for (i, (series, p)) in self.series.iter().zip(&pts).enumerate() {
            let colour = PALETTE[i % PALETTE.len()];
            match series.style {
                Style::Line => {
                    let d: Vec<String> = p.iter().map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                    let _ = writeln!(
                        s,
                        r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
                        d.join(" ")
                    );
                }
                Style::Markers => {
                    for &(x, y) in p {
                        let _ = writeln!(s, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{colour}"/>"#, sx(x), sy(y));
                    }
                }
            }
            let ly = TOP + 12.0 + 16.0 * i as f64;
            let lx = W - RIGHT + 10.0;
            let _ = writeln!(s, r#"<rect x="{lx}" y="{:.1}" width="10" height="10" fill="{colour}"/>"#, ly - 9.0);
            let _ = writeln!(s, r#"<text x="{}" y="{ly:.1}">{}</text>"#, lx + 14.0, esc(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

/// Heatmap of a row-major `rows × cols` matrix with a blue–white–red scale
/// centred at the midpoint of the value range.
pub fn heatmap(title: &str, values: &[f64], rows: usize, cols: usize) -> String {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let size = 360.0;
    let cw = size / cols.max(1) as f64;
    let ch = size / rows.max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="460" height="420" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="460" height="420" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="230" y="22" text-anchor="middle" font-size="14">{}</text>"#, esc(title));
    for r in 0..rows {
        for c in 0..cols {
            let v = (values[r * cols + c] - lo) / span;
            let (red, green, blue) = if v < 0.5 {
                let f = v * 2.0;
                ((255.0 * f) as u8, (255.0 * f) as u8, 255)
            } else {
                let f = (1.0 - v) * 2.0;
                (255, (255.0 * f) as u8, (255.0 * f) as u8)
            };
            let _ = writeln!(
                s,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="rgb({red},{green},{blue})"/>"#,
                40.0 + c as f64 * cw,
                40.0 + r as f64 * ch,
                cw + 0.05,
                ch + 0.05
            );
        }
    }
    let _ = writeln!(s, r#"<text x="410" y="60">max {hi:.4}</text>"#);
    let _ = writeln!(s, r#"<text x="410" y="400">min {lo:.4}</text>"#);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_skip_non_finite_log_points() {
        let c =
            Chart::new("t", "x", "y").log_log().with(Series::line("a", vec![(0.0, 1.0), (1.0, 10.0), (10.0, 100.0)]));
        let svg = c.render();
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("polyline").count(), 1);
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn heatmap_has_one_cell_per_value() {
        let svg = heatmap("h", &[0.0, 1.0, 2.0, 3.0], 2, 2);
        assert_eq!(svg.matches("<rect x=").count(), 4);
    }
}
