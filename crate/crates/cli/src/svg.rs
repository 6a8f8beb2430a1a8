//! Minimal line and scatter plots rendered to standalone SVG.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_L: f64 = 70.0;
const MARGIN_R: f64 = 150.0;
const MARGIN_T: f64 = 30.0;
const MARGIN_B: f64 = 50.0;
const TICKS: usize = 5;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Style {
    Line,
    Scatter,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn line(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.into(), points, style: Style::Line }
    }

    pub fn scatter(label: impl Into<String>, points: Vec<(f64, f64)>) -> Self {
        Series { label: label.into(), points, style: Style::Scatter }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Plot {
    pub title: String,
    pub xlabel: String,
    pub ylabel: String,
    pub logx: bool,
    pub logy: bool,
    pub series: Vec<Series>,
}

impl Plot {
    pub fn new(title: &str, xlabel: &str, ylabel: &str) -> Self {
        Plot { title: title.into(), xlabel: xlabel.into(), ylabel: ylabel.into(), ..Default::default() }
    }

    pub fn with(mut self, s: Series) -> Self {
        self.series.push(s);
        self
    }

    fn tx(&self, x: f64) -> Option<f64> {
        axis_value(x, self.logx)
    }

    fn ty(&self, y: f64) -> Option<f64> {
        axis_value(y, self.logy)
    }

    pub fn render(&self) -> String {
        let pts: Vec<(f64, f64)> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter())
            .filter_map(|&(x, y)| Some((self.tx(x)?, self.ty(y)?)))
            .collect();
        let (x0, x1) = padded_range(pts.iter().map(|p| p.0));
        let (y0, y1) = padded_range(pts.iter().map(|p| p.1));
        let pw = WIDTH - MARGIN_L - MARGIN_R;
        let ph = HEIGHT - MARGIN_T - MARGIN_B;
        let sx = |x: f64| MARGIN_L + (x - x0) / (x1 - x0) * pw;
        let sy = |y: f64| MARGIN_T + ph - (y - y0) / (y1 - y0) * ph;

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
        );
        let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
        let _ = writeln!(s, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#, MARGIN_L + pw / 2.0, escape(&self.title));
        let _ = writeln!(
            s,
            r#"<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{pw:.1}" height="{ph:.1}" fill="none" stroke="black"/>"#
        );
        for k in 0..=TICKS {
            let fx = x0 + (x1 - x0) * k as f64 / TICKS as f64;
            let fy = y0 + (y1 - y0) * k as f64 / TICKS as f64;
            let (px, py) = (sx(fx), sy(fy));
            let _ = writeln!(s, r#"<line x1="{px:.1}" y1="{:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/>"#, MARGIN_T + ph, MARGIN_T + ph + 4.0);
            let _ = writeln!(s, r#"<text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, MARGIN_T + ph + 16.0, tick_label(fx, self.logx));
            let _ = writeln!(s, r#"<line x1="{:.1}" y1="{py:.1}" x2="{MARGIN_L}" y2="{py:.1}" stroke="black"/>"#, MARGIN_L - 4.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#, MARGIN_L - 6.0, py + 4.0, tick_label(fy, self.logy));
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, MARGIN_L + pw / 2.0, HEIGHT - 12.0, escape(&self.xlabel));
        let _ = writeln!(
            s,
            r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">{}</text>"#,
            MARGIN_T + ph / 2.0,
            MARGIN_T + ph / 2.0,
            escape(&self.ylabel)
        );

        for (i, series) in self.series.iter().enumerate() {
            let color = PALETTE[i % PALETTE.len()];
            let mapped: Vec<Option<(f64, f64)>> =
                series.points.iter().map(|&(x, y)| Some((sx(self.tx(x)?), sy(self.ty(y)?)))).collect();
            match series.style {
                Style::Line => {
                    // Non-finite or non-positive (on log axes) points break the line.
                    for run in mapped.split(|p| p.is_none()) {
                        if run.len() < 2 {
                            continue;
                        }
                        let path: Vec<String> = run.iter().flatten().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
                        let _ = writeln!(s, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
                    }
                }
                Style::Scatter => {
                    for (x, y) in mapped.iter().flatten() {
                        let _ = writeln!(s, r#"<circle cx="{x:.2}" cy="{y:.2}" r="2.5" fill="{color}"/>"#);
                    }
                }
            }
            let ly = MARGIN_T + 12.0 + 16.0 * i as f64;
            let lx = WIDTH - MARGIN_R + 10.0;
            let _ = writeln!(s, r#"<rect x="{lx:.1}" y="{:.1}" width="14" height="3" fill="{color}"/>"#, ly - 4.0);
            let _ = writeln!(s, r#"<text x="{:.1}" y="{ly:.1}">{}</text>"#, lx + 20.0, escape(&series.label));
        }
        s.push_str("</svg>\n");
        s
    }
}

fn axis_value(x: f64, log: bool) -> Option<f64> {
    if !x.is_finite() || (log && x <= 0.0) {
        return None;
    }
    Some(if log { x.log10() } else { x })
}

fn padded_range(it: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = it.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), x| (a.min(x), b.max(x)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    let span = hi - lo;
    let pad = if span > 0.0 { 0.05 * span } else { 0.5 * lo.abs().max(1.0) };
    (lo - pad, hi + pad)
}

fn tick_label(v: f64, log: bool) -> String {
    let x = if log { 10f64.powf(v) } else { v };
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e4) {
        format!("{x:.2e}")
    } else {
        format!("{x:.4}").trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
