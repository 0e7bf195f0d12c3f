//! Minimal self-contained SVG charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 20.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 55.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Linear,
    Log,
}

struct Axis {
    lo: f64,
    hi: f64,
    scale: Scale,
}

impl Axis {
    fn fit(values: impl Iterator<Item = f64>, scale: Scale, zero: bool) -> Self {
        let t = |v: f64| if scale == Scale::Log { v.log10() } else { v };
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values.filter(|v| v.is_finite() && (scale == Scale::Linear || *v > 0.0)) {
            lo = lo.min(t(v));
            hi = hi.max(t(v));
        }
        if !lo.is_finite() {
            (lo, hi) = (0.0, 1.0);
        }
        if zero && scale == Scale::Linear {
            lo = lo.min(0.0);
        }
        if hi - lo < 1e-12 {
            hi = lo + 1.0;
        }
        let margin = if scale == Scale::Linear { 0.05 * (hi - lo) } else { 0.0 };
        Self { lo: lo - if zero { 0.0 } else { margin }, hi: hi + margin, scale }
    }

    fn frac(&self, v: f64) -> f64 {
        let v = if self.scale == Scale::Log { v.log10() } else { v };
        (v - self.lo) / (self.hi - self.lo)
    }

    fn ticks(&self) -> Vec<f64> {
        match self.scale {
            Scale::Log => (self.lo.floor() as i32..=self.hi.ceil() as i32)
                .map(|e| 10f64.powi(e))
                .filter(|&v| (self.lo - 1e-9..=self.hi + 1e-9).contains(&v.log10()))
                .collect(),
            Scale::Linear => (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect(),
        }
    }
}

fn label(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e5 || v.abs() < 1e-2) {
        format!("{v:.1e}")
    } else if v.fract().abs() < 1e-9 {
        format!("{v:.0}")
    } else {
        format!("{v:.2}")
    }
}

struct Frame {
    x: Axis,
    y: Axis,
    body: String,
}

impl Frame {
    fn px(&self, v: f64) -> f64 {
        PAD_L + self.x.frac(v) * (W - PAD_L - PAD_R)
    }

    fn py(&self, v: f64) -> f64 {
        H - PAD_B - self.y.frac(v) * (H - PAD_T - PAD_B)
    }

    fn new(title: &str, xlabel: &str, ylabel: &str, x: Axis, y: Axis) -> Self {
        let mut f = Frame { x, y, body: String::new() };
        let b = &mut f.body;
        let _ = write!(
            b,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = write!(b, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = write!(b, r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#, W / 2.0, esc(title));
        let _ = write!(b, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, esc(xlabel));
        let _ = write!(
            b,
            r#"<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            esc(ylabel)
        );
        let (x0, x1, y0, y1) = (PAD_L, W - PAD_R, H - PAD_B, PAD_T);
        let _ = write!(
            b,
            r##"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            x1 - x0,
            y0 - y1
        );
        for t in f.x.ticks() {
            let p = f.px(t);
            let _ = write!(f.body, r##"<line x1="{p:.1}" y1="{y0}" x2="{p:.1}" y2="{}" stroke="#444"/>"##, y0 + 5.0);
            let _ = write!(f.body, r#"<text x="{p:.1}" y="{}" text-anchor="middle">{}</text>"#, y0 + 19.0, label(t));
        }
        for t in f.y.ticks() {
            let p = f.py(t);
            let _ = write!(f.body, r##"<line x1="{}" y1="{p:.1}" x2="{x0}" y2="{p:.1}" stroke="#444"/>"##, x0 - 5.0);
            let _ =
                write!(f.body, r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#, x0 - 8.0, p + 4.0, label(t));
        }
        f
    }

    fn polyline(&mut self, pts: &[(f64, f64)], color: &str) {
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", self.px(x), self.py(y))).collect();
        let _ = write!(
            self.body,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            path.join(" ")
        );
    }

    fn dots(&mut self, pts: &[(f64, f64)], color: &str) {
        for &(x, y) in pts {
            let _ =
                write!(self.body, r#"<circle cx="{:.1}" cy="{:.1}" r="3.5" fill="{color}"/>"#, self.px(x), self.py(y));
        }
    }

    fn finish(mut self) -> String {
        self.body.push_str("</svg>\n");
        self.body
    }
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart with markers, one series.
pub fn line_chart(title: &str, xlabel: &str, ylabel: &str, pts: &[(f64, f64)], xscale: Scale) -> String {
    let x = Axis::fit(pts.iter().map(|p| p.0), xscale, false);
    let y = Axis::fit(pts.iter().map(|p| p.1), Scale::Linear, true);
    let mut f = Frame::new(title, xlabel, ylabel, x, y);
    f.polyline(pts, "#1f77b4");
    f.dots(pts, "#1f77b4");
    f.finish()
}

/// Observed (x) against simulated (y) with the identity line.
pub fn scatter_identity(title: &str, pts: &[(f64, f64)]) -> String {
    let all = pts.iter().flat_map(|&(a, b)| [a, b]);
    let hi = all.clone().fold(0.0f64, f64::max);
    let x = Axis::fit([0.0, hi].into_iter(), Scale::Linear, true);
    let y = Axis::fit([0.0, hi].into_iter(), Scale::Linear, true);
    let top = x.hi;
    let mut f = Frame::new(title, "observed count", "simulated count", x, y);
    f.polyline(&[(0.0, 0.0), (top, top)], "#999");
    f.dots(pts, "#d62728");
    f.finish()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_closed_documents() {
        let s = line_chart("t", "x", "y", &[(1.0, 2.0), (2.0, 1.0)], Scale::Linear);
        assert!(s.starts_with("<svg") && s.ends_with("</svg>\n"));
        assert_eq!(s.matches("<circle").count(), 2);
        let s = scatter_identity("t", &[(1.0, 1.5)]);
        assert_eq!(s.matches("<polyline").count(), 1);
        let s = line_chart("t", "x", "y", &[(0.01, 2.0), (100.0, 1.0)], Scale::Log);
        assert!(s.contains(">1.0e-2<") || s.contains(">0.01<"));
    }

    #[test]
    fn titles_are_escaped() {
        assert!(line_chart("a<b", "x", "y", &[(0.0, 0.0)], Scale::Linear).contains("a&lt;b"));
    }
}
