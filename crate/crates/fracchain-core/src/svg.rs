//! Minimal SVG line/scatter plots for experiment artifacts. No plotting
//! dependency: every figure is derived from an already-written CSV.

use crate::error::Result;
use std::fmt::Write as _;
use std::path::Path;

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub struct Plot<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub log_x: bool,
    pub log_y: bool,
    pub series: Vec<Series<'a>>,
}

const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 440.0;
const ML: f64 = 70.0;
const MR: f64 = 20.0;
const MT: f64 = 40.0;
const MB: f64 = 55.0;

impl Plot<'_> {
    pub fn write_to(&self, path: &Path) -> Result<()> {
        let tx = |v: f64| if self.log_x { v.log10() } else { v };
        let ty = |v: f64| if self.log_y { v.log10() } else { v };
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for s in &self.series {
            for &(x, y) in &s.points {
                if (self.log_x && x <= 0.0) || (self.log_y && y <= 0.0) {
                    continue;
                }
                xs.push(tx(x));
                ys.push(ty(y));
            }
        }
        let (x0, x1) = span(&xs);
        let (y0, y1) = span(&ys);
        let px = |x: f64| ML + (tx(x) - x0) / (x1 - x0) * (W - ML - MR);
        let py = |y: f64| H - MB - (ty(y) - y0) / (y1 - y0) * (H - MT - MB);

        let mut out = String::new();
        let _ = writeln!(
            out,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
        );
        let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{}" y="24" font-family="monospace" font-size="15" text-anchor="middle">{}</text>"#,
            W / 2.0,
            escape(self.title)
        );
        // frame and ticks
        let _ = writeln!(
            out,
            r##"<rect x="{ML}" y="{MT}" width="{}" height="{}" fill="none" stroke="#444"/>"##,
            W - ML - MR,
            H - MT - MB
        );
        for k in 0..=4 {
            let fx = x0 + (x1 - x0) * k as f64 / 4.0;
            let fy = y0 + (y1 - y0) * k as f64 / 4.0;
            let sx = ML + (W - ML - MR) * k as f64 / 4.0;
            let sy = H - MB - (H - MT - MB) * k as f64 / 4.0;
            let lx = tick(if self.log_x { 10f64.powf(fx) } else { fx });
            let ly = tick(if self.log_y { 10f64.powf(fy) } else { fy });
            let _ = writeln!(
                out,
                r#"<text x="{sx}" y="{}" font-family="monospace" font-size="11" text-anchor="middle">{lx}</text>"#,
                H - MB + 16.0
            );
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="monospace" font-size="11" text-anchor="end">{ly}</text>"#,
                ML - 6.0,
                sy + 4.0
            );
            let _ = writeln!(
                out,
                r##"<line x1="{sx}" y1="{MT}" x2="{sx}" y2="{}" stroke="#ddd"/>"##,
                H - MB
            );
            let _ = writeln!(
                out,
                r##"<line x1="{ML}" y1="{sy}" x2="{}" y2="{sy}" stroke="#ddd"/>"##,
                W - MR
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" font-family="monospace" font-size="13" text-anchor="middle">{}</text>"#,
            W / 2.0,
            H - 14.0,
            escape(self.x_label)
        );
        let _ = writeln!(
            out,
            r#"<text x="16" y="{}" font-family="monospace" font-size="13" text-anchor="middle" transform="rotate(-90 16 {})">{}</text>"#,
            H / 2.0,
            H / 2.0,
            escape(self.y_label)
        );
        for (si, s) in self.series.iter().enumerate() {
            let color = COLORS[si % COLORS.len()];
            let mut d = String::new();
            let mut first = true;
            for &(x, y) in &s.points {
                if (self.log_x && x <= 0.0) || (self.log_y && y <= 0.0) {
                    continue;
                }
                let _ = write!(d, "{}{:.2},{:.2} ", if first { "M" } else { "L" }, px(x), py(y));
                first = false;
            }
            let _ = writeln!(
                out,
                r#"<path d="{d}" fill="none" stroke="{color}" stroke-width="1.5"/>"#
            );
            for &(x, y) in &s.points {
                if (self.log_x && x <= 0.0) || (self.log_y && y <= 0.0) {
                    continue;
                }
                let _ = writeln!(
                    out,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#,
                    px(x),
                    py(y)
                );
            }
            let _ = writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="monospace" font-size="12" fill="{color}">{}</text>"#,
                ML + 10.0,
                MT + 18.0 + 16.0 * si as f64,
                escape(s.name)
            );
        }
        let _ = writeln!(out, "</svg>");
        std::fs::write(path, out)?;
        Ok(())
    }
}

fn tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn span(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::MAX;
    let mut hi = f64::MIN;
    for &v in values {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        let pad = 0.04 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn writes_wellformed_svg() {
        let dir = std::env::temp_dir().join("fracchain-svg-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("plot.svg");
        let plot = Plot {
            title: "couplings",
            x_label: "r",
            y_label: "J(r)",
            log_x: true,
            log_y: true,
            series: vec![Series {
                name: "test",
                points: (1..64).map(|r| (r as f64, (r as f64).powf(-2.5))).collect(),
            }],
        };
        plot.write_to(&path).unwrap();
        let body = std::fs::read_to_string(&path).unwrap();
        assert!(body.starts_with("<svg"));
        assert!(body.trim_end().ends_with("</svg>"));
        std::fs::remove_file(path).unwrap();
    }
}
