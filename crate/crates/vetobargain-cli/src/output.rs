use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::Context;
use serde::Serialize;

use crate::config::Format;

pub const TOOL: &str = concat!("vetobargain ", env!("CARGO_PKG_VERSION"));

/// Writes each result under `<dir>/<stem>.<ext>` for the requested formats.
pub struct Emitter {
    dir: PathBuf,
    formats: BTreeSet<Format>,
    provenance: String,
    written: Vec<PathBuf>,
}

impl Emitter {
    pub fn new(dir: &Path, formats: &[Format], config_digest: &str) -> anyhow::Result<Emitter> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Emitter {
            dir: dir.to_path_buf(),
            formats: formats.iter().copied().collect(),
            provenance: format!("# config_sha256={config_digest}, {TOOL}"),
            written: Vec::new(),
        })
    }

    pub fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    fn path(&mut self, stem: &str, ext: &str) -> PathBuf {
        let p = self.dir.join(format!("{stem}.{ext}"));
        self.written.push(p.clone());
        p
    }

    pub fn json<T: Serialize>(&mut self, stem: &str, value: &T) -> anyhow::Result<()> {
        if !self.wants(Format::Json) {
            return Ok(());
        }
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        let p = self.path(stem, "json");
        fs::write(&p, text).with_context(|| format!("writing {}", p.display()))
    }

    /// CSV with a provenance comment line, then the header.
    pub fn csv(&mut self, stem: &str, header: &[&str], rows: &[Vec<String>]) -> anyhow::Result<()> {
        if !self.wants(Format::Csv) {
            return Ok(());
        }
        let mut buf = Vec::new();
        buf.extend_from_slice(self.provenance.as_bytes());
        buf.push(b'\n');
        {
            let mut w = csv::Writer::from_writer(&mut buf);
            w.write_record(header)?;
            for r in rows {
                w.write_record(r)?;
            }
            w.flush()?;
        }
        let p = self.path(stem, "csv");
        fs::write(&p, buf).with_context(|| format!("writing {}", p.display()))
    }

    pub fn svg(&mut self, stem: &str, chart: &FanChart) -> anyhow::Result<()> {
        if !self.wants(Format::Svg) {
            return Ok(());
        }
        let p = self.path(stem, "svg");
        fs::write(&p, chart.render()).with_context(|| format!("writing {}", p.display()))
    }
}

pub struct Series {
    pub name: String,
    pub color: &'static str,
    pub dashed: bool,
    /// `(δ, value)`
    pub points: Vec<(f64, f64)>,
}

/// Payoff against δ on a `−log10(1−δ)` axis, with benchmark lines.
pub struct FanChart {
    pub title: String,
    pub series: Vec<Series>,
}

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD_L: f64 = 70.0;
const PAD_R: f64 = 150.0;
const PAD_T: f64 = 40.0;
const PAD_B: f64 = 50.0;

fn patience(delta: f64) -> f64 {
    -(1.0 - delta).max(1e-12).log10()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

impl FanChart {
    pub fn render(&self) -> String {
        let pts = self.series.iter().flat_map(|s| s.points.iter());
        let (mut x0, mut x1, mut y0, mut y1) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for &(d, v) in pts {
            x0 = x0.min(patience(d));
            x1 = x1.max(patience(d));
            y0 = y0.min(v);
            y1 = y1.max(v);
        }
        if !x0.is_finite() {
            (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
        }
        if x1 - x0 < 1e-9 {
            x0 -= 0.5;
            x1 += 0.5;
        }
        let pad = ((y1 - y0) * 0.1).max(1e-3);
        y0 -= pad;
        y1 += pad;
        let sx = |d: f64| PAD_L + (patience(d) - x0) / (x1 - x0) * (W - PAD_L - PAD_R);
        let sy = |v: f64| H - PAD_B - (v - y0) / (y1 - y0) * (H - PAD_T - PAD_B);

        let mut s = String::new();
        let _ = writeln!(
            s,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
        );
        let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="22" font-size="14">{}</text>"#,
            PAD_L,
            escape(&self.title)
        );
        let (bx, by) = (H - PAD_B, W - PAD_R);
        let _ = writeln!(
            s,
            r#"<path d="M{PAD_L},{PAD_T} L{PAD_L},{bx} L{by},{bx}" fill="none" stroke="black"/>"#
        );
        for k in 0..=4 {
            let v = y0 + (y1 - y0) * k as f64 / 4.0;
            let y = sy(v);
            let _ = writeln!(
                s,
                r#"<line x1="{:.2}" y1="{y:.2}" x2="{PAD_L}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.4}</text>"#,
                PAD_L - 4.0,
                PAD_L - 6.0,
                y + 4.0
            );
        }
        let mut ticks: Vec<f64> = self
            .series
            .iter()
            .flat_map(|s| s.points.iter().map(|p| p.0))
            .collect();
        ticks.sort_by(|a, b| a.total_cmp(b));
        ticks.dedup();
        for d in ticks {
            let x = sx(d);
            let _ = writeln!(
                s,
                r#"<line x1="{x:.2}" y1="{bx}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{d}</text>"#,
                bx + 4.0,
                bx + 18.0
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">δ (log scale in 1−δ)</text>"#,
            (PAD_L + W - PAD_R) / 2.0,
            H - 10.0
        );
        for (i, ser) in self.series.iter().enumerate() {
            let mut d = String::new();
            for (k, &(x, v)) in ser.points.iter().enumerate() {
                let _ = write!(
                    d,
                    "{}{:.2},{:.2} ",
                    if k == 0 { "M" } else { "L" },
                    sx(x),
                    sy(v)
                );
            }
            let dash = if ser.dashed {
                r#" stroke-dasharray="6,4""#
            } else {
                ""
            };
            let _ = writeln!(
                s,
                r#"<path d="{}" fill="none" stroke="{}" stroke-width="2"{dash}/>"#,
                d.trim_end(),
                ser.color
            );
            for &(x, v) in &ser.points {
                let _ = writeln!(
                    s,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                    sx(x),
                    sy(v),
                    ser.color
                );
            }
            let ly = PAD_T + 20.0 * i as f64;
            let lx = W - PAD_R + 15.0;
            let _ = writeln!(
                s,
                r#"<line x1="{lx}" y1="{ly}" x2="{:.2}" y2="{ly}" stroke="{}" stroke-width="2"{dash}/><text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 24.0,
                ser.color,
                lx + 30.0,
                ly + 4.0,
                escape(&ser.name)
            );
        }
        s.push_str("</svg>\n");
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chart_is_deterministic_and_well_formed() {
        let chart = FanChart {
            title: "payoff <test>".into(),
            series: vec![Series {
                name: "skim".into(),
                color: "#1f77b4",
                dashed: false,
                points: vec![(0.9, 0.6), (0.99, 0.62), (0.999, 0.624)],
            }],
        };
        let a = chart.render();
        assert_eq!(a, chart.render());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("payoff &lt;test&gt;"));
        assert_eq!(a.matches("<circle").count(), 3);
    }
}
