//! CSV tables and SVG scatter plots.
//!
//! Parameter indices in every file written here are 1-based, matching how
//! inputs are numbered in tables of an experiment; pairs are written as
//! `i`, `j` columns in tables and as `"i-j"` labels in plots.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::classify::{ZoneLabel, GUIDE_RATIOS};
use crate::design::ParameterSpec;
use crate::effects::{EffectKey, EffectSample, EffectsSummary};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Presentation {
    /// μ* on x, σ on y, guide lines through the origin.
    Sigma,
    /// μ* on x, σ/μ* on y, horizontal guide lines.
    Ratio,
}

impl Presentation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Presentation::Sigma => "sigma",
            Presentation::Ratio => "ratio",
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v}")).unwrap_or_default()
}

fn key_columns(key: EffectKey) -> [String; 3] {
    match key {
        EffectKey::First(i) => ["first".into(), (i + 1).to_string(), String::new()],
        EffectKey::Second(i, j) => ["second".into(), (i + 1).to_string(), (j + 1).to_string()],
    }
}

pub fn write_effects_csv(path: &Path, samples: &[EffectSample]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["kind", "i", "j", "replicate", "value"])?;
    for s in samples {
        let [kind, i, j] = key_columns(s.key);
        w.write_record([kind, i, j, (s.replicate + 1).to_string(), format!("{}", s.value)])?;
    }
    w.flush()?;
    Ok(())
}

pub const SUMMARY_COLUMNS: [&str; 9] = ["kind", "i", "j", "mu", "mu_star", "sigma", "ratio_star", "ratio_abs", "n"];

pub fn write_summary_csv(path: &Path, summaries: &[EffectsSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summaries {
        let [kind, i, j] = key_columns(s.key);
        w.write_record([
            kind,
            i,
            j,
            format!("{}", s.mu),
            format!("{}", s.mu_star),
            opt(s.sigma),
            opt(s.ratio_star),
            opt(s.ratio_abs),
            s.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<EffectsSummary>> {
    let malformed = |row: usize, msg: String| Error::Malformed {
        path: path.to_path_buf(),
        message: format!("row {row}: {msg}"),
    };
    let mut rdr = csv::Reader::from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != SUMMARY_COLUMNS {
        return Err(malformed(0, format!("expected columns {}", SUMMARY_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for (n, row) in rdr.records().enumerate() {
        let row = row?;
        let row_no = n + 1;
        let index = |c: usize| -> Result<usize> {
            row[c]
                .parse::<usize>()
                .ok()
                .filter(|&v| v >= 1)
                .map(|v| v - 1)
                .ok_or_else(|| malformed(row_no, format!("bad index `{}`", &row[c])))
        };
        let num = |c: usize| -> Result<f64> {
            row[c].parse::<f64>().map_err(|_| malformed(row_no, format!("bad number `{}` in {}", &row[c], SUMMARY_COLUMNS[c])))
        };
        let maybe = |c: usize| -> Result<Option<f64>> { if row[c].is_empty() { Ok(None) } else { num(c).map(Some) } };
        let key = match &row[0] {
            "first" => EffectKey::First(index(1)?),
            "second" => EffectKey::Second(index(1)?, index(2)?),
            other => return Err(malformed(row_no, format!("unknown kind `{other}`"))),
        };
        out.push(EffectsSummary {
            key,
            mu: num(3)?,
            mu_star: num(4)?,
            sigma: maybe(5)?,
            ratio_star: maybe(6)?,
            ratio_abs: maybe(7)?,
            n: row[8].parse().map_err(|_| malformed(row_no, format!("bad count `{}`", &row[8])))?,
        });
    }
    Ok(out)
}

/// Summaries with their zone (absent when classification is refused).
pub fn write_zones_csv(
    path: &Path,
    summaries: &[EffectsSummary],
    zones: &[Option<ZoneLabel>],
    parameters: &[ParameterSpec],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "kind", "i", "j", "name", "x_min", "x_max", "mu", "mu_star", "sigma", "ratio_star", "ratio_abs", "zone",
    ])?;
    for (s, z) in summaries.iter().zip(zones) {
        let [kind, i, j] = key_columns(s.key);
        let (name, lo, hi) = match s.key {
            EffectKey::First(i) => {
                let p = &parameters[i];
                (p.name.clone(), format!("{}", p.x_min), format!("{}", p.x_max))
            }
            EffectKey::Second(i, j) => (format!("{}*{}", parameters[i].name, parameters[j].name), String::new(), String::new()),
        };
        w.write_record([
            kind,
            i,
            j,
            name,
            lo,
            hi,
            format!("{}", s.mu),
            format!("{}", s.mu_star),
            opt(s.sigma),
            opt(s.ratio_star),
            opt(s.ratio_abs),
            z.map(|z| z.as_str().to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 30.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, Copy)]
struct Axis {
    lo: f64,
    hi: f64,
}

impl Axis {
    fn from_extent(lo: f64, hi: f64) -> Self {
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo, lo + 1.0) };
        let pad = 0.05 * (hi - lo);
        Self { lo: lo - pad, hi: hi + pad }
    }

    fn map(&self, v: f64, from: f64, to: f64) -> f64 {
        from + (v - self.lo) / (self.hi - self.lo) * (to - from)
    }

    fn ticks(&self) -> (Vec<f64>, usize) {
        let raw = (self.hi - self.lo) / 5.0;
        let mag = 10f64.powf(raw.log10().floor());
        let step = [1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|f| f * mag)
            .find(|s| *s >= raw)
            .unwrap_or(10.0 * mag);
        let decimals = (-step.log10().floor()).max(0.0) as usize;
        let first = (self.lo / step).ceil() as i64;
        let last = (self.hi / step).floor() as i64;
        ((first..=last).map(|n| n as f64 * step).collect(), decimals)
    }
}

fn fmt_tick(v: f64, decimals: usize) -> String {
    if decimals > 4 || v.abs() >= 1e6 {
        let e = format!("{v:.1e}");
        return if v.abs() < 1e-300 || e.starts_with("0.0e") || e.starts_with("-0.0e") { "0".into() } else { e };
    }
    let s = format!("{v:.decimals$}");
    if s.trim_start_matches('-').chars().all(|c| c == '0' || c == '.') {
        format!("{:.decimals$}", 0.0)
    } else {
        s
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Points of a presentation: (label, x, y).
pub fn scatter_points(summaries: &[EffectsSummary], presentation: Presentation) -> Vec<(String, f64, f64)> {
    summaries
        .iter()
        .filter_map(|s| {
            let sigma = s.sigma?;
            match presentation {
                Presentation::Sigma => Some((s.key.label(), s.mu_star, sigma)),
                Presentation::Ratio => (s.mu_star > 0.0).then(|| (s.key.label(), s.mu_star, sigma / s.mu_star)),
            }
        })
        .collect()
}

/// Self-contained SVG of a (μ*, σ) or (μ*, σ/μ*) scatter plot.
pub fn render_scatter_svg(summaries: &[EffectsSummary], presentation: Presentation, title: &str) -> Result<String> {
    let points = scatter_points(summaries, presentation);
    if points.is_empty() {
        return Err(Error::EmptyPlot(format!("no plottable effects for `{title}`")));
    }
    let (px0, px1, py0, py1) = (LEFT, WIDTH - RIGHT, HEIGHT - BOTTOM, TOP);
    let xmax = points.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let xmin = points.iter().map(|p| p.1).fold(0.0, f64::min);
    let mut ymax = points.iter().map(|p| p.2).fold(f64::NEG_INFINITY, f64::max);
    let ymin = points.iter().map(|p| p.2).fold(0.0, f64::min);
    if presentation == Presentation::Ratio {
        ymax = ymax.max(ALMOST_TOP_GUIDE);
    }
    let xa = Axis::from_extent(xmin, xmax);
    let ya = Axis::from_extent(ymin, ymax);
    let sx = |v: f64| xa.map(v, px0, px1);
    let sy = |v: f64| ya.map(v, py0, py1);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<defs><clipPath id="plot"><rect x="{px0}" y="{py1}" width="{:.2}" height="{:.2}"/></clipPath></defs>"#,
        px1 - px0,
        py0 - py1
    );
    let _ = writeln!(svg, r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#, WIDTH / 2.0, escape(title));

    // Axes and ticks.
    let _ = writeln!(svg, r#"<rect x="{px0}" y="{py1}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#, px1 - px0, py0 - py1);
    let (xticks, xdec) = xa.ticks();
    for t in xticks {
        let x = sx(t);
        let _ = writeln!(svg, r##"<line x1="{x:.2}" y1="{py0}" x2="{x:.2}" y2="{:.2}" stroke="black"/>"##, py0 + 5.0);
        let _ = writeln!(svg, r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, py0 + 19.0, fmt_tick(t, xdec));
    }
    let (yticks, ydec) = ya.ticks();
    for t in yticks {
        let y = sy(t);
        let _ = writeln!(svg, r#"<line x1="{:.2}" y1="{y:.2}" x2="{px0}" y2="{y:.2}" stroke="black"/>"#, px0 - 5.0);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, px0 - 8.0, y + 4.0, fmt_tick(t, ydec));
    }
    let ylabel = match presentation {
        Presentation::Sigma => "σ",
        Presentation::Ratio => "σ / μ*",
    };
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">μ*</text>"#, (px0 + px1) / 2.0, HEIGHT - 15.0);
    let _ = writeln!(
        svg,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{ylabel}</text>"#,
        (py0 + py1) / 2.0,
        (py0 + py1) / 2.0
    );

    // Zone guides.
    let _ = writeln!(svg, r#"<g clip-path="url(#plot)" stroke="gray" stroke-dasharray="6 4" fill="none">"#);
    for g in GUIDE_RATIOS {
        let (x1, y1, x2, y2) = match presentation {
            Presentation::Sigma => (0.0, 0.0, xa.hi, g * xa.hi),
            Presentation::Ratio => (xa.lo, g, xa.hi, g),
        };
        let _ = writeln!(
            svg,
            r#"<line class="guide" data-ratio="{g}" x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
            sx(x1),
            sy(y1),
            sx(x2),
            sy(y2)
        );
    }
    let _ = writeln!(svg, "</g>");
    for g in GUIDE_RATIOS {
        // Label where the guide leaves the plot area.
        let (lx, ly) = match presentation {
            Presentation::Sigma if g * xa.hi <= ya.hi => (xa.hi, g * xa.hi),
            Presentation::Sigma => (ya.hi / g, ya.hi),
            Presentation::Ratio => (xa.hi, g),
        };
        if ly >= ya.lo && ly <= ya.hi {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="end" fill="gray">σ/μ* = {g}</text>"#,
                sx(lx) - 4.0,
                sy(ly) - 4.0
            );
        }
    }

    // Points.
    let _ = writeln!(svg, r#"<g fill="steelblue" stroke="black">"#);
    for (label, x, y) in &points {
        let _ = writeln!(
            svg,
            r#"<circle class="point" data-label="{}" data-x="{x}" data-y="{y}" cx="{:.2}" cy="{:.2}" r="4"/>"#,
            escape(label),
            sx(*x),
            sy(*y)
        );
    }
    let _ = writeln!(svg, "</g>");
    for (label, x, y) in &points {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}">{}</text>"#, sx(*x) + 6.0, sy(*y) - 6.0, escape(label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

const ALMOST_TOP_GUIDE: f64 = 1.0;

/// Render and write; nothing is created when there is nothing to plot.
pub fn emit_scatter_svg(summaries: &[EffectsSummary], presentation: Presentation, path: &Path, title: &str) -> Result<()> {
    let svg = render_scatter_svg(summaries, presentation, title)?;
    std::fs::write(path, svg)?;
    Ok(())
}
