use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::agent::{EpisodeRecord, RunRecord};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Length,
    Extrinsic,
    Intrinsic,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Length, Metric::Extrinsic, Metric::Intrinsic];

    pub fn file_stem(self) -> &'static str {
        match self {
            Metric::Length => "episode_length",
            Metric::Extrinsic => "extrinsic_return",
            Metric::Intrinsic => "intrinsic_return",
        }
    }

    fn label(self) -> &'static str {
        match self {
            Metric::Length => "episode length",
            Metric::Extrinsic => "extrinsic return",
            Metric::Intrinsic => "intrinsic return",
        }
    }

    fn pick(self, e: &EpisodeRecord) -> f64 {
        match self {
            Metric::Length => e.length as f64,
            Metric::Extrinsic => e.ext_return,
            Metric::Intrinsic => e.intr_return,
        }
    }
}

/// One condition: its label and every seeded run.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub runs: Vec<RunRecord>,
}

/// Horizontal dashed line at a fixed value.
#[derive(Debug, Clone)]
pub struct Reference {
    pub label: String,
    pub metric: Metric,
    pub value: f64,
}

/// Per-episode mean and SD across runs after a trailing moving average.
pub fn band(runs: &[RunRecord], metric: Metric, smoothing: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if runs.is_empty() {
        return Err(Error::Empty("no runs to plot".into()));
    }
    let len = runs.iter().map(RunRecord::len).min().unwrap_or(0);
    if len == 0 {
        return Err(Error::Empty("run without episodes".into()));
    }
    if runs.iter().any(|r| r.len() != len) {
        log::warn!("runs differ in episode count; truncating to {len}");
    }
    let w = smoothing.max(1);
    let smoothed: Vec<Vec<f64>> = runs
        .iter()
        .map(|r| {
            let raw: Vec<f64> = r.episodes[..len].iter().map(|e| metric.pick(e)).collect();
            let mut acc = 0.0;
            (0..len)
                .map(|i| {
                    acc += raw[i];
                    if i >= w {
                        acc -= raw[i - w];
                    }
                    acc / (i + 1).min(w) as f64
                })
                .collect()
        })
        .collect();
    let n = runs.len() as f64;
    let mut mean = vec![0.0; len];
    let mut sd = vec![0.0; len];
    for i in 0..len {
        let m = smoothed.iter().map(|s| s[i]).sum::<f64>() / n;
        let var = smoothed.iter().map(|s| (s[i] - m).powi(2)).sum::<f64>() / n;
        mean[i] = m;
        sd[i] = var.sqrt();
    }
    Ok((mean, sd))
}

/// Renders one metric for every series as a standalone SVG document.
pub fn render_svg(series: &[Series], metric: Metric, smoothing: usize, refs: &[Reference]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::Empty("no series to plot".into()));
    }
    let bands = series
        .iter()
        .map(|s| band(&s.runs, metric, smoothing))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Reference> = refs.iter().filter(|r| r.metric == metric).collect();
    let episodes = bands.iter().map(|(m, _)| m.len()).max().unwrap_or(1);
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (m, s) in &bands {
        for (v, d) in m.iter().zip(s) {
            lo = lo.min(v - d);
            hi = hi.max(v + d);
        }
    }
    for r in &refs {
        lo = lo.min(r.value);
        hi = hi.max(r.value);
    }
    if hi - lo < 1e-9 {
        lo -= 1.0;
        hi += 1.0;
    }
    let x = |i: usize| MARGIN + (WIDTH - 2.0 * MARGIN) * i as f64 / (episodes.max(2) - 1) as f64;
    let y = |v: f64| HEIGHT - MARGIN - (HEIGHT - 2.0 * MARGIN) * (v - lo) / (hi - lo);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (MARGIN, WIDTH - MARGIN, HEIGHT - MARGIN, MARGIN);
    let _ = writeln!(svg, r#"<path d="M{x0:.2},{y1:.2} L{x0:.2},{y0:.2} L{x1:.2},{y0:.2}" stroke="black" fill="none"/>"#);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">episode</text>"#, WIDTH / 2.0, HEIGHT - 16.0);
    let _ = writeln!(
        svg,
        r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        metric.label()
    );
    for (v, anchor) in [(lo, y0), (hi, y1)] {
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.2}</text>"#, x0 - 4.0, anchor + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{x0:.2}" y="{:.2}" text-anchor="middle">0</text>"#, y0 + 16.0);
    let _ = writeln!(svg, r#"<text x="{x1:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, y0 + 16.0, episodes - 1);

    for (k, ((mean, sd), s)) in bands.iter().zip(series).enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut d = String::new();
        for i in 0..mean.len() {
            let _ = write!(d, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x(i), y(mean[i] + sd[i]));
        }
        for i in (0..mean.len()).rev() {
            let _ = write!(d, "L{:.2},{:.2} ", x(i), y(mean[i] - sd[i]));
        }
        let _ = writeln!(svg, r#"<path d="{}Z" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, d);
        let mut line = String::new();
        for (i, &v) in mean.iter().enumerate() {
            let _ = write!(line, "{}{:.2},{:.2} ", if i == 0 { "M" } else { "L" }, x(i), y(v));
        }
        let _ = writeln!(svg, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, line.trim_end());
        let ly = MARGIN + 14.0 * k as f64;
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{ly:.2}" fill="{color}">{}</text>"#, x1 - 150.0, escape(&s.label));
    }
    for r in refs {
        let yv = y(r.value);
        let _ = writeln!(
            svg,
            r#"<line x1="{x0:.2}" y1="{yv:.2}" x2="{x1:.2}" y2="{yv:.2}" stroke="gray" stroke-dasharray="6 4"/>"#
        );
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" fill="gray">{}</text>"#, x0 + 4.0, yv - 4.0, escape(&r.label));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Writes one SVG per metric into `dir`, returning the paths.
pub fn plot_curves(series: &[Series], smoothing: usize, refs: &[Reference], dir: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    Metric::ALL
        .iter()
        .map(|&m| {
            let path = dir.join(format!("{}.svg", m.file_stem()));
            std::fs::write(&path, render_svg(series, m, smoothing, refs)?)?;
            Ok(path)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(lengths: &[usize]) -> RunRecord {
        RunRecord {
            episodes: lengths
                .iter()
                .enumerate()
                .map(|(i, &l)| EpisodeRecord { length: l, ..EpisodeRecord::new(i) })
                .collect(),
        }
    }

    #[test]
    fn single_run_band_collapses() {
        let (m, s) = band(&[run(&[1, 3, 5])], Metric::Length, 1).unwrap();
        assert_eq!(m, vec![1.0, 3.0, 5.0]);
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_runs_have_zero_width() {
        let r = run(&[2, 4, 6, 8]);
        let (m, s) = band(&[r.clone(), r], Metric::Length, 2).unwrap();
        assert_eq!(m, vec![2.0, 3.0, 5.0, 7.0]);
        assert!(s.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn mismatched_lengths_truncate() {
        let (m, _) = band(&[run(&[1, 2, 3]), run(&[3, 4])], Metric::Length, 1).unwrap();
        assert_eq!(m, vec![2.0, 3.0]);
    }

    #[test]
    fn empty_input_errors() {
        assert!(band(&[RunRecord::default()], Metric::Length, 1).is_err());
        assert!(render_svg(&[], Metric::Length, 1, &[]).is_err());
    }

    #[test]
    fn rendering_is_deterministic() {
        let series = vec![Series { label: "a<b".into(), runs: vec![run(&[1, 2, 3]), run(&[3, 2, 1])] }];
        let refs = [Reference { label: "base".into(), metric: Metric::Length, value: 2.0 }];
        let a = render_svg(&series, Metric::Length, 1, &refs).unwrap();
        assert_eq!(a, render_svg(&series, Metric::Length, 1, &refs).unwrap());
        assert!(a.starts_with("<svg") && a.contains("a&lt;b") && a.contains("stroke-dasharray"));
    }
}
