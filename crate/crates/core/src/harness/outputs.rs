use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::evaluate::{csv_error, EvalReport};
use super::rollout::CONFIG_FILE;
use super::seeding::{SeedStreams, Stream};
use super::train::{FinalEval, FINAL_EVAL, TRAINING_CURVE};
use crate::error::{Error, Result};

pub const SWEEP_CSV: &str = "sweep_p.csv";
pub const SUMMARY_CSV: &str = "summary.csv";

/// One line on a chart, with an optional shaded interval.
#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    /// `(x, y, lo, hi)`
    pub points: Vec<(f64, f64, f64, f64)>,
}

const PALETTE: [&str; 7] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"];
const W: f64 = 640.0;
const H: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn bounds(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn tick_label(v: f64) -> String {
    if v.abs() >= 1000.0 {
        format!("{:.0}", v)
    } else {
        format!("{:.2}", v)
    }
}

/// Line chart with axis labels, tick marks, a legend and CI bands.
pub fn line_chart_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let all = || series.iter().flat_map(|s| s.points.iter());
    let (x0, x1) = bounds(all().map(|p| p.0));
    let (y0, y1) = bounds(all().flat_map(|p| [p.1, p.2, p.3]));
    let pw = W - LEFT - RIGHT;
    let ph = H - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + (1.0 - (y - y0) / (y1 - y0)) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">{}</text>"#,
        LEFT + pw / 2.0,
        escape(title)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for k in 0..=4 {
        let f = k as f64 / 4.0;
        let (xv, yv) = (x0 + f * (x1 - x0), y0 + f * (y1 - y0));
        let (px, py) = (sx(xv), sy(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{}" x2="{px:.2}" y2="{}" stroke="black"/><text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{py:.2}" x2="{LEFT}" y2="{py:.2}" stroke="black"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 5.0,
            LEFT - 8.0,
            py + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        H - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        TOP + ph / 2.0,
        escape(y_label)
    );
    for (i, ser) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if ser.points.is_empty() {
            continue;
        }
        let mut band = String::new();
        for p in &ser.points {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.3));
        }
        for p in ser.points.iter().rev() {
            let _ = write!(band, "{:.2},{:.2} ", sx(p.0), sy(p.2));
        }
        let _ = writeln!(
            s,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band.trim_end()
        );
        let line: Vec<String> = ser.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        let ly = TOP + 14.0 + 18.0 * i as f64;
        let lx = LEFT + pw + 12.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Reads a four-column numeric CSV with a header row.
pub fn read_curve_csv(path: &Path) -> Result<Vec<(f64, f64, f64, f64)>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(path, e))?;
        let v: Vec<f64> = rec
            .iter()
            .take(4)
            .map(|f| f.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
        if v.len() != 4 {
            return Err(Error::io(path, std::io::Error::other("expected four columns")));
        }
        out.push((v[0], v[1], v[2], v[3]));
    }
    Ok(out)
}

/// Run directories (those holding a `config.toml`) at or below `root`,
/// at most three levels deep, in sorted order.
pub fn find_runs(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, depth: usize, out: &mut Vec<PathBuf>) {
        if dir.join(CONFIG_FILE).is_file() {
            out.push(dir.to_path_buf());
            return;
        }
        if depth == 0 {
            return;
        }
        let Ok(entries) = fs::read_dir(dir) else { return };
        let mut dirs: Vec<PathBuf> = entries.filter_map(|e| e.ok()).map(|e| e.path()).filter(|p| p.is_dir()).collect();
        dirs.sort();
        for d in dirs {
            walk(&d, depth - 1, out);
        }
    }
    let mut out = Vec::new();
    walk(root, 3, &mut out);
    out
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes SVG charts next to each run's CSVs and, in `root`, `summary.csv`
/// (one row per scenario/algorithm/strategy, pooling seeds) with a matching
/// chart of mean training curves. Returns the files written.
pub fn emit_outputs(root: &Path) -> Result<Vec<PathBuf>> {
    let runs = find_runs(root);
    let mut written = Vec::new();
    let mut groups: BTreeMap<(String, String, String), (Vec<f64>, Vec<Vec<(f64, f64, f64, f64)>>)> = BTreeMap::new();
    for run in &runs {
        let curve_path = run.join(TRAINING_CURVE);
        let mut curve = None;
        if curve_path.is_file() {
            let pts = read_curve_csv(&curve_path)?;
            let svg = line_chart_svg(
                "Training curve",
                "environment steps",
                "episodic return",
                &[Series {
                    label: "evaluation".into(),
                    points: pts.clone(),
                }],
            );
            let out = run.join("training_curve.svg");
            write_file(&out, &svg)?;
            written.push(out);
            curve = Some(pts);
        }
        let sweep_path = run.join(SWEEP_CSV);
        if sweep_path.is_file() {
            let pts = read_curve_csv(&sweep_path)?;
            let svg = line_chart_svg(
                "Return against communication level",
                "communication level p",
                "episodic return",
                &[Series {
                    label: "sweep".into(),
                    points: pts,
                }],
            );
            let out = run.join("sweep_p.svg");
            write_file(&out, &svg)?;
            written.push(out);
        }
        let fe_path = run.join(FINAL_EVAL);
        if fe_path.is_file() {
            let text = fs::read_to_string(&fe_path).map_err(|e| Error::io(&fe_path, e))?;
            let fe: FinalEval =
                serde_json::from_str(&text).map_err(|e| Error::io(&fe_path, std::io::Error::other(e)))?;
            let entry = groups.entry((fe.scenario, fe.algorithm, fe.strategy)).or_default();
            entry.0.extend(fe.report.returns);
            entry.1.extend(curve);
        }
    }
    if groups.is_empty() && written.is_empty() {
        return Err(Error::MissingMetrics(root.to_path_buf()));
    }
    if !groups.is_empty() {
        let path = root.join(SUMMARY_CSV);
        let mut w = csv::Writer::from_path(&path).map_err(|e| csv_error(&path, e))?;
        w.write_record(["scenario", "algorithm", "strategy", "runs", "n", "mean", "ci_lo", "ci_hi"])
            .map_err(|e| csv_error(&path, e))?;
        let mut boot = SeedStreams::new(0).rng(Stream::Bootstrap);
        let mut series = Vec::new();
        for ((scenario, algorithm, strategy), (returns, curves)) in &groups {
            let r = EvalReport::from_returns(String::new(), returns.clone(), &mut boot)?;
            w.write_record([
                scenario.clone(),
                algorithm.clone(),
                strategy.clone(),
                curves.len().max(1).to_string(),
                r.n.to_string(),
                r.mean.to_string(),
                r.ci_lo.to_string(),
                r.ci_hi.to_string(),
            ])
            .map_err(|e| csv_error(&path, e))?;
            series.push(Series {
                label: format!("{scenario}/{algorithm}/{strategy}"),
                points: mean_curve(curves),
            });
        }
        w.flush().map_err(|e| Error::io(&path, e))?;
        written.push(path);
        let out = root.join("summary.svg");
        write_file(&out, &line_chart_svg("Mean training curves", "environment steps", "episodic return", &series))?;
        written.push(out);
    }
    Ok(written)
}

/// Pointwise mean over seeds, truncated to the shortest curve; the band is
/// the spread of the per-seed means.
fn mean_curve(curves: &[Vec<(f64, f64, f64, f64)>]) -> Vec<(f64, f64, f64, f64)> {
    let len = curves.iter().map(|c| c.len()).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let ys: Vec<f64> = curves.iter().map(|c| c[i].1).collect();
            let m = ys.iter().sum::<f64>() / ys.len() as f64;
            let lo = ys.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            (curves[0][i].0, m, lo, hi)
        })
        .collect()
}
