//! Training curves: per-metric mean/std over evaluation rows, divergence to
//! the real corpus, and self-contained SVG charts.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::eval::{EvalRow, MetricStats};
use crate::codec::ParametricSequence;
use crate::error::{Error, Result};
use crate::metrics::{js_divergence, mean_std, score, Metric, MetricsReport, JS_BINS};

/// Metric values of a population of danmakus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Population {
    pub label: String,
    pub samples: Vec<MetricsReport>,
}

impl Population {
    pub fn values(&self, m: Metric) -> Vec<f64> {
        self.samples.iter().map(|r| r.get(m)).collect()
    }

    pub fn mean(&self, m: Metric) -> f64 {
        mean_std(&self.values(m)).0
    }

    pub fn from_sequences(label: &str, seqs: &[ParametricSequence]) -> Result<Self> {
        Ok(Population { label: label.to_string(), samples: seqs.iter().map(score).collect::<Result<_>>()? })
    }
}

/// Sequence files of a directory in name order, skipping non-sequence JSON.
pub fn sequence_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension().is_some_and(|x| x == "json")
                && p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seq_"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Loads a population from a JSON population file or scores a directory of
/// `seq_*.json` files.
pub fn load_population(path: &Path) -> Result<Population> {
    if path.is_dir() {
        let files = sequence_files(path)?;
        if files.is_empty() {
            return Err(Error::Format(format!("{} holds no seq_*.json files", path.display())));
        }
        let seqs = files.iter().map(|f| ParametricSequence::load(f)).collect::<Result<Vec<_>>>()?;
        return Population::from_sequences(&path.display().to_string(), &seqs);
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let pop: Population = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if pop.samples.is_empty() {
        return Err(Error::Format(format!("{} holds an empty population", path.display())));
    }
    Ok(pop)
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogEntry {
    pub iteration: usize,
    pub eval: EvalRow,
}

fn parse_num<T: std::str::FromStr>(field: &str, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| Error::Format(format!("line {line}: cannot parse `{field}`")))
}

/// Parses the `iter,sf_mean,...` training log.
pub fn parse_log_csv(text: &str) -> Result<Vec<LogEntry>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 9 {
            return Err(Error::Format(format!("line {}: expected 9 columns, found {}", i + 1, f.len())));
        }
        let st = |a: usize| -> Result<MetricStats> {
            Ok(MetricStats { mean: parse_num(f[a], i + 1)?, std: parse_num(f[a + 1], i + 1)? })
        };
        out.push(LogEntry {
            iteration: parse_num(f[0], i + 1)?,
            eval: EvalRow { sf: st(1)?, mm: st(3)?, cov: st(5)?, failed: 0 },
        });
    }
    Ok(out)
}

/// Parses the `iter,sf,mm,cov` per-sample log.
pub fn parse_samples_csv(text: &str) -> Result<Vec<(usize, MetricsReport)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::Format(format!("line {}: expected 4 columns, found {}", i + 1, f.len())));
        }
        out.push((
            parse_num(f[0], i + 1)?,
            MetricsReport { sf: parse_num(f[1], i + 1)?, mm: parse_num(f[2], i + 1)?, cov: parse_num(f[3], i + 1)? },
        ));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct CurveRow {
    pub iteration: usize,
    pub metric: Metric,
    pub mean: f64,
    pub std: f64,
    pub js_vs_real: Option<f64>,
}

fn stats_of(e: &EvalRow, m: Metric) -> MetricStats {
    match m {
        Metric::Sf => e.sf,
        Metric::Mm => e.mm,
        Metric::Cov => e.cov,
    }
}

fn svg_chart(m: Metric, rows: &[&CurveRow], baseline: f64) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let x_lo = rows.first().map_or(0.0, |r| r.iteration as f64);
    let x_hi = rows.last().map_or(1.0, |r| r.iteration as f64);
    let mut y_lo = baseline;
    let mut y_hi = baseline;
    for r in rows {
        y_lo = y_lo.min(r.mean - r.std);
        y_hi = y_hi.max(r.mean + r.std);
    }
    if !(y_hi > y_lo) {
        y_lo -= 0.5;
        y_hi += 0.5;
    }
    let x_span = if x_hi > x_lo { x_hi - x_lo } else { 1.0 };
    let px = |x: f64| PAD + (x - x_lo) / x_span * (W - 2.0 * PAD);
    let py = |y: f64| H - PAD - (y - y_lo) / (y_hi - y_lo) * (H - 2.0 * PAD);

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(s, r##"<rect width="{W}" height="{H}" fill="#ffffff"/>"##);
    let _ = writeln!(
        s,
        r##"<path d="M{PAD},{PAD} V{} H{}" fill="none" stroke="#444444" stroke-width="1"/>"##,
        H - PAD,
        W - PAD
    );
    let mut band = String::new();
    for r in rows {
        let _ = write!(band, "{:.3},{:.3} ", px(r.iteration as f64), py(r.mean + r.std));
    }
    for r in rows.iter().rev() {
        let _ = write!(band, "{:.3},{:.3} ", px(r.iteration as f64), py(r.mean - r.std));
    }
    let _ = writeln!(s, r##"<polygon points="{}" fill="#3b7dd8" fill-opacity="0.25" stroke="none"/>"##, band.trim_end());
    let line: Vec<String> =
        rows.iter().map(|r| format!("{:.3},{:.3}", px(r.iteration as f64), py(r.mean))).collect();
    let _ = writeln!(s, r##"<polyline points="{}" fill="none" stroke="#3b7dd8" stroke-width="2"/>"##, line.join(" "));
    let _ = writeln!(
        s,
        r##"<line x1="{PAD}" y1="{y:.3}" x2="{}" y2="{y:.3}" stroke="#d83b3b" stroke-width="1.5" stroke-dasharray="6 4"/>"##,
        W - PAD,
        y = py(baseline)
    );
    let _ = writeln!(s, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="14">{} (real mean {baseline:.4})</text>"#, m.name());
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}" font-family="sans-serif" font-size="11">{x_lo}</text>"#, H - PAD + 16.0);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-family="sans-serif" font-size="11" text-anchor="end">{x_hi}</text>"#,
        W - PAD,
        H - PAD + 16.0
    );
    let _ = writeln!(s, r#"<text x="4" y="{:.3}" font-family="sans-serif" font-size="11">{y_hi:.3}</text>"#, PAD);
    let _ = writeln!(s, r#"<text x="4" y="{:.3}" font-family="sans-serif" font-size="11">{y_lo:.3}</text>"#, H - PAD);
    s.push_str("</svg>\n");
    s
}

/// Writes `curves.csv` and one `curve_<metric>.svg` per metric into `out`.
pub fn emit_curves(
    log: &[LogEntry],
    samples: Option<&[(usize, MetricsReport)]>,
    baseline: &Population,
    out: &Path,
) -> Result<Vec<CurveRow>> {
    if log.is_empty() {
        return Err(Error::Config("training log has no rows".into()));
    }
    let mut rows = Vec::with_capacity(log.len() * 3);
    for entry in log {
        for m in Metric::ALL {
            let st = stats_of(&entry.eval, m);
            let js_vs_real = match samples {
                Some(all) => {
                    let gen: Vec<f64> =
                        all.iter().filter(|(it, _)| *it == entry.iteration).map(|(_, r)| r.get(m)).collect();
                    if gen.is_empty() {
                        None
                    } else {
                        Some(js_divergence(&gen, &baseline.values(m), JS_BINS)?)
                    }
                }
                None => None,
            };
            rows.push(CurveRow { iteration: entry.iteration, metric: m, mean: st.mean, std: st.std, js_vs_real });
        }
    }
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut csv = String::from("iteration,metric,mean,std,js_vs_real\n");
    for r in &rows {
        let js = r.js_vs_real.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(csv, "{},{},{},{},{}", r.iteration, r.metric.name(), r.mean, r.std, js);
    }
    let path = out.join("curves.csv");
    fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    for m in Metric::ALL {
        let series: Vec<&CurveRow> = rows.iter().filter(|r| r.metric == m).collect();
        let path = out.join(format!("curve_{}.svg", m.name()));
        fs::write(&path, svg_chart(m, &series, baseline.mean(m))).map_err(|e| Error::io(&path, e))?;
    }
    Ok(rows)
}
