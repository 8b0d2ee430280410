//! Percentile-bootstrap summaries and the on-disk tables.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng as _;

use crate::error::{Error, Result};
use crate::models::{DEFAULT_RIDGE_LAMBDA, OBS_PROB_CEIL, OBS_PROB_FLOOR};
use crate::rng::{derive_rng, stream};
use crate::synth::{PolicyValues, NOISY_OBS_RANGE, OBS_SLOPE_SCALE};

use super::config::{Method, SweepConfig};
use super::run::{MethodOutcome, ResultRow};

pub const ROWS_FILE: &str = "rows.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.txt";

pub const SUMMARY_HEADER: [&str; 8] = ["axis", "method", "metric", "mean", "ci_low", "ci_high", "n_sims", "seed"];
const ROWS_HEADER: [&str; 12] = [
    "axis_value",
    "sim",
    "seed",
    "method",
    "gamma",
    "target",
    "secondary",
    "combined",
    "rel_target",
    "rel_secondary",
    "rel_combined",
    "error",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Combined,
    Target,
    Secondary,
    Gamma,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Combined => "combined",
            Metric::Target => "target",
            Metric::Secondary => "secondary",
            Metric::Gamma => "gamma",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        [Metric::Combined, Metric::Target, Metric::Secondary, Metric::Gamma]
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown metric {s:?}")))
    }

    /// Relative values for the value metrics, the chosen weight for `Gamma`.
    fn read(self, o: &MethodOutcome) -> Option<f64> {
        match self {
            Metric::Combined => Some(o.relative.combined),
            Metric::Target => Some(o.relative.target),
            Metric::Secondary => Some(o.relative.secondary),
            Metric::Gamma => o.gamma,
        }
    }
}

/// One cell of the summary table. A cell with a single row has a point CI
/// and `degenerate` set; the flag is implied by `n_sims == 1` on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryCell {
    pub axis_value: f64,
    pub method: Method,
    pub metric: Metric,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n_sims: usize,
    pub seed: u64,
    pub degenerate: bool,
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Mean taken around the first value, so constant data returns that value
/// exactly.
fn mean(v: &[f64]) -> f64 {
    let base = v[0];
    base + v.iter().map(|x| x - base).sum::<f64>() / v.len() as f64
}

/// Mean and 95% percentile-bootstrap interval of `values`.
pub fn bootstrap_ci(values: &[f64], resamples: usize, seed: u64, index: u64) -> Result<(f64, f64, f64)> {
    if values.is_empty() || resamples == 0 {
        return Err(Error::InsufficientData("bootstrap needs values and resamples".into()));
    }
    let m = mean(values);
    if values.len() == 1 {
        return Ok((m, m, m));
    }
    let mut rng = derive_rng(seed, stream::SUMMARY, index);
    let n = values.len();
    let mut draw = vec![0.0; n];
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            draw.iter_mut().for_each(|d| *d = values[rng.random_range(0..n)]);
            mean(&draw)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    Ok((m, quantile(&means, 0.025), quantile(&means, 0.975)))
}

/// Cells ordered by first appearance of the axis value, then method, then
/// metric. Error rows are left out; `n_sims` counts the rows that were used.
pub fn summarize(rows: &[ResultRow], resamples: usize, seed: u64) -> Result<Vec<SummaryCell>> {
    let mut keys: Vec<(u64, Method)> = Vec::new();
    for r in rows {
        let k = (r.axis_value.to_bits(), r.method);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    let mut cells = Vec::new();
    let mut index = 0u64;
    for (bits, method) in keys {
        let axis_value = f64::from_bits(bits);
        let outcomes: Vec<&MethodOutcome> = rows
            .iter()
            .filter(|r| r.axis_value.to_bits() == bits && r.method == method)
            .filter_map(|r| r.outcome.as_ref().ok())
            .collect();
        let mut metrics = vec![Metric::Combined, Metric::Target, Metric::Secondary];
        if method.reports_gamma() || matches!(method, Method::HyperBeta | Method::HyperZero) {
            metrics.push(Metric::Gamma);
        }
        for metric in metrics {
            index += 1;
            let values: Vec<f64> = outcomes.iter().filter_map(|o| metric.read(o)).collect();
            if values.is_empty() {
                continue;
            }
            let (mean, ci_low, ci_high) = bootstrap_ci(&values, resamples, seed, index)?;
            cells.push(SummaryCell {
                axis_value,
                method,
                metric,
                mean,
                ci_low,
                ci_high,
                n_sims: values.len(),
                seed,
                degenerate: values.len() == 1,
            });
        }
    }
    Ok(cells)
}

fn opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |v| format!("{v:?}"))
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Parse(format!("line {line}: bad value in column {i}")))
}

fn opt_field(rec: &csv::StringRecord, i: usize, line: usize) -> Result<Option<f64>> {
    match rec.get(i) {
        Some("") => Ok(None),
        _ => field(rec, i, line).map(Some),
    }
}

pub fn write_summary(path: &Path, cells: &[SummaryCell]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for c in cells {
        w.write_record([
            format!("{:?}", c.axis_value),
            c.method.name().to_string(),
            c.metric.name().to_string(),
            format!("{:?}", c.mean),
            format!("{:?}", c.ci_low),
            format!("{:?}", c.ci_high),
            c.n_sims.to_string(),
            c.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary(path: &Path) -> Result<Vec<SummaryCell>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()? != SUMMARY_HEADER.as_slice() {
        return Err(Error::Parse(format!("{} does not have the summary header", path.display())));
    }
    let mut cells = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let (rec, line) = (rec?, i + 2);
        let n_sims: usize = field(&rec, 6, line)?;
        cells.push(SummaryCell {
            axis_value: field(&rec, 0, line)?,
            method: field(&rec, 1, line)?,
            metric: Metric::parse(&rec[2])?,
            mean: field(&rec, 3, line)?,
            ci_low: field(&rec, 4, line)?,
            ci_high: field(&rec, 5, line)?,
            n_sims,
            seed: field(&rec, 7, line)?,
            degenerate: n_sims == 1,
        });
    }
    Ok(cells)
}

pub fn write_rows(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ROWS_HEADER)?;
    for r in rows {
        let mut rec = vec![
            format!("{:?}", r.axis_value),
            r.sim.to_string(),
            r.seed.to_string(),
            r.method.name().to_string(),
        ];
        match &r.outcome {
            Ok(o) => {
                rec.push(opt(o.gamma));
                for v in [o.values, o.relative] {
                    rec.extend([v.target, v.secondary, v.combined].map(|x| format!("{x:?}")));
                }
                rec.push(String::new());
            }
            Err(e) => {
                rec.extend(std::iter::repeat_n(String::new(), 7));
                rec.push(e.clone());
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_path(path)?;
    if r.headers()? != ROWS_HEADER.as_slice() {
        return Err(Error::Parse(format!("{} does not have the rows header", path.display())));
    }
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let (rec, line) = (rec?, i + 2);
        let error = rec.get(11).unwrap_or("");
        let outcome = if error.is_empty() {
            let values = |at: usize| -> Result<PolicyValues> {
                Ok(PolicyValues {
                    target: field(&rec, at, line)?,
                    secondary: field(&rec, at + 1, line)?,
                    combined: field(&rec, at + 2, line)?,
                })
            };
            Ok(MethodOutcome {
                gamma: opt_field(&rec, 4, line)?,
                values: values(5)?,
                relative: values(8)?,
            })
        } else {
            Err(error.to_string())
        };
        rows.push(ResultRow {
            axis_value: field(&rec, 0, line)?,
            sim: field(&rec, 1, line)?,
            seed: field(&rec, 2, line)?,
            method: field(&rec, 3, line)?,
            outcome,
        });
    }
    Ok(rows)
}

/// Defaults in effect that no config key controls.
fn design_notes() -> Vec<String> {
    vec![
        "policy = linear softmax on [x (x) onehot(a), onehot(a)]".into(),
        "regressors = ridge with unpenalized intercept on [1, x, onehot(a), x (x) a, s, s (x) a, x (x) s]".into(),
        format!("default ridge_lambda = {DEFAULT_RIDGE_LAMBDA:?}"),
        format!("fitted obs_prob clip = [{OBS_PROB_FLOOR:?}, {OBS_PROB_CEIL:?}]"),
        format!(
            "noisy obs_prob clip = [{:?}, {:?}], theta_o ~ U[-1, 1] * {OBS_SLOPE_SCALE:?} / sqrt(d_x)",
            NOISY_OBS_RANGE.0, NOISY_OBS_RANGE.1
        ),
        "surrogate F(s) = s . (theta_f + N(0, sigma_f^2)) on synthetic data, s_1 on real data".into(),
        "importance-weight clipping = off".into(),
        "tuned gamma ties = closest to beta, then smaller".into(),
        "optimal gamma = grid point with the best true combined value, ties to the earlier point".into(),
        "relative metric = (V - V_unif) / (V_opt - V_unif), V_opt maximizing that metric".into(),
        "real-data logged users drawn with replacement; features standardized per column".into(),
        "paired design: shared dataset and evaluation contexts per (axis value, sim)".into(),
        "ci = 95% percentile bootstrap of the mean, linear interpolation".into(),
    ]
}

pub fn manifest_text(cfg: &SweepConfig) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# version = hyper-opl {}", env!("CARGO_PKG_VERSION"));
    for note in design_notes() {
        let _ = writeln!(out, "# design: {note}");
    }
    out.push_str(&cfg.to_text());
    out
}

/// Paths of one sweep's outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputPaths {
    pub rows: PathBuf,
    pub summary: PathBuf,
    pub manifest: PathBuf,
}

impl OutputPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            rows: dir.join(ROWS_FILE),
            summary: dir.join(SUMMARY_FILE),
            manifest: dir.join(MANIFEST_FILE),
        }
    }
}

/// Creates the directory and writes the manifest, so an unwritable
/// destination fails before any simulation runs.
pub fn prepare_outputs(dir: &Path, cfg: &SweepConfig) -> Result<OutputPaths> {
    fs::create_dir_all(dir)?;
    let paths = OutputPaths::in_dir(dir);
    fs::write(&paths.manifest, manifest_text(cfg))?;
    Ok(paths)
}

pub fn emit_outputs(paths: &OutputPaths, rows: &[ResultRow], cells: &[SummaryCell]) -> Result<()> {
    write_rows(&paths.rows, rows)?;
    write_summary(&paths.summary, cells)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_interpolates() {
        let v = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.0);
        assert_eq!(quantile(&v, 0.125), 0.5);
        assert_eq!(quantile(&v, 1.0), 4.0);
    }

    #[test]
    fn single_value_is_a_point() {
        assert_eq!(bootstrap_ci(&[0.7], 10, 1, 0).unwrap(), (0.7, 0.7, 0.7));
        assert!(bootstrap_ci(&[], 10, 1, 0).is_err());
    }
}
