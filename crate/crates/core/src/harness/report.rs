//! Plot-ready aggregates of a metrics CSV.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::metrics::MetricsRow;
use super::persist;
use crate::{Error, Result};

/// Aggregates of one (method, T, K) cell over its successful replications.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryRow {
    pub method: String,
    pub t: usize,
    pub k: usize,
    pub n: usize,
    pub failed: usize,
    pub mse_mean: f64,
    pub mse_se: f64,
    pub subopt_mean: f64,
    pub subopt_se: f64,
    pub gv_mean: f64,
    pub logdet_mean: f64,
    pub wall_ms_mean: f64,
}

/// Least-squares slope of `ln(mean MSE)` against `ln T` for one (method, K).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlopeRow {
    pub method: String,
    pub k: usize,
    pub points: usize,
    pub slope: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    /// Sorted by method, K, then T, so each (method, K) run is one series.
    pub summary: Vec<SummaryRow>,
    pub slopes: Vec<SlopeRow>,
}

/// Mean and standard error; the error is NaN below two values.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Ordinary least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    Some(sxy / sxx)
}

impl Report {
    pub fn from_rows(rows: &[MetricsRow]) -> Self {
        let mut keys: Vec<(String, usize, usize)> = rows.iter().map(|r| (r.method.clone(), r.k, r.t)).collect();
        keys.sort();
        keys.dedup();

        let summary: Vec<SummaryRow> = keys
            .into_iter()
            .map(|(method, k, t)| {
                let cell: Vec<&MetricsRow> = rows
                    .iter()
                    .filter(|r| r.method == method && r.k == k && r.t == t)
                    .collect();
                let ok: Vec<&&MetricsRow> = cell.iter().filter(|r| !r.failed()).collect();
                let col = |f: fn(&MetricsRow) -> f64| ok.iter().map(|r| f(r)).collect::<Vec<f64>>();
                let (mse_mean, mse_se) = mean_se(&col(|r| r.mse));
                let (subopt_mean, subopt_se) = mean_se(&col(|r| r.subopt));
                SummaryRow {
                    n: ok.len(),
                    failed: cell.len() - ok.len(),
                    mse_mean,
                    mse_se,
                    subopt_mean,
                    subopt_se,
                    gv_mean: mean_se(&col(|r| r.gv)).0,
                    logdet_mean: mean_se(&col(|r| r.logdet)).0,
                    wall_ms_mean: mean_se(&col(|r| r.wall_ms as f64)).0,
                    method,
                    t,
                    k,
                }
            })
            .collect();

        let mut slopes = Vec::new();
        let mut i = 0;
        while i < summary.len() {
            let mut j = i;
            while j < summary.len() && summary[j].method == summary[i].method && summary[j].k == summary[i].k {
                j += 1;
            }
            let pts: Vec<(f64, f64)> = summary[i..j]
                .iter()
                .filter(|s| s.mse_mean > 0.0 && s.t > 0)
                .map(|s| ((s.t as f64).ln(), s.mse_mean.ln()))
                .collect();
            let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().cloned().unzip();
            if let Some(slope) = ls_slope(&x, &y) {
                slopes.push(SlopeRow {
                    method: summary[i].method.clone(),
                    k: summary[i].k,
                    points: pts.len(),
                    slope,
                });
            }
            i = j;
        }
        Report { summary, slopes }
    }

    pub fn row(&self, method: &str, t: usize, k: usize) -> Option<&SummaryRow> {
        self.summary.iter().find(|s| s.method == method && s.t == t && s.k == k)
    }

    /// Human-readable table; GV is shown in units of 1e-11.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<18} {:>6} {:>5} {:>4} {:>22} {:>22} {:>14} {:>10}",
            "method", "T", "K", "n", "MSE (mean ± se)", "SubOpt (mean ± se)", "GV (1e-11)", "wall_ms"
        );
        for r in &self.summary {
            let _ = writeln!(
                s,
                "{:<18} {:>6} {:>5} {:>4} {:>22} {:>22} {:>14.4} {:>10.1}",
                r.method,
                r.t,
                r.k,
                r.n,
                format!("{:.5} ± {:.5}", r.mse_mean, r.mse_se),
                format!("{:.5} ± {:.5}", r.subopt_mean, r.subopt_se),
                r.gv_mean * 1e11,
                r.wall_ms_mean
            );
        }
        if !self.slopes.is_empty() {
            let _ = writeln!(s, "\nlog-log slope of mean MSE vs T");
            for sl in &self.slopes {
                let _ = writeln!(
                    s,
                    "{:<18} K={:<5} {:>8.4} ({} points)",
                    sl.method, sl.k, sl.slope, sl.points
                );
            }
        }
        s
    }

    /// Writes `summary.csv`, `slopes.csv` and `summary.txt` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_csv(&dir.join("summary.csv"), &self.summary, SUMMARY_HEADER)?;
        write_csv(
            &dir.join("slopes.csv"),
            &self.slopes,
            &["method", "k", "points", "slope"],
        )?;
        let path = dir.join("summary.txt");
        fs::write(&path, self.to_text()).map_err(|e| Error::io(&path, e))
    }
}

const SUMMARY_HEADER: &[&str] = &[
    "method",
    "t",
    "k",
    "n",
    "failed",
    "mse_mean",
    "mse_se",
    "subopt_mean",
    "subopt_se",
    "gv_mean",
    "logdet_mean",
    "wall_ms_mean",
];

// Header written explicitly so empty inputs still produce one.
fn write_csv<T: Serialize>(path: &Path, rows: &[T], header: &[&str]) -> Result<()> {
    let wrap = |e: csv::Error| Error::io(path, std::io::Error::other(e));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(wrap)?;
    w.write_record(header).map_err(wrap)?;
    for r in rows {
        w.serialize(r).map_err(wrap)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads `metrics_csv` and writes the report files into `out_dir`.
pub fn report(metrics_csv: &Path, out_dir: &Path) -> Result<Report> {
    let rows = persist::read_metrics_csv(metrics_csv)?;
    let rep = Report::from_rows(&rows);
    rep.write(out_dir)?;
    Ok(rep)
}
