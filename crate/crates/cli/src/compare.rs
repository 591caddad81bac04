//! Side-by-side table of run summaries.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use serde_json::Value;

#[derive(Clone, Debug, PartialEq)]
pub struct Row {
    pub label: String,
    pub method: String,
    pub metric: String,
    pub iterations: Option<u64>,
    pub time_s: Option<f64>,
    pub gnorm: Option<f64>,
    pub converged: bool,
    /// Values for `Comparison::metric_columns`, in order.
    pub metrics: Vec<Option<f64>>,
    /// Fewest iterations among converged rows sharing its method.
    pub winner: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub application: String,
    pub metric_columns: Vec<String>,
    pub rows: Vec<Row>,
}

fn text(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Null => "-".into(),
        other => other.to_string(),
    }
}

pub fn load(paths: &[impl AsRef<Path>]) -> Result<Comparison> {
    if paths.is_empty() {
        bail!("compare: no reports given");
    }
    let mut application: Option<String> = None;
    let mut raw = Vec::new();
    for p in paths {
        let p = p.as_ref();
        let body = fs::read_to_string(p).with_context(|| format!("reading report {}", p.display()))?;
        let v: Value = serde_json::from_str(&body).with_context(|| format!("parsing report {}", p.display()))?;
        let app = v["application"].as_str().with_context(|| format!("{}: no application field", p.display()))?.to_string();
        match &application {
            None => application = Some(app),
            Some(a) if *a != app => bail!("compare: mixed applications ({a} and {app} in {})", p.display()),
            _ => {}
        }
        let stem = p.file_stem().map_or_else(|| p.display().to_string(), |s| s.to_string_lossy().into_owned());
        raw.push((stem, v));
    }

    let mut metric_columns = BTreeSet::new();
    for (_, v) in &raw {
        for run in v["runs"].as_array().into_iter().flatten() {
            if let Some(m) = run["metrics"].as_object() {
                metric_columns.extend(m.iter().filter(|(_, x)| x.is_number()).map(|(k, _)| k.clone()));
            }
        }
    }
    let metric_columns: Vec<String> = metric_columns.into_iter().collect();

    let mut rows = Vec::new();
    for (stem, v) in &raw {
        let runs = v["runs"].as_array().cloned().unwrap_or_default();
        let many = runs.len() > 1;
        for run in runs {
            let label = if many { format!("{stem}#{}", run["run"]) } else { stem.clone() };
            rows.push(Row {
                label,
                method: text(&v["method"]),
                metric: text(&v["metric"]),
                iterations: run["iterations"].as_u64(),
                time_s: run["time_s"].as_f64(),
                gnorm: run["gnorm"].as_f64(),
                converged: run["converged"].as_bool().unwrap_or(false),
                metrics: metric_columns.iter().map(|c| run["metrics"][c].as_f64()).collect(),
                winner: false,
            });
        }
    }
    for i in 0..rows.len() {
        let best = rows
            .iter()
            .filter(|r| r.method == rows[i].method && r.converged)
            .filter_map(|r| r.iterations)
            .min();
        rows[i].winner = rows[i].converged && best.is_some() && rows[i].iterations == best;
    }
    Ok(Comparison { application: application.expect("at least one report"), metric_columns, rows })
}

fn num(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.6e}"))
}

impl Comparison {
    fn header(&self) -> Vec<String> {
        let mut h: Vec<String> =
            ["report", "method", "metric", "iter", "time_s", "gnorm", "converged"].iter().map(|s| s.to_string()).collect();
        h.extend(self.metric_columns.iter().cloned());
        h.push("winner".into());
        h
    }

    fn cells(&self, r: &Row, csv: bool) -> Vec<String> {
        let f = |v: Option<f64>| if csv { v.map_or_else(String::new, crate::io::fmt_f64) } else { num(v) };
        let mut c = vec![
            r.label.clone(),
            r.method.clone(),
            r.metric.clone(),
            r.iterations.map_or_else(|| "-".into(), |n| n.to_string()),
            f(r.time_s),
            f(r.gnorm),
            r.converged.to_string(),
        ];
        c.extend(r.metrics.iter().map(|&v| f(v)));
        c.push(if r.winner { "*".into() } else { String::new() });
        c
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header().join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&self.cells(r, true).join(","));
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut grid = vec![self.header()];
        grid.extend(self.rows.iter().map(|r| self.cells(r, false)));
        let widths: Vec<usize> =
            (0..grid[0].len()).map(|j| grid.iter().map(|row| row[j].chars().count()).max().unwrap_or(0)).collect();
        let mut s = String::new();
        for row in &grid {
            let line: Vec<String> = row.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
            s.push_str(line.join("  ").trim_end());
            s.push('\n');
        }
        s
    }
}
