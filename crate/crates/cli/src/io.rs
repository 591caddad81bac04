//! Text formats for matrices and sampling sets.
//!
//! Matrix: a `rows cols` line, then row-major values, one row per line.
//! Sampling set: a JSON header line `{"dims": [...], "ranks": [...], "count": n}`,
//! then one `i₁ … i_d value` line per entry with 1-based indices.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use precond::linalg::DenseMatrix;
use precond::trcomp::SamplingSet;
use serde::{Deserialize, Serialize};

/// Shortest text that parses back to the same bits; integral values without
/// a fraction, tiny and huge ones in scientific notation.
pub fn fmt_f64(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{v}")
    } else {
        format!("{v:?}")
    }
}

pub fn format_matrix(a: &DenseMatrix) -> String {
    let mut s = format!("{} {}\n", a.nrows(), a.ncols());
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| fmt_f64(a[(i, j)])).collect();
        s.push_str(&row.join(" "));
        s.push('\n');
    }
    s
}

pub fn parse_matrix(text: &str) -> Result<DenseMatrix> {
    let mut tokens = text.split_whitespace();
    let mut dim = |what: &str| -> Result<usize> {
        let t = tokens.next().with_context(|| format!("missing {what} in header"))?;
        t.parse().with_context(|| format!("bad {what} '{t}'"))
    };
    let (rows, cols) = (dim("row count")?, dim("column count")?);
    let vals = tokens
        .enumerate()
        .map(|(k, t)| t.parse::<f64>().with_context(|| format!("entry {}: bad number '{t}'", k + 1)))
        .collect::<Result<Vec<_>>>()?;
    ensure!(vals.len() == rows * cols, "expected {} entries for a {rows}x{cols} matrix, found {}", rows * cols, vals.len());
    Ok(DenseMatrix::from_row_slice(rows, cols, &vals))
}

pub fn read_matrix(path: &Path) -> Result<DenseMatrix> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_matrix(&text).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingHeader {
    pub dims: Vec<usize>,
    pub ranks: Vec<usize>,
    pub count: usize,
}

pub fn format_sampling(set: &SamplingSet, ranks: &[usize]) -> Result<String> {
    let header = SamplingHeader { dims: set.dims().to_vec(), ranks: ranks.to_vec(), count: set.len() };
    let mut s = serde_json::to_string(&header)?;
    s.push('\n');
    for (idx, v) in set.indices().iter().zip(set.values()) {
        for i in idx {
            write!(s, "{} ", i + 1)?;
        }
        writeln!(s, "{}", fmt_f64(*v))?;
    }
    Ok(s)
}

pub fn parse_sampling(text: &str) -> Result<(SamplingHeader, SamplingSet)> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, first) = lines.next().context("empty sampling file")?;
    let header: SamplingHeader = serde_json::from_str(first).context("line 1: bad header")?;
    let d = header.dims.len();
    let mut entries = Vec::with_capacity(header.count);
    for (no, line) in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        ensure!(toks.len() == d + 1, "line {}: expected {} fields, found {}", no + 1, d + 1, toks.len());
        let mut idx = Vec::with_capacity(d);
        for (k, t) in toks[..d].iter().enumerate() {
            let i: usize = t.parse().with_context(|| format!("line {}: bad index '{t}'", no + 1))?;
            if i == 0 || i > header.dims[k] {
                bail!("line {}: index {i} outside 1..={} in mode {}", no + 1, header.dims[k], k + 1);
            }
            idx.push(i - 1);
        }
        let v: f64 = toks[d].parse().with_context(|| format!("line {}: bad value '{}'", no + 1, toks[d]))?;
        entries.push((idx, v));
    }
    ensure!(entries.len() == header.count, "header announces {} entries, found {}", header.count, entries.len());
    let set = SamplingSet::new(header.dims.clone(), entries)?;
    Ok((header, set))
}

pub fn read_sampling(path: &Path) -> Result<(SamplingHeader, SamplingSet)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_sampling(&text).with_context(|| format!("parsing {}", path.display()))
}
