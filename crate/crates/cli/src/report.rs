//! Writing a run's CSV traces and JSON summary.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

use crate::run::Bundle;

pub fn summary_name(app: &str) -> String {
    format!("{app}_summary.json")
}

/// Writes every table and the summary into `out`; returns the paths written.
pub fn write_bundle(bundle: &Bundle, app: &str, out: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let mut written = Vec::new();
    for (name, table) in &bundle.tables {
        let path = out.join(name);
        fs::write(&path, table.to_csv()).with_context(|| format!("writing {}", path.display()))?;
        written.push(path);
    }
    let path = out.join(summary_name(app));
    let mut text = serde_json::to_string_pretty(&bundle.summary)?;
    text.push('\n');
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
    written.push(path);
    Ok(written)
}
