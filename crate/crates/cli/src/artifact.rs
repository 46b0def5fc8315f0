//! Output artifacts. Every run writes one JSON certificate embedding the
//! full parsed config, plus zero or more columnar `.dat` tables for plotting.
//! Serialization is deterministic: map keys are sorted, floats round-trip
//! through the shortest exact representation, and the thread count is kept
//! out of the certificate so parallel and sequential runs produce identical
//! bytes under the same seed.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Artifact<'a> {
    pub schema_version: u32,
    pub command: &'a str,
    pub map: String,
    pub seed: u64,
    pub config: &'a ExperimentConfig,
    pub pass: bool,
    pub report: serde_json::Value,
}

#[derive(Debug, thiserror::Error)]
#[error("cannot write {path}: {source}")]
pub struct WriteError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), WriteError> {
    let io = |source| WriteError {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    let mut file = std::fs::File::create(path).map_err(io)?;
    file.write_all(bytes).map_err(io)?;
    Ok(())
}

impl Artifact<'_> {
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, WriteError> {
        let path = out_dir.join(format!("{}.json", self.command));
        let mut body = serde_json::to_vec_pretty(self).expect("artifact serializes");
        body.push(b'\n');
        write_bytes(&path, &body)?;
        Ok(path)
    }
}

/// Renders a plot table: `# <header>` then one row per line, columns joined
/// by single spaces, floats printed with 17 significant digits so reruns
/// compare byte-for-byte.
pub fn dat_table(header: &str, rows: &[Vec<f64>]) -> String {
    let mut out = String::with_capacity(32 + rows.len() * 24);
    out.push_str("# ");
    out.push_str(header);
    out.push('\n');
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                out.push(' ');
            }
            first = false;
            out.push_str(&format!("{v:.17e}"));
        }
        out.push('\n');
    }
    out
}

pub fn write_plots(out_dir: &Path, plots: &[(String, String)]) -> Result<(), WriteError> {
    for (name, body) in plots {
        write_bytes(&out_dir.join(name), body.as_bytes())?;
    }
    Ok(())
}
