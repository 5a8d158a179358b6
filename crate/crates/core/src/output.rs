//! Time series containers and CSV/JSON emitters with run metadata.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Sampled observables; `rows[i][k]` is observable `k` at `times[i]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    pub names: Vec<String>,
    pub times: Vec<f64>,
    pub rows: Vec<Vec<f64>>,
}

impl TimeSeries {
    pub fn new(names: Vec<String>) -> Self {
        TimeSeries { names, times: Vec::new(), rows: Vec::new() }
    }

    pub fn push(&mut self, t: f64, values: Vec<f64>) {
        debug_assert_eq!(values.len(), self.names.len());
        self.times.push(t);
        self.rows.push(values);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.names.iter().position(|n| n == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn to_csv(&self, meta: &Metadata) -> String {
        let mut out = meta.header();
        out.push_str("time_us");
        for n in &self.names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (t, row) in self.times.iter().zip(&self.rows) {
            let _ = write!(out, "{t}");
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Key/value pairs written as `# key: value` header lines.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Metadata {
    pub entries: Vec<(String, String)>,
}

impl Metadata {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.entries.push((key.to_string(), value.to_string()));
        self
    }

    pub fn push(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn header(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "# {k}: {}", v.replace('\n', " "));
        }
        out
    }
}

/// Plain CSV table with a metadata header.
pub fn table_csv(meta: &Metadata, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = meta.header();
    out.push_str(&columns.join(","));
    out.push('\n');
    for r in rows {
        out.push_str(&r.join(","));
        out.push('\n');
    }
    out
}

/// SHA-256 of the text, hex encoded.
pub fn content_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Io(e.to_string()))
}

pub fn write_text(path: &Path, content: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut ts = TimeSeries::new(vec!["xx".into(), "n".into()]);
        ts.push(0.0, vec![1.0, 4.0]);
        ts.push(0.5, vec![-0.25, 3.5]);
        let meta = Metadata::new().with("seed", 7);
        let csv = ts.to_csv(&meta);
        assert_eq!(csv, "# seed: 7\ntime_us,xx,n\n0,1,4\n0.5,-0.25,3.5\n");
        assert_eq!(ts.column("n").unwrap(), vec![4.0, 3.5]);
        assert!(ts.column("zz").is_none());
    }

    #[test]
    fn hash_is_sha256() {
        assert_eq!(
            content_hash("abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
