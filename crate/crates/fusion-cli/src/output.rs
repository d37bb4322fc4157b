//! Atomic file output, CSV tables and JSON reports.

use std::io::Write;
use std::path::Path;

use fusion_core::discrete::json::{fmt17, to_json_string};
use serde::Serialize;

use crate::Failure;

/// Writes `contents` to `path` through a temporary file in the same directory, or to stdout
/// when no path is given.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<(), Failure> {
    match path {
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(contents.as_bytes())?;
            out.flush()?;
        }
        Some(path) => {
            let dir = match path.parent() {
                Some(d) if !d.as_os_str().is_empty() => d,
                _ => Path::new("."),
            };
            let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
            tmp.write_all(contents.as_bytes())?;
            tmp.as_file().sync_all()?;
            tmp.persist(path).map_err(|e| Failure::from(e.error))?;
        }
    }
    Ok(())
}

/// A JSON document with 17-significant-digit floats and a trailing newline.
pub fn json<T: Serialize>(value: &T) -> Result<String, Failure> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    Ok(s)
}

/// A CSV table with a header row.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: ToString>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(ToString::to_string).collect(),
            rows: Vec::new(),
        }
    }

    /// A row made of a label followed by numbers.
    pub fn push(&mut self, label: &str, values: &[f64]) {
        let mut row = vec![label.to_string()];
        row.extend(values.iter().map(|v| fmt17(*v)));
        self.rows.push(row);
    }

    /// A row of numbers.
    pub fn push_values(&mut self, values: &[f64]) {
        self.rows.push(values.iter().map(|v| fmt17(*v)).collect());
    }

    pub fn to_csv(&self) -> Result<String, Failure> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| Failure::from(std::io::Error::other(e));
        w.write_record(&self.header).map_err(io)?;
        for r in &self.rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| Failure::from(std::io::Error::other(e.to_string())))?;
        Ok(String::from_utf8(bytes).expect("CSV of UTF-8 fields"))
    }
}
