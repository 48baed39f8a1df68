//! Atomic, reproducible file output.
//!
//! Every file is written to a temporary sibling and renamed into place, so a
//! crash never leaves a half-written artifact. CSV files open with a comment
//! line carrying the seed and configuration digest; JSON files carry the same
//! data in a `provenance` object. Floats use the shortest representation that
//! round-trips.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_digest: String,
}

/// Write `bytes` to `path` atomically.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Shortest round-trip float text.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

#[derive(Debug, Clone)]
pub struct CsvTable {
    buf: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(provenance: &Provenance, header: &[&str]) -> Self {
        let mut buf = format!("# seed={}, config_digest={}\n", provenance.seed, provenance.config_digest);
        buf.push_str(&header.join(","));
        buf.push('\n');
        Self { buf, columns: header.len() }
    }

    /// Append one row of preformatted cells.
    pub fn row(&mut self, cells: &[Cell]) {
        debug_assert_eq!(cells.len(), self.columns);
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.buf.push(',');
            }
            match c {
                Cell::Int(v) => write!(self.buf, "{v}").unwrap(),
                Cell::Float(v) => self.buf.push_str(&fmt_f64(*v)),
                Cell::Text(s) => self.buf.push_str(s),
            }
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.buf.as_bytes())
    }
}

#[derive(Debug, Clone)]
pub enum Cell {
    Int(u64),
    Float(f64),
    Text(String),
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<u32> for Cell {
    fn from(v: u32) -> Self {
        Cell::Int(v as u64)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: &'a T,
}

/// Pretty JSON of `body` with a leading `provenance` object.
pub fn json_with_provenance<T: Serialize>(provenance: &Provenance, body: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope { provenance, body })?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, provenance: &Provenance, body: &T) -> Result<()> {
    write_atomic(path, json_with_provenance(provenance, body)?.as_bytes())
}
