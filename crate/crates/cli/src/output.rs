//! Artifact files. Everything is written to a temporary name in the target
//! directory and renamed into place, so a reader never sees half a file.

use crate::config::Format;
use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

/// JSON envelope: the result plus the configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub config_hash: String,
    pub config: String,
    pub result: T,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Text(String::new()), Cell::Num)
    }
}

/// 17 significant digits round-trip every f64.
pub fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{x:.16e}")
    }
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Num(x) => format_number(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(header: Vec<&'static str>) -> Self {
        Table { header, rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }
}

pub fn sha256_hex(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("artifact");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    std::fs::rename(&tmp, path).map_err(CliError::io(path))
}

/// Writes artifacts for one run into one directory.
#[derive(Debug, Clone)]
pub struct Emitter {
    pub dir: PathBuf,
    pub config: String,
    pub config_hash: String,
    pub formats: Vec<Format>,
    written: std::cell::RefCell<Vec<PathBuf>>,
}

impl Emitter {
    pub fn new(dir: &Path, config: String, formats: Vec<Format>) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let config_hash = sha256_hex(&config);
        Ok(Emitter { dir: dir.to_path_buf(), config, config_hash, formats, written: Default::default() })
    }

    pub fn written(&self) -> Vec<PathBuf> {
        self.written.borrow().clone()
    }

    fn record(&self, path: PathBuf) {
        self.written.borrow_mut().push(path);
    }

    pub fn json<T: Serialize>(&self, name: &str, result: &T) -> Result<(), CliError> {
        if !self.formats.contains(&Format::Json) {
            return Ok(());
        }
        let art = Artifact { config_hash: self.config_hash.clone(), config: self.config.clone(), result };
        let mut text = serde_json::to_string_pretty(&art).map_err(|e| CliError::Invalid(e.to_string()))?;
        text.push('\n');
        let path = self.dir.join(format!("{name}.json"));
        write_atomic(&path, text.as_bytes())?;
        self.record(path);
        Ok(())
    }

    /// Comment lines carry the hash and the echoed config, then a header row.
    pub fn csv(&self, name: &str, table: &Table) -> Result<(), CliError> {
        if !self.formats.contains(&Format::Csv) {
            return Ok(());
        }
        let mut out = String::new();
        writeln!(out, "# config_hash={}", self.config_hash).unwrap();
        for line in self.config.lines() {
            writeln!(out, "# {line}").unwrap();
        }
        writeln!(out, "{}", table.header.join(",")).unwrap();
        for row in &table.rows {
            let cells: Vec<String> = row.iter().map(Cell::render).collect();
            writeln!(out, "{}", cells.join(",")).unwrap();
        }
        let path = self.dir.join(format!("{name}.csv"));
        write_atomic(&path, out.as_bytes())?;
        self.record(path);
        Ok(())
    }

    /// A file written by someone else (e.g. a binary checkpoint).
    pub fn adopt(&self, path: PathBuf) {
        self.record(path);
    }
}
