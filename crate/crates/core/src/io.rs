//! File formats: headerless numeric CSV for matrices and vectors, TOML for
//! configuration, and the run manifest.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Write a file, creating missing parent directories.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

/// Parse TOML, reporting errors with the 1-based line of the offending span.
pub fn parse_toml<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T> {
    toml::from_str(text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e
            .span()
            .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1)
            .unwrap_or(0),
        msg: e.message().trim().to_string(),
    })
}

pub fn read_toml<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse_toml(&read_text(path)?, path)
}

pub fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| Error::config(e.to_string()))
}

/// Dense matrix read from CSV: one row per line, no header.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

fn parse_numeric_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| {
                f.parse::<f64>().map_err(|_| Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("not a number: '{f}'"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first().map(Vec::len) {
            if row.len() != first {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("expected {first} fields, found {}", row.len()),
                });
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let rows = parse_numeric_csv(path)?;
    if rows.is_empty() {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, msg: "empty matrix".into() });
    }
    let cols = rows[0].len();
    Ok(Matrix { rows: rows.len(), cols, data: rows.concat() })
}

/// A vector stored as a single row or a single column.
pub fn read_vector_csv(path: &Path) -> Result<Vec<f64>> {
    let rows = parse_numeric_csv(path)?;
    match rows.as_slice() {
        [] => Err(Error::Parse { path: path.to_path_buf(), line: 1, msg: "empty vector".into() }),
        [row] => Ok(row.clone()),
        _ if rows.iter().all(|r| r.len() == 1) => Ok(rows.concat()),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line: 2,
            msg: "a vector must be one row or one column".into(),
        }),
    }
}

/// One value per line under `header`.
pub fn vector_csv<T: std::fmt::Display>(header: &str, values: &[T]) -> String {
    let mut s = format!("{header}\n");
    for v in values {
        s.push_str(&format!("{v}\n"));
    }
    s
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// What is needed to rerun a command and get the same bytes out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    /// SHA-256 of the canonical (re-serialized) configuration.
    pub config_hash: String,
    pub config: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileDigest {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(FileDigest { path: path.to_path_buf(), sha256: sha256_hex(&bytes) })
    }
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: String) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_hash: sha256_hex(config.as_bytes()),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_text(path, &to_toml(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        read_toml(path)
    }
}
