//! CSV and JSON report emission, the run manifest and the output-directory lock.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CliError;

/// Identifies the configuration and seed behind a report. Kept free of
/// timestamps so reruns produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

impl Provenance {
    pub fn new(command: &str, config_hash: &str, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(i64),
    Float(f64),
    Text(String),
    Empty,
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Float(v) => format_float(*v),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Float(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::Text(v)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(v: Option<T>) -> Self {
        v.map_or(Cell::Empty, Into::into)
    }
}

/// 17 significant digits, enough to recover every `f64` exactly.
pub fn format_float(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.16e}")
    } else {
        v.to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Self {
            columns: columns.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(
            row.len(),
            self.columns.len(),
            "row width must match the columns"
        );
        self.rows.push(row);
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// `#`-prefixed provenance lines, the header row, then one line per row.
pub fn write_csv(path: &Path, table: &Table, provenance: &Provenance) -> Result<(), CliError> {
    let mut out = Vec::new();
    writeln!(out, "# command={}", provenance.command).unwrap();
    writeln!(out, "# config_hash={}", provenance.config_hash).unwrap();
    writeln!(out, "# seed={}", provenance.seed).unwrap();
    writeln!(out, "# version={}", provenance.version).unwrap();
    {
        let mut w = csv::Writer::from_writer(&mut out);
        let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
        w.write_record(&table.columns).map_err(csv_err)?;
        for row in &table.rows {
            w.write_record(row.iter().map(Cell::render))
                .map_err(csv_err)?;
        }
        w.flush().map_err(io_err(path))?;
    }
    fs::write(path, out).map_err(io_err(path))
}

/// Read back a CSV written by [`write_csv`] as the header and raw string rows.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>), CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let body: String = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| format!("{l}\n"))
        .collect();
    let mut r = csv::Reader::from_reader(body.as_bytes());
    let csv_err = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let header = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(String::from)
        .collect();
    let rows = r
        .records()
        .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
        .collect::<Result<_, _>>()
        .map_err(csv_err)?;
    Ok((header, rows))
}

#[derive(Serialize, Deserialize)]
struct JsonReport<T> {
    provenance: Provenance,
    data: T,
}

pub fn write_json<T: Serialize>(
    path: &Path,
    data: &T,
    provenance: &Provenance,
) -> Result<(), CliError> {
    let report = JsonReport {
        provenance: provenance.clone(),
        data,
    };
    let mut text =
        serde_json::to_string_pretty(&report).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(Provenance, T), CliError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let report: JsonReport<T> = serde_json::from_str(&text)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok((report.provenance, report.data))
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFile {
    pub path: String,
    pub sha256: String,
}

/// Written next to the reports of every command; the only file carrying a
/// timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub unix_time: u64,
    pub config: String,
    pub files: Vec<ManifestFile>,
}

pub fn write_manifest(
    dir: &Path,
    provenance: &Provenance,
    config_text: &str,
    files: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let files = files
        .iter()
        .map(|f| {
            Ok(ManifestFile {
                path: f.strip_prefix(dir).unwrap_or(f).display().to_string(),
                sha256: sha256_file(f)?,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let manifest = Manifest {
        command: provenance.command.clone(),
        config_hash: provenance.config_hash.clone(),
        version: provenance.version.clone(),
        unix_time: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0, |d| d.as_secs()),
        config: config_text.to_string(),
        files,
    };
    let path = dir.join(format!("manifest-{}.json", provenance.command));
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}

/// Exclusive hold on an output directory; released on drop.
#[derive(Debug)]
pub struct OutputLock {
    path: PathBuf,
}

impl OutputLock {
    pub fn acquire(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let path = dir.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Io(format!(
                "{} exists: another run is using {}",
                path.display(),
                dir.display()
            ))),
            Err(e) => Err(io_err(&path)(e)),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
