//! Binary checkpoints: a magic line, a little-endian `u64` header length, a
//! JSON header, then each array's values as little-endian `f64` in row-major
//! order.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::CliError;

const MAGIC: &[u8; 6] = b"SPCK1\n";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub kind: String,
    /// Hash of the inputs that produced the arrays.
    pub key: String,
    pub shapes: Vec<[usize; 2]>,
    /// Kind-specific state.
    pub meta: serde_json::Value,
}

/// Write atomically through a sibling temporary file.
pub fn save(
    path: &Path,
    kind: &str,
    key: &str,
    meta: serde_json::Value,
    arrays: &[ArrayView2<f64>],
) -> Result<(), CliError> {
    let header = CheckpointHeader {
        kind: kind.to_string(),
        key: key.to_string(),
        shapes: arrays.iter().map(|a| [a.nrows(), a.ncols()]).collect(),
        meta,
    };
    let json = serde_json::to_vec(&header).map_err(|e| CliError::Io(e.to_string()))?;
    let tmp = path.with_extension("tmp");
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    {
        let mut w = BufWriter::new(File::create(&tmp).map_err(io)?);
        w.write_all(MAGIC).map_err(io)?;
        w.write_all(&(json.len() as u64).to_le_bytes())
            .map_err(io)?;
        w.write_all(&json).map_err(io)?;
        for a in arrays {
            for v in a.iter() {
                w.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        w.flush().map_err(io)?;
    }
    fs::rename(&tmp, path).map_err(io)
}

pub fn load(path: &Path) -> Result<(CheckpointHeader, Vec<Array2<f64>>), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut r = BufReader::new(File::open(path).map_err(io)?);
    let mut magic = [0u8; 6];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(CliError::Io(format!(
            "{}: not a checkpoint",
            path.display()
        )));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len).map_err(io)?;
    let mut json = vec![0u8; u64::from_le_bytes(len) as usize];
    r.read_exact(&mut json).map_err(io)?;
    let header: CheckpointHeader = serde_json::from_slice(&json)
        .map_err(|e| CliError::Io(format!("{}: bad header: {e}", path.display())))?;
    let mut arrays = Vec::with_capacity(header.shapes.len());
    let mut buf = [0u8; 8];
    for &[rows, cols] in &header.shapes {
        let mut values = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            r.read_exact(&mut buf).map_err(io)?;
            values.push(f64::from_le_bytes(buf));
        }
        arrays.push(Array2::from_shape_vec((rows, cols), values).expect("length matches shape"));
    }
    Ok((header, arrays))
}

/// Load a checkpoint, refusing one of another kind or produced from other inputs.
pub fn load_matching(
    path: &Path,
    kind: &str,
    key: &str,
) -> Result<(CheckpointHeader, Vec<Array2<f64>>), CliError> {
    let (header, arrays) = load(path)?;
    if header.kind != kind || header.key != key {
        return Err(CliError::Stale(format!(
            "{} holds {} {} but {kind} {key} was expected",
            path.display(),
            header.kind,
            header.key
        )));
    }
    Ok((header, arrays))
}
