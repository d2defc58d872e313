//! On-disk formats.
//!
//! Feature databases use a fixed little-endian binary layout:
//!
//! ```text
//! offset  size        field
//! 0       4           magic "SFDB"
//! 4       4           version (u32, = 1)
//! 8       4           dimension D (u32)
//! 12      8           count N (u64)
//! 20      4 * N * D   f32 values, row-major
//! ```
//!
//! Mixtures and calibration results are JSON; fitness curves and traces are
//! CSV with a header row.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::types::FeatureDatabase;

pub const SFDB_MAGIC: &[u8; 4] = b"SFDB";
pub const SFDB_VERSION: u32 = 1;
const SFDB_HEADER: usize = 20;

pub fn encode_sfdb(db: &FeatureDatabase) -> Vec<u8> {
    let mut out = Vec::with_capacity(SFDB_HEADER + db.as_flat().len() * 4);
    out.extend_from_slice(SFDB_MAGIC);
    out.extend_from_slice(&SFDB_VERSION.to_le_bytes());
    out.extend_from_slice(&(db.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(db.len() as u64).to_le_bytes());
    for v in db.as_flat() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses an SFDB buffer. `origin` only labels errors.
pub fn decode_sfdb(bytes: &[u8], origin: &Path) -> Result<FeatureDatabase> {
    let bad = |reason: &str| Error::format(origin, reason);
    if bytes.len() < SFDB_HEADER {
        return Err(bad("truncated header"));
    }
    if &bytes[0..4] != SFDB_MAGIC {
        return Err(bad("bad magic, expected SFDB"));
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes"));
    if version != SFDB_VERSION {
        return Err(Error::format(
            origin,
            format!("unsupported version {version}"),
        ));
    }
    let dim = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    let count = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes"));
    if dim == 0 {
        return Err(bad("dimension must be >= 1"));
    }
    let expected = (count as u128) * (dim as u128) * 4 + SFDB_HEADER as u128;
    if expected != bytes.len() as u128 {
        return Err(Error::format(
            origin,
            format!(
                "length {} does not match header (dim {dim}, count {count})",
                bytes.len()
            ),
        ));
    }
    let values: Vec<f32> = bytes[SFDB_HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    FeatureDatabase::from_flat(dim, values).map_err(|e| Error::format(origin, e.to_string()))
}

pub fn write_sfdb(path: &Path, db: &FeatureDatabase) -> Result<()> {
    write_bytes(path, &encode_sfdb(db))
}

pub fn read_sfdb(path: &Path) -> Result<FeatureDatabase> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_sfdb(&bytes, path)
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s =
        serde_json::to_string_pretty(value).map_err(|e| Error::format(path, e.to_string()))?;
    s.push('\n');
    write_bytes(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&s).map_err(|e| Error::format(path, e.to_string()))
}

/// Writes `(value, fitness)` rows under a `value,fitness` header.
/// Non-finite fitness is written as `-inf`.
pub fn write_curve_csv(path: &Path, points: &[(f64, f64)]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "value,fitness").expect("vec write");
    for (v, f) in points {
        writeln!(buf, "{v},{f}").expect("vec write");
    }
    write_bytes(path, &buf)
}

pub fn read_curve_csv(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("value,fitness") => {}
        _ => return Err(Error::format(path, "missing `value,fitness` header")),
    }
    lines
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, line)| {
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|s| s.trim().parse::<f64>().ok())
                    .ok_or_else(|| Error::format(path, format!("bad row {}: {line}", i + 2)))
            };
            let mut parts = line.split(',');
            let v = parse(parts.next())?;
            let f = parse(parts.next())?;
            if parts.next().is_some() || v.is_nan() || f.is_nan() {
                return Err(Error::format(path, format!("bad row {}: {line}", i + 2)));
            }
            Ok((v, f))
        })
        .collect()
}

/// Writes per-generation best fitness under a `generation,best_fitness` header.
pub fn write_trace_csv(path: &Path, trace: &[f64]) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "generation,best_fitness").expect("vec write");
    for (g, f) in trace.iter().enumerate() {
        writeln!(buf, "{g},{f}").expect("vec write");
    }
    write_bytes(path, &buf)
}
