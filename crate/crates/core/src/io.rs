//! Matrix file I/O.
//!
//! Two formats:
//! - CSV: comma-separated, one row per line, '.' decimal, no header.
//! - RAWF64: magic bytes "CDL1", two u64 little-endian dimensions
//!   (rows, cols), then rows*cols little-endian IEEE-754 doubles in
//!   column-major order. Bit-exact persistence for dictionaries and
//!   histories.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const RAWF64_MAGIC: &[u8; 4] = b"CDL1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Csv,
    RawF64,
}

impl MatrixFormat {
    /// CSV for a ".csv" extension, RAWF64 otherwise.
    pub fn for_path(path: &Path) -> MatrixFormat {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::RawF64,
        }
    }
}

/// Loads a matrix, rejecting non-finite entries and inconsistent shapes.
pub fn load_matrix(path: &Path, format: MatrixFormat) -> Result<DMatrix<f64>> {
    match format {
        MatrixFormat::Csv => load_csv(path),
        MatrixFormat::RawF64 => load_rawf64(path),
    }
}

/// Saves a non-empty matrix. RAWF64 round-trips bit-exactly; CSV writes 17
/// significant digits, which also parses back to the identical double.
pub fn save_matrix(matrix: &DMatrix<f64>, path: &Path, format: MatrixFormat) -> Result<()> {
    if matrix.nrows() == 0 || matrix.ncols() == 0 {
        return Err(Error::InvalidInput(format!(
            "refusing to save empty {}x{} matrix",
            matrix.nrows(),
            matrix.ncols()
        )));
    }
    match format {
        MatrixFormat::Csv => save_csv(matrix, path),
        MatrixFormat::RawF64 => save_rawf64(matrix, path),
    }
}

fn load_csv(path: &Path) -> Result<DMatrix<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for (col, field) in line.split(',').enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{}: line {}, field {}: cannot parse {:?} as a number",
                    path.display(),
                    lineno + 1,
                    col + 1,
                    field.trim()
                ))
            })?;
            if !v.is_finite() {
                return Err(Error::NonFinite(format!(
                    "{}: line {}, field {}: non-finite entry",
                    path.display(),
                    lineno + 1,
                    col + 1
                )));
            }
            row.push(v);
        }
        if let Some(first) = rows.first() {
            if row.len() != first.len() {
                return Err(Error::Parse(format!(
                    "{}: line {} has {} fields, expected {}",
                    path.display(),
                    lineno + 1,
                    row.len(),
                    first.len()
                )));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(Error::Parse(format!("{}: no data rows", path.display())));
    }
    let (nr, nc) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(nr, nc, |i, j| rows[i][j]))
}

fn save_csv(matrix: &DMatrix<f64>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for i in 0..matrix.nrows() {
        for j in 0..matrix.ncols() {
            if j > 0 {
                write!(w, ",").map_err(|e| Error::io(path, e))?;
            }
            // 17 significant digits: enough to reparse the exact double.
            write!(w, "{:.16e}", matrix[(i, j)]).map_err(|e| Error::io(path, e))?;
        }
        writeln!(w).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn load_rawf64(path: &Path) -> Result<DMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 20 || &bytes[0..4] != RAWF64_MAGIC {
        return Err(Error::Parse(format!(
            "{}: not a RAWF64 file (bad magic or truncated header)",
            path.display()
        )));
    }
    let rows = u64::from_le_bytes(bytes[4..12].try_into().unwrap()) as usize;
    let cols = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    if rows == 0 || cols == 0 {
        return Err(Error::Parse(format!(
            "{}: degenerate dimensions {}x{}",
            path.display(),
            rows,
            cols
        )));
    }
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(8))
        .and_then(|n| n.checked_add(20))
        .ok_or_else(|| Error::Parse(format!("{}: dimensions overflow", path.display())))?;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "{}: header says {}x{} ({} payload bytes) but file has {}",
            path.display(),
            rows,
            cols,
            expected - 20,
            bytes.len() - 20.min(bytes.len())
        )));
    }
    let mut data = Vec::with_capacity(rows * cols);
    for chunk in bytes[20..].chunks_exact(8) {
        let v = f64::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::NonFinite(format!(
                "{}: non-finite entry in payload",
                path.display()
            )));
        }
        data.push(v);
    }
    // Column-major payload matches DMatrix storage order.
    Ok(DMatrix::from_column_slice(rows, cols, &data))
}

fn save_rawf64(matrix: &DMatrix<f64>, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(RAWF64_MAGIC).map_err(|e| Error::io(path, e))?;
    w.write_all(&(matrix.nrows() as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.write_all(&(matrix.ncols() as u64).to_le_bytes())
        .map_err(|e| Error::io(path, e))?;
    for v in matrix.iter() {
        // DMatrix iterates column-major.
        w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
