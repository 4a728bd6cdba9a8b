//! CSV import and export.
//!
//! | data       | header                                |
//! |------------|---------------------------------------|
//! | matrix     | `row,col,value` (zero-based indices)  |
//! | density    | `cell_index,left,right,density`       |
//! | histogram  | same as density                       |
//! | sweep      | `n,k,error_l1,residual,runtime_ms`    |
//! | map graph  | `x,y`                                 |
//!
//! Floats are written in shortest round-trip form, so every file reloads to
//! bit-identical values. Unset optional fields are empty.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::SweepRow;
use crate::ulam::{DensityVector, UlamError, UlamMatrix};

#[derive(Debug, Error)]
pub enum IoError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("record {record}: {message}")]
    Format { record: usize, message: String },
    #[error("unexpected header {found:?}, expected {expected:?}")]
    Header { found: Vec<String>, expected: &'static [&'static str] },
    #[error(transparent)]
    Ulam(#[from] UlamError),
}

pub const MATRIX_HEADER: &[&str] = &["row", "col", "value"];
pub const DENSITY_HEADER: &[&str] = &["cell_index", "left", "right", "density"];
pub const SWEEP_HEADER: &[&str] = &["n", "k", "error_l1", "residual", "runtime_ms"];
pub const GRAPH_HEADER: &[&str] = &["x", "y"];

#[derive(Debug, Serialize, Deserialize)]
struct MatrixRecord {
    row: usize,
    col: usize,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct DensityRecord {
    cell_index: usize,
    left: f64,
    right: f64,
    density: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct SweepRecord {
    n: usize,
    k: usize,
    error_l1: Option<f64>,
    residual: Option<f64>,
    runtime_ms: Option<f64>,
}

fn reader<R: Read>(r: R, expected: &'static [&'static str]) -> Result<csv::Reader<R>, IoError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != expected {
        return Err(IoError::Header { found, expected });
    }
    Ok(rdr)
}

pub fn write_matrix<W: Write>(m: &UlamMatrix, w: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    if m.nnz() == 0 {
        wtr.write_record(MATRIX_HEADER)?;
    }
    for (row, col, value) in m.triplets() {
        wtr.serialize(MatrixRecord { row, col, value })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads triplets back into a matrix. The dimension is `k` when given,
/// otherwise one more than the largest index present.
pub fn read_matrix<R: Read>(r: R, k: Option<usize>) -> Result<UlamMatrix, IoError> {
    let mut triplets = Vec::new();
    for rec in reader(r, MATRIX_HEADER)?.deserialize() {
        let MatrixRecord { row, col, value } = rec?;
        triplets.push((row, col, value));
    }
    let k = k.unwrap_or_else(|| triplets.iter().map(|&(i, j, _)| i.max(j) + 1).max().unwrap_or(0));
    Ok(UlamMatrix::from_triplets(k, triplets)?)
}

pub fn write_density<W: Write>(f: &DensityVector, w: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let grid = f.grid();
    for (cell_index, &density) in f.values().iter().enumerate() {
        let (left, right) = grid.cell(cell_index);
        wtr.serialize(DensityRecord { cell_index, left, right, density })?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a density file, checking that cells are listed in order on the
/// uniform grid they claim.
pub fn read_density<R: Read>(r: R) -> Result<DensityVector, IoError> {
    let mut records = Vec::new();
    for rec in reader(r, DENSITY_HEADER)?.deserialize() {
        records.push(rec?);
    }
    let k = records.len();
    let values = records
        .iter()
        .enumerate()
        .map(|(n, rec): (usize, &DensityRecord)| {
            let bad = |message: String| IoError::Format { record: n + 1, message };
            if rec.cell_index != n {
                return Err(bad(format!("cell_index {} out of order", rec.cell_index)));
            }
            let (left, right) = (n as f64 / k as f64, (n + 1) as f64 / k as f64);
            if (rec.left - left).abs() > 1e-12 || (rec.right - right).abs() > 1e-12 {
                return Err(bad(format!("cell [{}, {}) is not cell {n} of {k}", rec.left, rec.right)));
            }
            Ok(rec.density)
        })
        .collect::<Result<Vec<f64>, IoError>>()?;
    Ok(DensityVector::new(values)?)
}

pub fn write_sweep<W: Write>(rows: &[SweepRow], w: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    if rows.is_empty() {
        wtr.write_record(SWEEP_HEADER)?;
    }
    for r in rows {
        wtr.serialize(SweepRecord { n: r.n, k: r.k, error_l1: r.error_l1, residual: r.residual, runtime_ms: r.runtime_ms })?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_sweep<R: Read>(r: R) -> Result<Vec<SweepRow>, IoError> {
    reader(r, SWEEP_HEADER)?
        .deserialize()
        .map(|rec| {
            let SweepRecord { n, k, error_l1, residual, runtime_ms } = rec?;
            Ok(SweepRow { n, k, error_l1, residual, runtime_ms, failure: None })
        })
        .collect()
}

/// Writes sample points `(x, τ(x))` of a map.
pub fn write_graph<W: Write>(points: &[(f64, f64)], w: W) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(GRAPH_HEADER)?;
    for (x, y) in points {
        wtr.write_record([x.to_string(), y.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_graph<R: Read>(r: R) -> Result<Vec<(f64, f64)>, IoError> {
    reader(r, GRAPH_HEADER)?.deserialize().map(|rec| Ok(rec?)).collect()
}

/// Creates `path` and hands a buffered writer to `write`.
pub fn to_file<T>(
    path: impl AsRef<Path>,
    write: impl FnOnce(std::io::BufWriter<File>) -> Result<T, IoError>,
) -> Result<T, IoError> {
    write(std::io::BufWriter::new(File::create(path)?))
}

/// Opens `path` and hands a buffered reader to `read`.
pub fn from_file<T>(
    path: impl AsRef<Path>,
    read: impl FnOnce(std::io::BufReader<File>) -> Result<T, IoError>,
) -> Result<T, IoError> {
    read(std::io::BufReader::new(File::open(path)?))
}
