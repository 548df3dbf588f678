//! Dataset and spectrum files.
//!
//! Datasets are CSV with one example per row: the label (`-1` or `1`)
//! followed by the `d` feature values. A header row is optional and is
//! recognized by a non-numeric first cell. Values are written with 17
//! significant digits so a round trip is exact.

use std::fs::File;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::Dataset;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => format_err(path, format!("{other:?}")),
    }
}

pub fn read_dataset_csv(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(io_err(path))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut labels = Vec::new();
    let mut values = Vec::new();
    let mut width = None;
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_err(path, e))?;
        let first = record.get(0).unwrap_or("");
        if row == 0 && first.parse::<f64>().is_err() {
            continue;
        }
        if record.len() < 2 {
            return Err(format_err(path, format!("row {}: need a label and at least one feature", row + 1)));
        }
        match width {
            None => width = Some(record.len() - 1),
            Some(w) if w != record.len() - 1 => {
                return Err(format_err(
                    path,
                    format!("row {}: expected {} features, found {}", row + 1, w, record.len() - 1),
                ))
            }
            _ => {}
        }
        for (col, cell) in record.iter().enumerate() {
            let v: f64 = cell
                .parse()
                .map_err(|_| format_err(path, format!("row {}, column {}: `{cell}` is not a number", row + 1, col + 1)))?;
            if !v.is_finite() {
                return Err(format_err(path, format!("row {}, column {}: non-finite value", row + 1, col + 1)));
            }
            if col == 0 {
                if v != 1.0 && v != -1.0 {
                    return Err(format_err(path, format!("row {}: label must be -1 or 1, found {cell}", row + 1)));
                }
                labels.push(v);
            } else {
                values.push(v);
            }
        }
    }
    let d = width.ok_or_else(|| format_err(path, "no examples"))?;
    let n = labels.len();
    // rows are examples, so the row-major buffer is Xᵀ
    let features = DMatrix::from_row_slice(n, d, &values).transpose();
    Dataset::new(features, DVector::from_vec(labels)).map_err(|e| format_err(path, e.to_string()))
}

pub fn write_dataset_csv(path: &Path, data: &Dataset) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut writer = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    let mut header = vec!["label".to_string()];
    header.extend((1..=data.dim()).map(|j| format!("x{j}")));
    writer.write_record(&header).map_err(|e| csv_err(path, e))?;
    for i in 0..data.len() {
        let mut row = Vec::with_capacity(data.dim() + 1);
        row.push(format!("{}", data.labels()[i]));
        row.extend(data.features().column(i).iter().map(|v| format!("{v:.16e}")));
        writer.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    writer.flush().map_err(io_err(path))
}

/// Reads singular values separated by whitespace, commas or newlines.
/// Lines starting with `#` are skipped. Values are returned sorted
/// non-increasingly.
pub fn read_spectrum_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for line in text.lines().filter(|l| !l.trim_start().starts_with('#')) {
        for tok in line.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let v: f64 = tok
                .parse()
                .map_err(|_| format_err(path, format!("`{tok}` is not a number")))?;
            if !(v.is_finite() && v >= 0.0) {
                return Err(format_err(path, format!("singular values must be finite and non-negative, found {v}")));
            }
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(format_err(path, "no singular values"));
    }
    out.sort_by(|a, b| b.total_cmp(a));
    Ok(out)
}
