//! CSV ingestion and input digests.
//!
//! One sample per row, comma separated. A first row containing any
//! non-numeric field is taken as a header and skipped. Blank lines are
//! ignored. Rows and columns in diagnostics are 1-based lines of the
//! original text.

use std::fs;
use std::path::Path;

use credal_cert::FeatureMatrix;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Raw bytes of an input file plus their SHA-256.
pub struct Loaded {
    pub text: String,
    pub digest: String,
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn load(path: &Path) -> CliResult<Loaded> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    let digest = digest(&bytes);
    let text = String::from_utf8(bytes)
        .map_err(|e| CliError::input(path.display().to_string(), e.to_string()))?;
    Ok(Loaded { text, digest })
}

/// Parsed numeric rows with the text line each came from.
struct Table {
    rows: Vec<Vec<f64>>,
    lines: Vec<usize>,
}

fn is_header(record: &csv::StringRecord) -> bool {
    record.iter().any(|f| f.trim().parse::<f64>().is_err())
}

fn parse_table(text: &str, origin: &str, line_offset: usize) -> CliResult<Table> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let row = e.position().map_or(0, |p| p.line() as usize) + line_offset;
            CliError::Parse {
                origin: origin.to_string(),
                row,
                column: 0,
                message: e.to_string(),
            }
        })?;
        let line = record.position().map_or(idx + 1, |p| p.line() as usize) + line_offset;
        if idx == 0 && is_header(&record) {
            continue;
        }
        let mut values = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let parse_err = |message: String| CliError::Parse {
                origin: origin.to_string(),
                row: line,
                column: col + 1,
                message,
            };
            if field.is_empty() {
                return Err(parse_err("empty field".into()));
            }
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(format!("`{field}` is not a number")))?;
            if !v.is_finite() {
                return Err(parse_err(format!("`{field}` is not finite")));
            }
            values.push(v);
        }
        rows.push(values);
        lines.push(line);
    }
    Ok(Table { rows, lines })
}

/// Parses a feature table. `line_offset` shifts reported row numbers, for
/// text cut out of a larger stream.
pub fn parse_features(text: &str, origin: &str, line_offset: usize) -> CliResult<FeatureMatrix> {
    let table = parse_table(text, origin, line_offset)?;
    let Some(first) = table.rows.first() else {
        return Err(CliError::input(origin, "no data rows"));
    };
    let d = first.len();
    let mut data = Vec::with_capacity(table.rows.len() * d);
    for (row, line) in table.rows.iter().zip(&table.lines) {
        if row.len() != d {
            return Err(CliError::Parse {
                origin: origin.to_string(),
                row: *line,
                column: row.len().min(d) + 1,
                message: format!("expected {d} columns, found {}", row.len()),
            });
        }
        data.extend_from_slice(row);
    }
    Ok(FeatureMatrix::new(data, table.rows.len(), d)?)
}

/// Parses a single-column loss file.
pub fn parse_losses(text: &str, origin: &str) -> CliResult<Vec<f64>> {
    let table = parse_table(text, origin, 0)?;
    if table.rows.is_empty() {
        return Err(CliError::input(origin, "no data rows"));
    }
    table
        .rows
        .into_iter()
        .zip(table.lines)
        .map(|(row, line)| match row.as_slice() {
            [v] => Ok(*v),
            _ => Err(CliError::Parse {
                origin: origin.to_string(),
                row: line,
                column: row.len().min(1) + 1,
                message: format!("expected exactly one loss column, found {}", row.len()),
            }),
        })
        .collect()
}

pub fn read_features(path: &Path) -> CliResult<(FeatureMatrix, String)> {
    let loaded = load(path)?;
    let x = parse_features(&loaded.text, &path.display().to_string(), 0)?;
    Ok((x, loaded.digest))
}

pub fn read_losses(path: &Path) -> CliResult<(Vec<f64>, String)> {
    let loaded = load(path)?;
    let v = parse_losses(&loaded.text, &path.display().to_string())?;
    Ok((v, loaded.digest))
}
