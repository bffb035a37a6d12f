use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::dataset::Dataset;
use crate::error::{Error, Result};

/// Column roles of an input CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvSchema {
    pub y_col: String,
    pub t_col: Option<String>,
    pub x_cols: Vec<String>,
}

/// Reads a headed CSV into a [`Dataset`]. Errors name the 1-based data row
/// and the column of the offending cell.
pub fn ingest_csv(path: &Path, schema: &CsvSchema) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_csv(file, schema)
}

pub fn read_csv(reader: impl std::io::Read, schema: &CsvSchema) -> Result<Dataset> {
    if schema.x_cols.is_empty() {
        return Err(Error::input("no covariate columns given"));
    }
    let mut r = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = r
        .headers()
        .map_err(|e| Error::input(format!("cannot read CSV header: {e}")))?
        .iter()
        .map(String::from)
        .collect();
    if header.iter().all(|h| h.is_empty()) {
        return Err(Error::input("CSV file is empty"));
    }
    let find = |name: &str| -> Result<usize> {
        header.iter().position(|h| h == name).ok_or_else(|| {
            Error::input(format!("column `{name}` not found; header is: {}", header.join(", ")))
        })
    };
    let y_idx = find(&schema.y_col)?;
    let t_idx = schema.t_col.as_deref().map(find).transpose()?;
    let x_idx = schema.x_cols.iter().map(|c| find(c)).collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut t = Vec::new();
    let mut x = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::input(format!("row {row}: {e}")))?;
        let cell = |idx: usize| -> Result<f64> {
            let raw = rec.get(idx).unwrap_or("");
            let v: f64 = raw.parse().map_err(|_| {
                Error::input(format!("row {row}, column {}: not a number: {raw:?}", header[idx]))
            })?;
            if !v.is_finite() {
                return Err(Error::input(format!("row {row}, column {}: non-finite value", header[idx])));
            }
            Ok(v)
        };
        y.push(cell(y_idx)?);
        if let Some(ti) = t_idx {
            t.push(cell(ti)?);
        }
        for &xi in &x_idx {
            x.push(cell(xi)?);
        }
    }
    let n = y.len();
    if n == 0 {
        return Err(Error::input("CSV file has a header but no data rows"));
    }
    Dataset::with_names(
        DMatrix::from_row_slice(n, x_idx.len(), &x),
        DVector::from_vec(y),
        t_idx.map(|_| DVector::from_vec(t)),
        schema.x_cols.clone(),
    )
}
