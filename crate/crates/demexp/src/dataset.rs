//! CSV dataset ingestion: a header row with one column named `y`; every
//! other column is numeric and becomes a predictor, in header order.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub feature_names: Vec<String>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

pub fn parse_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("cannot open {}: {e}", path.display())))?;
    parse_dataset_reader(file)
}

pub fn parse_dataset_reader<R: Read>(reader: R) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Dataset(format!("cannot read header row: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::Dataset("dataset file is empty".into()));
    }
    let y_col = headers
        .iter()
        .position(|h| h == "y")
        .ok_or_else(|| Error::Dataset("target column 'y' not found".into()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != y_col)
        .map(|(_, h)| h.clone())
        .collect();

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::Dataset(format!("row {}: {e}", idx + 2)))?;
        if record.iter().all(|f| f.is_empty()) {
            continue; // trailing blank line
        }
        if record.len() != headers.len() {
            return Err(Error::Dataset(format!(
                "row {}: expected {} fields, found {}",
                idx + 2,
                headers.len(),
                record.len()
            )));
        }
        let mut row = Vec::with_capacity(headers.len() - 1);
        for (j, field) in record.iter().enumerate() {
            let value: f64 = field.parse().map_err(|_| {
                Error::Dataset(format!(
                    "row {}: non-numeric value '{}' in column '{}'",
                    idx + 2,
                    field,
                    headers[j]
                ))
            })?;
            if !value.is_finite() {
                return Err(Error::Dataset(format!(
                    "row {} column '{}': non-finite value {}",
                    idx + 2,
                    headers[j],
                    value
                )));
            }
            if j == y_col {
                y.push(value);
            } else {
                row.push(value);
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Dataset("dataset has no data rows".into()));
    }
    let n = rows.len();
    let p = feature_names.len();
    let x = DMatrix::from_fn(n, p, |i, j| rows[i][j]);
    Ok(Dataset {
        x,
        y: DVector::from_vec(y),
        feature_names,
    })
}

pub fn write_dataset<W: Write>(dataset: &Dataset, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    header.extend(dataset.feature_names.iter().cloned());
    w.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut rec = vec![format!("{:?}", dataset.y[i])];
        rec.extend((0..dataset.p()).map(|j| format!("{:?}", dataset.x[(i, j)])));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Design matrix for models that need an intercept: returns the dataset's
/// predictors unchanged when a constant-ones column is already present,
/// otherwise prepends one. The flag reports whether a column was added.
pub fn design_with_intercept(dataset: &Dataset) -> (DMatrix<f64>, Vec<String>, bool) {
    let n = dataset.n();
    let has_ones = (0..dataset.p()).any(|j| (0..n).all(|i| dataset.x[(i, j)] == 1.0));
    if has_ones {
        return (dataset.x.clone(), dataset.feature_names.clone(), false);
    }
    let mut x = DMatrix::from_element(n, dataset.p() + 1, 1.0);
    x.view_mut((0, 1), (n, dataset.p())).copy_from(&dataset.x);
    let mut names = vec!["intercept".to_string()];
    names.extend(dataset.feature_names.iter().cloned());
    (x, names, true)
}

/// Flat CSV of per-draw function evaluations (`mu_0..mu_{N-1}` header, one
/// row per draw).
pub fn parse_mu_csv(path: &Path) -> Result<Vec<DVector<f64>>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Dataset(format!("cannot open {}: {e}", path.display())))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let n = rdr.headers()?.len();
    let mut draws = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let record = record?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if record.len() != n {
            return Err(Error::Dataset(format!(
                "mu row {}: expected {n} fields, found {}",
                idx + 2,
                record.len()
            )));
        }
        let vals: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|e| Error::Dataset(format!("mu row {}: {e}", idx + 2)))?;
        draws.push(DVector::from_vec(vals));
    }
    if draws.is_empty() {
        return Err(Error::Dataset("mu file has no rows".into()));
    }
    Ok(draws)
}
