//! CSV input. Training files: header row, response in the first column,
//! covariates after it. Prediction files: the same covariates (matched by
//! header name) and optionally a `y_true` column.

use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::CliError;

pub const TRUTH_COLUMN: &str = "y_true";

#[derive(Debug, Clone)]
pub struct Training {
    pub response: String,
    pub covariates: Vec<String>,
    pub y: DVector<f64>,
    pub c: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct Prediction {
    pub c: DMatrix<f64>,
    pub truth: Option<Vec<f64>>,
}

struct Table {
    headers: Vec<String>,
    rows: Vec<Vec<f64>>,
}

fn read_table(path: &Path) -> Result<Table, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        // data rows are numbered from 1, after the header
        let row = record
            .iter()
            .enumerate()
            .map(|(c, cell)| match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(CliError::Input(format!(
                    "{}: row {}, column {} ({}): {cell:?} is not a finite number",
                    path.display(),
                    r + 1,
                    c + 1,
                    headers.get(c).map_or("?", String::as_str)
                ))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(Table { headers, rows })
}

fn matrix(rows: &[Vec<f64>], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| rows[i][cols[j]])
}

pub fn read_training(path: &Path) -> Result<Training, CliError> {
    let t = read_table(path)?;
    if t.headers.len() < 2 {
        return Err(CliError::Input(format!(
            "{}: need a response column and at least one covariate",
            path.display()
        )));
    }
    let n = t.rows.len();
    if n <= 3 {
        return Err(CliError::Input(format!("{}: need more than 3 observations, got {n}", path.display())));
    }
    let cov_cols: Vec<usize> = (1..t.headers.len()).collect();
    let c = matrix(&t.rows, &cov_cols);
    for (j, name) in t.headers[1..].iter().enumerate() {
        let col = c.column(j);
        if col.iter().all(|&v| v == col[0]) {
            return Err(CliError::Input(format!("{}: covariate {name:?} is constant", path.display())));
        }
    }
    let y = DVector::from_fn(n, |i, _| t.rows[i][0]);
    log::info!("{}: {n} observations, {} covariates", path.display(), cov_cols.len());
    Ok(Training {
        response: t.headers[0].clone(),
        covariates: t.headers[1..].to_vec(),
        y,
        c,
    })
}

pub fn read_prediction(path: &Path, covariates: &[String]) -> Result<Prediction, CliError> {
    let t = read_table(path)?;
    let cols = covariates
        .iter()
        .map(|name| {
            t.headers.iter().position(|h| h == name).ok_or_else(|| {
                CliError::Input(format!("{}: covariate column {name:?} is missing", path.display()))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(extra) = t
        .headers
        .iter()
        .find(|h| h.as_str() != TRUTH_COLUMN && !covariates.contains(h))
    {
        return Err(CliError::Input(format!("{}: unexpected column {extra:?}", path.display())));
    }
    if t.rows.is_empty() {
        return Err(CliError::Input(format!("{}: no observations", path.display())));
    }
    let truth = t
        .headers
        .iter()
        .position(|h| h == TRUTH_COLUMN)
        .map(|k| t.rows.iter().map(|r| r[k]).collect());
    log::info!("{}: {} observations to predict", path.display(), t.rows.len());
    Ok(Prediction {
        c: matrix(&t.rows, &cols),
        truth,
    })
}
