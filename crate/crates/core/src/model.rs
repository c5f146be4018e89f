//! Regression data and the index sets that define candidate models.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response vector and design matrix. Column 0 of the design is the
/// intercept (all ones); columns `1..d` hold principal component scores.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DVector<f64>, x: DMatrix<f64>) -> Result<Self> {
        if y.len() != x.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries but design has {} rows",
                y.len(),
                x.nrows()
            )));
        }
        if x.ncols() == 0 || x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidInput(
                "first design column must be the intercept (all ones)".into(),
            ));
        }
        Ok(Self { y, x })
    }

    /// Builds a dataset by grafting an intercept column onto `scores`.
    pub fn from_scores(y: DVector<f64>, scores: &DMatrix<f64>) -> Result<Self> {
        let n = scores.nrows();
        let mut x = DMatrix::from_element(n, scores.ncols() + 1, 1.0);
        x.columns_mut(1, scores.ncols()).copy_from(scores);
        Self::new(y, x)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    /// Design restricted to the columns of `model`.
    pub fn design(&self, model: &ModelSpec) -> DMatrix<f64> {
        self.x.select_columns(model.columns())
    }
}

/// Index set `I_k` of design columns used by one model. Always contains the
/// intercept column 0 in first position.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModelSpec {
    columns: Vec<usize>,
}

impl ModelSpec {
    pub fn new(columns: Vec<usize>) -> Result<Self> {
        if columns.first() != Some(&0) {
            return Err(Error::InvalidInput(format!(
                "model {columns:?} must start with the intercept column 0"
            )));
        }
        let mut seen = columns.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "model {columns:?} repeats a column"
            )));
        }
        Ok(Self { columns })
    }

    pub fn intercept() -> Self {
        Self { columns: vec![0] }
    }

    pub fn columns(&self) -> &[usize] {
        &self.columns
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Model with `column` appended as its last coefficient.
    pub fn extended(&self, column: usize) -> Result<Self> {
        let mut columns = self.columns.clone();
        columns.push(column);
        Self::new(columns)
    }

    pub fn check_against(&self, data: &Dataset) -> Result<()> {
        if let Some(&c) = self.columns.iter().find(|&&c| c >= data.d()) {
            return Err(Error::DimensionMismatch(format!(
                "model uses column {c} but the design has {} columns",
                data.d()
            )));
        }
        Ok(())
    }
}

/// Ordered list of candidate models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpace {
    models: Vec<ModelSpec>,
}

impl ModelSpace {
    pub fn new(models: Vec<ModelSpec>) -> Result<Self> {
        if models.is_empty() {
            return Err(Error::InvalidInput("model space is empty".into()));
        }
        Ok(Self { models })
    }

    /// `{0}, {0, j1}, {0, j1, j2}, ...` in the given column order.
    pub fn nested(retained: &[usize]) -> Result<Self> {
        let mut models = vec![ModelSpec::intercept()];
        for &j in retained {
            let next = models.last().unwrap().extended(j)?;
            models.push(next);
        }
        Ok(Self { models })
    }

    pub fn models(&self) -> &[ModelSpec] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn get(&self, k: usize) -> &ModelSpec {
        &self.models[k]
    }

    pub fn max_dim(&self) -> usize {
        self.models.iter().map(ModelSpec::dim).max().unwrap_or(0)
    }

    /// True when every model extends its predecessor by exactly one
    /// trailing column.
    pub fn is_nested(&self) -> bool {
        self.models[0].columns == [0]
            && self.models.windows(2).all(|w| {
                w[1].dim() == w[0].dim() + 1 && w[1].columns.starts_with(&w[0].columns)
            })
    }

    pub fn check_against(&self, data: &Dataset) -> Result<()> {
        self.models.iter().try_for_each(|m| m.check_against(data))
    }
}
