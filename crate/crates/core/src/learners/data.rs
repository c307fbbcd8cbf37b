use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InconsistentData(format!("{} values for a {rows} x {cols} matrix", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InconsistentData("ragged rows".into()));
        }
        Ok(Self { rows: rows.len(), cols, data: rows.concat() })
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.cols..(k + 1) * self.cols]
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.cols + j]
    }

    /// Copy keeping columns `cols` in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(self.rows * cols.len());
        for k in 0..self.rows {
            let r = self.row(k);
            data.extend(cols.iter().map(|&j| r[j]));
        }
        Matrix { rows: self.rows, cols: cols.len(), data }
    }

    /// Copy keeping rows `idx` in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &k in idx {
            data.extend_from_slice(self.row(k));
        }
        Matrix { rows: idx.len(), cols: self.cols, data }
    }
}

/// Checks labels against a class count and requires two distinct classes.
pub fn check_labels(y: &[usize], rows: usize, classes: usize) -> Result<()> {
    if y.len() != rows {
        return Err(Error::InconsistentData(format!("{} labels for {rows} rows", y.len())));
    }
    if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
        return Err(Error::InconsistentData(format!("label {bad} out of range for {classes} classes")));
    }
    let first = y.first().copied();
    if y.iter().all(|&c| Some(c) == first) {
        return Err(Error::Degenerate("training data holds a single class".into()));
    }
    Ok(())
}

/// Index of the largest count, ties to the smaller index.
pub fn argmax_count(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &v) in counts.iter().enumerate() {
        if v > counts[best] {
            best = c;
        }
    }
    best
}
