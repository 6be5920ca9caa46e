//! Dense row-major `f64` matrix. The only tensor type in the crate.
//!
//! Feature matrices are stored as `D x T` (one row per channel, one column
//! per snippet), so per-channel time series are contiguous rows.

use serde::{Deserialize, Serialize};

use crate::error::NumError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor2D {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2D {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor2D {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds a tensor from row-major data, checking length and finiteness.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumError> {
        if data.len() != rows * cols {
            return Err(NumError::dimension(
                "Tensor2D::from_vec",
                format!("{rows}x{cols} needs {} values, got {}", rows * cols, data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(NumError::NonFinite {
                op: "Tensor2D::from_vec",
            });
        }
        Ok(Tensor2D { rows, cols, data })
    }

    /// Length-checked constructor without the finiteness scan, for internal
    /// hot paths. Non-finite values must stay observable in downstream
    /// losses (the training loop aborts on them with a diagnostic).
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Tensor2D { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// Copies column `c` into a fresh vector.
    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Mean over columns, one value per row.
    pub fn col_mean(&self) -> Vec<f64> {
        let t = self.cols as f64;
        (0..self.rows)
            .map(|r| self.row(r).iter().sum::<f64>() / t)
            .collect()
    }

    /// Stacks `top` above `bottom` (column counts must match).
    pub fn vstack(top: &Tensor2D, bottom: &Tensor2D) -> Result<Tensor2D, NumError> {
        if top.cols != bottom.cols {
            return Err(NumError::dimension(
                "Tensor2D::vstack",
                format!("column counts differ: {} vs {}", top.cols, bottom.cols),
            ));
        }
        let mut data = Vec::with_capacity((top.rows + bottom.rows) * top.cols);
        data.extend_from_slice(&top.data);
        data.extend_from_slice(&bottom.data);
        Ok(Tensor2D {
            rows: top.rows + bottom.rows,
            cols: top.cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}
