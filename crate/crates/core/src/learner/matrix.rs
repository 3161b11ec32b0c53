use serde::{Deserialize, Serialize};

use super::math::{sum_normalize_in_place, ROW_SUM_TOLERANCE};
use crate::error::{Error, Result};

/// Dense row-major matrix: rows are parent groups, columns are atomic task types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::Shape {
                    expected: cols,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        self.data[i * self.cols + j] = value;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

/// Per-group resource weights for one resource of one child. Every row is a
/// probability vector over task types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupWeights(Matrix);

impl GroupWeights {
    /// Every row starts at `1/n`.
    pub fn uniform(groups: usize, task_types: usize) -> Self {
        Self(Matrix::filled(groups, task_types, 1.0 / task_types as f64))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = Matrix::from_rows(rows)?;
        for row in m.iter_rows() {
            if let Some(index) = row.iter().position(|x| x.is_nan() || *x < 0.0) {
                return Err(Error::NegativeEntry {
                    index,
                    value: row[index],
                });
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::RowNotNormalized { sum });
            }
        }
        Ok(Self(m))
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn groups(&self) -> usize {
        self.0.rows()
    }

    pub fn task_types(&self) -> usize {
        self.0.cols()
    }

    /// `W <- W + scale * E`, then sum-normalise every row.
    pub(crate) fn apply_trace(&mut self, trace: &EligibilityTrace, scale: f64) {
        debug_assert_eq!(self.0.as_slice().len(), trace.0.as_slice().len());
        if scale != 0.0 {
            for (w, e) in self.0.data.iter_mut().zip(&trace.0.data) {
                *w += scale * e;
            }
        }
        for i in 0..self.0.rows {
            sum_normalize_in_place(self.0.row_mut(i));
        }
    }
}

/// Replacement eligibility traces, same shape as [`GroupWeights`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligibilityTrace(Matrix);

impl EligibilityTrace {
    pub fn zeros(groups: usize, task_types: usize) -> Self {
        Self(Matrix::filled(groups, task_types, 0.0))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Matrix::from_rows(rows).map(Self)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    /// Sets the `(group, task_type)` cell to 1 and decays every other positive cell by `gamma`.
    pub fn touch(&mut self, group: usize, task_type: usize, gamma: f64) {
        let hit = group * self.0.cols + task_type;
        for (k, e) in self.0.data.iter_mut().enumerate() {
            if k == hit {
                *e = 1.0;
            } else if *e > 0.0 {
                *e *= gamma;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trace_first_touch() {
        let mut e = EligibilityTrace::zeros(2, 2);
        e.touch(0, 1, 0.9);
        assert_eq!(e.matrix().to_rows(), vec![vec![0.0, 1.0], vec![0.0, 0.0]]);
    }

    #[test]
    fn trace_replaces_and_decays() {
        let mut e = EligibilityTrace::from_rows(&[vec![0.0, 0.0], vec![0.0, 0.5]]).unwrap();
        e.touch(0, 0, 0.8);
        assert_eq!(e.matrix().to_rows(), vec![vec![1.0, 0.0], vec![0.0, 0.4]]);
    }

    #[test]
    fn trace_untouched_cell_decays_geometrically() {
        let gamma = 0.9;
        let mut e = EligibilityTrace::zeros(2, 3);
        e.touch(1, 2, gamma);
        for k in 1..=25 {
            e.touch(k % 2, 0, gamma);
            let want = gamma.powi(k as i32);
            assert!((e.matrix().get(1, 2) - want).abs() < 1e-12);
        }
    }

    #[test]
    fn weights_reject_bad_rows() {
        assert!(GroupWeights::from_rows(&[vec![0.5, 0.6]]).is_err());
        assert!(GroupWeights::from_rows(&[vec![1.5, -0.5]]).is_err());
        assert!(GroupWeights::from_rows(&[vec![0.5, 0.5], vec![1.0]]).is_err());
        assert!(GroupWeights::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0]]).is_ok());
    }

    #[test]
    fn uniform_weights() {
        let w = GroupWeights::uniform(3, 4);
        assert!(w.matrix().as_slice().iter().all(|x| *x == 0.25));
    }
}
