//! Feature matrices the classifiers train on.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use super::AnalysisError;
use crate::rng::mix64;

/// Row access shared by dense and sparse matrices.
pub trait Design: Sized + Clone {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn dot_row(&self, i: usize, w: &[f64]) -> f64;
    /// `g += c * row_i`
    fn add_row(&self, i: usize, c: f64, g: &mut [f64]);
    fn select(&self, idx: &[usize]) -> Self;
    fn fit_scaler(&self) -> Scaler;
    fn scaled(&self, s: &Scaler) -> Self;
    fn check_finite(&self) -> Result<(), AnalysisError>;
}

/// Per-column affine rescaling learned on training data.
#[derive(Clone, Debug, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Scaler {
    /// `(x - mean) / std`; constant columns keep std 1.
    Standard { mean: Vec<f64>, std: Vec<f64> },
    /// `x / max|x|`, which keeps sparse rows sparse.
    MaxAbs { scale: Vec<f64> },
}

/// Row-major dense matrix.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Matrix {
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    /// Panics if `data.len()` is not a multiple of `cols`.
    pub fn new(cols: usize, data: Vec<f64>) -> Self {
        assert!(cols > 0 && data.len() % cols == 0, "data length {} not a multiple of {cols}", data.len());
        Matrix { cols, data }
    }

    /// Panics on ragged rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Matrix { cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.data.iter().skip(j).step_by(self.cols.max(1)).copied()
    }

    /// Concatenates the columns of matrices with equal row counts.
    pub fn hstack(parts: &[&Matrix]) -> Matrix {
        let rows = parts.first().map_or(0, |m| m.rows());
        let cols = parts.iter().map(|m| m.cols).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for m in parts {
                assert_eq!(m.rows(), rows, "row count mismatch");
                data.extend_from_slice(m.row(i));
            }
        }
        Matrix { cols, data }
    }
}

impl Design for Matrix {
    fn rows(&self) -> usize {
        if self.cols == 0 {
            0
        } else {
            self.data.len() / self.cols
        }
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn dot_row(&self, i: usize, w: &[f64]) -> f64 {
        self.row(i).iter().zip(w).map(|(a, b)| a * b).sum()
    }

    fn add_row(&self, i: usize, c: f64, g: &mut [f64]) {
        g.iter_mut().zip(self.row(i)).for_each(|(gi, x)| *gi += c * x);
    }

    fn select(&self, idx: &[usize]) -> Self {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix { cols: self.cols, data }
    }

    fn fit_scaler(&self) -> Scaler {
        let n = self.rows().max(1) as f64;
        let mut mean = alloc::vec![0.0; self.cols];
        let mut std = alloc::vec![0.0; self.cols];
        for j in 0..self.cols {
            let m = self.column(j).sum::<f64>() / n;
            let var = self.column(j).map(|x| (x - m) * (x - m)).sum::<f64>() / n;
            mean[j] = m;
            std[j] = if var > 1e-24 { libm::sqrt(var) } else { 1.0 };
        }
        Scaler::Standard { mean, std }
    }

    fn scaled(&self, s: &Scaler) -> Self {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.cols.max(1)) {
            match s {
                Scaler::Standard { mean, std } => {
                    for ((x, m), sd) in row.iter_mut().zip(mean).zip(std) {
                        *x = (*x - m) / sd;
                    }
                }
                Scaler::MaxAbs { scale } => row.iter_mut().zip(scale).for_each(|(x, s)| *x /= s),
            }
        }
        out
    }

    fn check_finite(&self) -> Result<(), AnalysisError> {
        match self.data.iter().position(|x| !x.is_finite()) {
            Some(p) => Err(AnalysisError::NonFinite { row: p / self.cols }),
            None => Ok(()),
        }
    }
}

/// Sorted `(column, value)` pairs.
pub type SparseRow = Vec<(u32, f64)>;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SparseMatrix {
    cols: usize,
    rows: Vec<SparseRow>,
}

impl SparseMatrix {
    /// Panics if a row has a column index out of range.
    pub fn new(cols: usize, rows: Vec<SparseRow>) -> Self {
        assert!(rows.iter().flatten().all(|&(j, _)| (j as usize) < cols), "column out of range");
        SparseMatrix { cols, rows }
    }

    pub fn row(&self, i: usize) -> &[(u32, f64)] {
        &self.rows[i]
    }
}

impl Design for SparseMatrix {
    fn rows(&self) -> usize {
        self.rows.len()
    }

    fn cols(&self) -> usize {
        self.cols
    }

    fn dot_row(&self, i: usize, w: &[f64]) -> f64 {
        self.rows[i].iter().map(|&(j, x)| w[j as usize] * x).sum()
    }

    fn add_row(&self, i: usize, c: f64, g: &mut [f64]) {
        for &(j, x) in &self.rows[i] {
            g[j as usize] += c * x;
        }
    }

    fn select(&self, idx: &[usize]) -> Self {
        SparseMatrix {
            cols: self.cols,
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
        }
    }

    fn fit_scaler(&self) -> Scaler {
        let mut scale = alloc::vec![0.0f64; self.cols];
        for &(j, x) in self.rows.iter().flatten() {
            scale[j as usize] = scale[j as usize].max(x.abs());
        }
        scale.iter_mut().filter(|s| **s == 0.0).for_each(|s| *s = 1.0);
        Scaler::MaxAbs { scale }
    }

    /// Only [`Scaler::MaxAbs`] keeps rows sparse; a standard scaler is
    /// applied to the stored entries only.
    fn scaled(&self, s: &Scaler) -> Self {
        let mut out = self.clone();
        for &mut (j, ref mut x) in out.rows.iter_mut().flatten() {
            match s {
                Scaler::MaxAbs { scale } => *x /= scale[j as usize],
                Scaler::Standard { mean, std } => *x = (*x - mean[j as usize]) / std[j as usize],
            }
        }
        out
    }

    fn check_finite(&self) -> Result<(), AnalysisError> {
        match self.rows.iter().position(|r| r.iter().any(|(_, x)| !x.is_finite())) {
            Some(row) => Err(AnalysisError::NonFinite { row }),
            None => Ok(()),
        }
    }
}

pub const NGRAM_DIMS: usize = 1 << 15;

/// Hashed counts of all token n-grams with `1 <= n <= max_n`.
pub fn ngram_features(tokens: &[u32], max_n: usize, dims: usize) -> SparseRow {
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    for n in 1..=max_n {
        for w in tokens.windows(n) {
            let mut h = mix64(n as u64);
            for &t in w {
                h = mix64(h ^ t as u64);
            }
            *counts.entry((h % dims as u64) as u32).or_insert(0.0) += 1.0;
        }
    }
    counts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_scaler() {
        let m = Matrix::from_rows(&[[1.0, 5.0], [3.0, 5.0]]);
        let s = m.fit_scaler();
        let z = m.scaled(&s);
        assert_eq!(z.row(0), [-1.0, 0.0]);
        assert_eq!(z.row(1), [1.0, 0.0]);
    }

    #[test]
    fn hstack_and_select() {
        let a = Matrix::from_rows(&[[1.0], [2.0]]);
        let b = Matrix::from_rows(&[[3.0, 4.0], [5.0, 6.0]]);
        let c = Matrix::hstack(&[&a, &b]);
        assert_eq!(c.select(&[1]).row(0), [2.0, 5.0, 6.0]);
    }

    #[test]
    fn ngram_counts() {
        let r = ngram_features(&[1, 2, 1, 2], 3, NGRAM_DIMS);
        let total: f64 = r.iter().map(|x| x.1).sum();
        assert_eq!(total, 4.0 + 3.0 + 2.0);
        assert!(r.windows(2).all(|w| w[0].0 < w[1].0));
        let mx = SparseMatrix::new(NGRAM_DIMS, alloc::vec![r]);
        let s = mx.fit_scaler();
        assert!(mx.scaled(&s).row(0).iter().all(|&(_, x)| x == 1.0));
    }
}
