//! Symmetric positive definite banded Cholesky factorization.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix stored row by row: row `i` holds columns
/// `i - bw ..= i` (entries left of column 0 are padding).
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandMatrix {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn size(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + (self.bw + j - i)
    }

    /// Add to entry `(i, j)` of the lower triangle (`j <= i`).
    #[inline]
    pub fn add_lower(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// In-place `L Lᵀ` factorization. Fails with the offending row index when
    /// a pivot is not positive relative to its original diagonal.
    pub fn factorize(mut self) -> std::result::Result<BandCholesky, usize> {
        let (n, bw) = (self.n, self.bw);
        let w = bw + 1;
        for j in 0..n {
            let row_j = j * w;
            let start_j = j.saturating_sub(bw);
            // diagonal
            let diag_orig = self.data[row_j + bw];
            let mut s = diag_orig;
            for k in start_j..j {
                let l = self.data[row_j + bw + k - j];
                s -= l * l;
            }
            if !(s > 1e-13 * diag_orig.abs()) || !s.is_finite() {
                return Err(j);
            }
            let d = s.sqrt();
            self.data[row_j + bw] = d;
            // column j below the diagonal
            for i in j + 1..n.min(j + bw + 1) {
                let row_i = i * w;
                let start = i.saturating_sub(bw).max(start_j);
                let mut s = self.data[row_i + bw + j - i];
                let a = &self.data[row_i + bw + start - i..row_i + bw + j - i];
                let b = &self.data[row_j + bw + start - j..row_j + bw];
                for (x, y) in a.iter().zip(b) {
                    s -= x * y;
                }
                self.data[row_i + bw + j - i] = s / d;
            }
        }
        Ok(BandCholesky { l: self })
    }
}

#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let (n, bw) = (self.l.n, self.l.bw);
        let w = bw + 1;
        let data = &self.l.data;
        // L y = b
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let row = i * w;
            let mut s = b[i];
            for k in start..i {
                s -= data[row + bw + k - i] * b[k];
            }
            b[i] = s / data[row + bw];
        }
        // Lᵀ x = y
        for i in (0..n).rev() {
            let xi = b[i] / data[i * w + bw];
            b[i] = xi;
            let start = i.saturating_sub(bw);
            let row = i * w;
            for k in start..i {
                b[k] -= data[row + bw + k - i] * xi;
            }
        }
    }
}

pub(crate) fn singular(dofs: Vec<usize>) -> Error {
    Error::Singular { dofs }
}

pub(crate) fn check_finite(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}
