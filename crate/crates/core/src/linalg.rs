//! Dense square matrices small enough (P x P) that a hand-written Cholesky is
//! the whole story.

use alloc::vec;
use alloc::vec::Vec;

use crate::math::sqrt;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    dim: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * dim],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let mut m = Self::zeros(diag.len());
        for (i, &d) in diag.iter().enumerate() {
            m[(i, i)] = d;
        }
        m
    }

    /// Panics if `data.len() != dim * dim`.
    pub fn from_row_major(dim: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), dim * dim, "matrix data has wrong length");
        Self { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.dim).map(|i| self[(i, i)]).collect()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            dim: self.dim,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Largest absolute difference between `self` and its transpose.
    pub fn asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.dim {
            for j in 0..i {
                worst = worst.max((self[(i, j)] - self[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim)
            .map(|i| {
                self.data[i * self.dim..(i + 1) * self.dim]
                    .iter()
                    .zip(v)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `v' M v`.
    pub fn quad_form(&self, v: &[f64]) -> f64 {
        self.mul_vec(v).iter().zip(v).map(|(a, b)| a * b).sum()
    }

    pub fn frobenius_distance(&self, other: &Matrix) -> f64 {
        sqrt(self.data.iter().zip(&other.data).map(|(a, b)| (a - b) * (a - b)).sum())
    }

    pub fn frobenius_norm(&self) -> f64 {
        sqrt(self.data.iter().map(|a| a * a).sum())
    }

    /// Cholesky factor `L` with `L L' = self`. Fails at the first column whose
    /// pivot is not positive relative to `rel_tol` times its original diagonal.
    pub fn cholesky(&self, rel_tol: f64) -> Result<Cholesky, NotPositiveDefinite> {
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for j in 0..n {
            let mut pivot = self[(j, j)];
            for m in 0..j {
                pivot -= l[j * n + m] * l[j * n + m];
            }
            let scale = self[(j, j)].abs().max(f64::MIN_POSITIVE);
            if !(pivot > rel_tol * scale) || !pivot.is_finite() {
                return Err(NotPositiveDefinite { column: j });
            }
            let d = sqrt(pivot);
            l[j * n + j] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for m in 0..j {
                    s -= l[i * n + m] * l[j * n + m];
                }
                l[i * n + j] = s / d;
            }
        }
        Ok(Cholesky { dim: n, lower: l })
    }
}

impl core::ops::Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.dim + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.dim + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NotPositiveDefinite {
    pub column: usize,
}

/// Lower-triangular Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Cholesky {
    dim: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L z`, used to turn iid standard normals into correlated draws.
    pub fn lower_mul(&self, z: &[f64]) -> Vec<f64> {
        let n = self.dim;
        (0..n)
            .map(|i| (0..=i).map(|j| self.lower[i * n + j] * z[j]).sum())
            .collect()
    }

    /// Solves `A x = b` for the factored `A`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.dim;
        let mut y = b.to_vec();
        for i in 0..n {
            for j in 0..i {
                y[i] -= self.lower[i * n + j] * y[j];
            }
            y[i] /= self.lower[i * n + i];
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                y[i] -= self.lower[j * n + i] * y[j];
            }
            y[i] /= self.lower[i * n + i];
        }
        y
    }

    pub fn inverse(&self) -> Matrix {
        let n = self.dim;
        let mut inv = Matrix::zeros(n);
        let mut e = vec![0.0; n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            let col = self.solve(&e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        // symmetrize away round-off
        for i in 0..n {
            for j in 0..i {
                let m = 0.5 * (inv[(i, j)] + inv[(j, i)]);
                inv[(i, j)] = m;
                inv[(j, i)] = m;
            }
        }
        inv
    }
}
