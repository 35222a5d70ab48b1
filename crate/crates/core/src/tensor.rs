//! Tensor-train residual rate and the deterministic rate arithmetic shared by
//! the sampler and post-processing.
//!
//! Cells are stored row-major with `k` fastest: `cell = (i * T + t) * K + k`.
//! `core2` is stored with `h2` fastest so that `core2[t] * core3[k]` is a
//! contiguous matrix-vector product.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math::exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub n: usize,
    pub t: usize,
    pub k: usize,
}

impl Dims {
    pub const fn new(n: usize, t: usize, k: usize) -> Self {
        Self { n, t, k }
    }

    pub const fn cells(&self) -> usize {
        self.n * self.t * self.k
    }

    #[inline]
    pub const fn cell(&self, i: usize, t: usize, k: usize) -> usize {
        (i * self.t + t) * self.k + k
    }

    #[inline]
    pub const fn unravel(&self, cell: usize) -> (usize, usize, usize) {
        let k = cell % self.k;
        let rest = cell / self.k;
        (rest / self.t, rest % self.t, k)
    }

    pub fn check(&self, i: usize, t: usize, k: usize) -> Result<()> {
        for (axis, index, len) in [("i", i, self.n), ("t", t, self.t), ("k", k, self.k)] {
            if index >= len {
                return Err(Error::IndexOutOfRange { axis, index, len });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Ranks {
    pub h1: usize,
    pub h2: usize,
}

impl Ranks {
    pub const fn new(h1: usize, h2: usize) -> Self {
        Self { h1, h2 }
    }

    pub const fn components(&self) -> usize {
        self.h1 * self.h2
    }
}

/// Number of free parameters in the tensor-train representation,
/// `N*H1 + T*H1*H2 + K*H2`.
pub const fn param_count(dims: Dims, ranks: Ranks) -> usize {
    dims.n * ranks.h1 + dims.t * ranks.h1 * ranks.h2 + dims.k * ranks.h2
}

/// Observed counts on the full `N x T x K` grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountTensor {
    dims: Dims,
    counts: Vec<u64>,
}

impl CountTensor {
    pub fn new(dims: Dims, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != dims.cells() {
            return Err(Error::Shape {
                what: "counts",
                expected: dims.cells(),
                found: counts.len(),
            });
        }
        Ok(Self { dims, counts })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn as_slice(&self) -> &[u64] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, i: usize, t: usize, k: usize) -> u64 {
        self.counts[self.dims.cell(i, t, k)]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Per-cell covariates and offsets. A zero offset marks a structural zero.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignData {
    dims: Dims,
    p: usize,
    covariates: Vec<f64>,
    offsets: Vec<f64>,
}

impl DesignData {
    /// `covariates` is cell-major (`cell * p + j`).
    pub fn new(dims: Dims, p: usize, covariates: Vec<f64>, offsets: Vec<f64>) -> Result<Self> {
        if covariates.len() != dims.cells() * p {
            return Err(Error::Shape {
                what: "covariates",
                expected: dims.cells() * p,
                found: covariates.len(),
            });
        }
        if offsets.len() != dims.cells() {
            return Err(Error::Shape {
                what: "offsets",
                expected: dims.cells(),
                found: offsets.len(),
            });
        }
        if let Some((index, &value)) = covariates.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidValue {
                what: "covariates",
                index,
                value,
            });
        }
        if let Some((index, &value)) = offsets.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidValue {
                what: "offsets",
                index,
                value,
            });
        }
        Ok(Self {
            dims,
            p,
            covariates,
            offsets,
        })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn p(&self) -> usize {
        self.p
    }

    #[inline]
    pub fn x(&self, cell: usize) -> &[f64] {
        &self.covariates[cell * self.p..(cell + 1) * self.p]
    }

    #[inline]
    pub fn offset(&self, cell: usize) -> f64 {
        self.offsets[cell]
    }

    pub fn covariates(&self) -> &[f64] {
        &self.covariates
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    #[inline]
    pub fn linear_predictor(&self, cell: usize, beta: &[f64]) -> f64 {
        self.x(cell).iter().zip(beta).map(|(x, b)| x * b).sum()
    }

    /// `u * exp(x . beta)` for every cell. Structural zeros give exactly 0.
    pub fn exposure_weights(&self, beta: &[f64]) -> Result<Vec<f64>> {
        check_beta(self, beta)?;
        (0..self.dims.cells())
            .map(|cell| exposure_weight(self, beta, cell))
            .collect()
    }
}

pub(crate) fn check_beta(data: &DesignData, beta: &[f64]) -> Result<()> {
    if beta.len() != data.p {
        return Err(Error::Shape {
            what: "beta",
            expected: data.p,
            found: beta.len(),
        });
    }
    Ok(())
}

#[inline]
pub(crate) fn exposure_weight(data: &DesignData, beta: &[f64], cell: usize) -> Result<f64> {
    let u = data.offset(cell);
    if u == 0.0 {
        return Ok(0.0);
    }
    let eta = data.linear_predictor(cell, beta);
    let w = u * exp(eta);
    if !w.is_finite() {
        return Err(Error::NonFiniteRate {
            cell: data.dims.unravel(cell),
            eta,
        });
    }
    Ok(w)
}

/// The three tensor-train cores. All entries are strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct TTCores {
    dims: Dims,
    ranks: Ranks,
    core1: Vec<f64>,
    core2: Vec<f64>,
    core3: Vec<f64>,
}

impl TTCores {
    /// `core1` is `N x H1`, `core2` is `T x H1 x H2` (h2 fastest), `core3` is `K x H2`.
    pub fn new(dims: Dims, ranks: Ranks, core1: Vec<f64>, core2: Vec<f64>, core3: Vec<f64>) -> Result<Self> {
        let expected = [
            ("core1", dims.n * ranks.h1, &core1),
            ("core2", dims.t * ranks.h1 * ranks.h2, &core2),
            ("core3", dims.k * ranks.h2, &core3),
        ];
        for (what, len, values) in expected {
            if values.len() != len {
                return Err(Error::Shape {
                    what,
                    expected: len,
                    found: values.len(),
                });
            }
            if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::InvalidValue { what, index, value });
            }
        }
        Ok(Self {
            dims,
            ranks,
            core1,
            core2,
            core3,
        })
    }

    pub fn constant(dims: Dims, ranks: Ranks, value: f64) -> Result<Self> {
        Self::new(
            dims,
            ranks,
            vec![value; dims.n * ranks.h1],
            vec![value; dims.t * ranks.h1 * ranks.h2],
            vec![value; dims.k * ranks.h2],
        )
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn ranks(&self) -> Ranks {
        self.ranks
    }

    pub fn core1(&self) -> &[f64] {
        &self.core1
    }

    pub fn core2(&self) -> &[f64] {
        &self.core2
    }

    pub fn core3(&self) -> &[f64] {
        &self.core3
    }

    /// Row `i` of core 1, length `H1`.
    #[inline]
    pub fn row1(&self, i: usize) -> &[f64] {
        &self.core1[i * self.ranks.h1..(i + 1) * self.ranks.h1]
    }

    /// Matrix `t` of core 2, `H1 x H2` row-major.
    #[inline]
    pub fn slab2(&self, t: usize) -> &[f64] {
        let sz = self.ranks.h1 * self.ranks.h2;
        &self.core2[t * sz..(t + 1) * sz]
    }

    /// Row `k` of core 3, length `H2`.
    #[inline]
    pub fn row3(&self, k: usize) -> &[f64] {
        &self.core3[k * self.ranks.h2..(k + 1) * self.ranks.h2]
    }

    pub(crate) fn core1_mut(&mut self) -> &mut [f64] {
        &mut self.core1
    }

    pub(crate) fn core2_mut(&mut self) -> &mut [f64] {
        &mut self.core2
    }

    pub(crate) fn core3_mut(&mut self) -> &mut [f64] {
        &mut self.core3
    }

    /// Residual rate `core1[i]' * core2[t] * core3[k]`.
    pub fn rate_at(&self, i: usize, t: usize, k: usize) -> Result<f64> {
        self.dims.check(i, t, k)?;
        Ok(self.rate_unchecked(i, t, k))
    }

    #[inline]
    pub(crate) fn rate_unchecked(&self, i: usize, t: usize, k: usize) -> f64 {
        let h2 = self.ranks.h2;
        let l3 = self.row3(k);
        self.row1(i)
            .iter()
            .zip(self.slab2(t).chunks_exact(h2))
            .map(|(a, row)| a * row.iter().zip(l3).map(|(b, c)| b * c).sum::<f64>())
            .sum()
    }

    /// Residual rate for every cell, in cell order.
    pub fn rate_tensor(&self) -> Vec<f64> {
        let Dims { n, t, k } = self.dims;
        let (h1, h2) = (self.ranks.h1, self.ranks.h2);
        let mut out = Vec::with_capacity(self.dims.cells());
        // contraction of core2 with core3 reused across i
        let mut m = vec![0.0; t * k * h1];
        for tt in 0..t {
            let slab = self.slab2(tt);
            for kk in 0..k {
                let l3 = self.row3(kk);
                for a in 0..h1 {
                    m[(tt * k + kk) * h1 + a] = slab[a * h2..(a + 1) * h2].iter().zip(l3).map(|(b, c)| b * c).sum();
                }
            }
        }
        for i in 0..n {
            let l1 = self.row1(i);
            for tk in 0..t * k {
                out.push(l1.iter().zip(&m[tk * h1..(tk + 1) * h1]).map(|(a, b)| a * b).sum());
            }
        }
        out
    }

    fn check_dims(&self, data: &DesignData) -> Result<()> {
        if self.dims != data.dims() {
            return Err(Error::Shape {
                what: "design cells",
                expected: self.dims.cells(),
                found: data.dims().cells(),
            });
        }
        Ok(())
    }

    /// Full Poisson mean `u * exp(x . beta) * rate`; exactly 0 for structural zeros.
    pub fn full_rate(&self, beta: &[f64], data: &DesignData, i: usize, t: usize, k: usize) -> Result<f64> {
        self.check_dims(data)?;
        check_beta(data, beta)?;
        self.dims.check(i, t, k)?;
        let cell = self.dims.cell(i, t, k);
        let w = exposure_weight(data, beta, cell)?;
        Ok(w * self.rate_unchecked(i, t, k))
    }
}
