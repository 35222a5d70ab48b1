use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Factorization of the first tensor axis as `regions x genders x ages`,
/// region slowest: `i = (region * genders + gender) * ages + age`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FactorLayout {
    pub regions: usize,
    pub genders: usize,
    pub ages: usize,
}

impl FactorLayout {
    pub fn groups(&self) -> usize {
        self.genders * self.ages
    }

    pub fn n(&self) -> usize {
        self.regions * self.groups()
    }
}

/// Rearranges `N x H1` core-1 means into one row per region with
/// `genders * ages * H1` features ordered by `(gender, age, h1)`.
pub fn core1_feature_matrix(means: &[f64], h1: usize, layout: FactorLayout) -> Result<Vec<Vec<f64>>> {
    if h1 == 0 || means.len() != layout.n() * h1 {
        return Err(Error::Layout {
            regions: layout.regions,
            groups: layout.groups(),
            n: means.len().checked_div(h1).unwrap_or(0),
        });
    }
    Ok(means.chunks_exact(layout.groups() * h1).map(<[f64]>::to_vec).collect())
}

/// Inverse of [`core1_feature_matrix`].
pub fn unflatten_features(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.concat()
}
