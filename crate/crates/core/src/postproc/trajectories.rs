use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::glm::{loglik_from_means, GlmFit, LogLikelihood};
use crate::math::{exp, normal_quantile, sqrt};
use crate::sampler::ChainOutput;
use crate::tensor::{CountTensor, DesignData};

use super::quantile_sorted;

/// One line of a fitted-trajectory table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub i: usize,
    pub k: usize,
    pub t: usize,
    pub observed: u64,
    pub bprttd_mean: f64,
    pub bprttd_lo: f64,
    pub bprttd_hi: f64,
    pub glm_mean: f64,
    pub glm_lo: f64,
    pub glm_hi: f64,
}

fn check_chain(chain: &ChainOutput, data: &DesignData) -> Result<()> {
    if chain.dims != data.dims() || chain.p != data.p() {
        return Err(Error::Shape {
            what: "chain cells",
            expected: data.dims().cells(),
            found: chain.dims.cells(),
        });
    }
    Ok(())
}

/// Posterior mean of the full Poisson mean for every cell.
pub fn posterior_mean_rates(chain: &ChainOutput, data: &DesignData) -> Result<Vec<f64>> {
    check_chain(chain, data)?;
    let n = chain.n_draws();
    if n == 0 {
        return Err(Error::TooFewDraws { needed: 1, found: 0 });
    }
    let mut acc = vec![0.0; data.dims().cells()];
    for d in 0..n {
        let w = data.exposure_weights(chain.beta_draw(d))?;
        let r = chain.cores_draw(d).rate_tensor();
        for ((a, w), r) in acc.iter_mut().zip(&w).zip(&r) {
            *a += w * r;
        }
    }
    acc.iter_mut().for_each(|v| *v /= n as f64);
    Ok(acc)
}

/// Per-`t` fitted means with pointwise bands for each `(i, k)` pair. The
/// GLM band is the delta-method interval `mu +/- z * mu * se(x . beta)`,
/// floored at zero.
pub fn fitted_trajectories(
    chain: &ChainOutput,
    counts: &CountTensor,
    data: &DesignData,
    glm: &GlmFit,
    cells: &[(usize, usize)],
    level: f64,
) -> Result<Vec<TrajectoryRow>> {
    check_chain(chain, data)?;
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(alloc::format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    let dims = data.dims();
    for &(i, k) in cells {
        dims.check(i, 0, k)?;
    }
    let n = chain.n_draws();
    if n == 0 {
        return Err(Error::TooFewDraws { needed: 1, found: 0 });
    }
    let tail = 0.5 * (1.0 - level);
    let z = normal_quantile(1.0 - tail);

    // draws x (cells x T) fitted means
    let width = cells.len() * dims.t;
    let mut mu = vec![0.0; n * width];
    for d in 0..n {
        let beta = chain.beta_draw(d);
        let cores = chain.cores_draw(d);
        for (c, &(i, k)) in cells.iter().enumerate() {
            for t in 0..dims.t {
                mu[d * width + c * dims.t + t] = cores.full_rate(beta, data, i, t, k)?;
            }
        }
    }
    let mut rows = Vec::with_capacity(width);
    let mut column = Vec::with_capacity(n);
    for (c, &(i, k)) in cells.iter().enumerate() {
        for t in 0..dims.t {
            let j = c * dims.t + t;
            column.clear();
            column.extend(mu.iter().skip(j).step_by(width).copied());
            let mean = column.iter().sum::<f64>() / n as f64;
            column.sort_by(f64::total_cmp);
            let cell = dims.cell(i, t, k);
            let x = data.x(cell);
            let u = data.offset(cell);
            let eta = data.linear_predictor(cell, &glm.beta_hat);
            let glm_mean = if u == 0.0 { 0.0 } else { u * exp(eta) };
            let se = sqrt(glm.covariance.quad_form(x).max(0.0));
            rows.push(TrajectoryRow {
                i,
                k,
                t,
                observed: counts.get(i, t, k),
                bprttd_mean: mean,
                bprttd_lo: quantile_sorted(&column, tail),
                bprttd_hi: quantile_sorted(&column, 1.0 - tail),
                glm_mean,
                glm_lo: (glm_mean - z * glm_mean * se).max(0.0),
                glm_hi: glm_mean + z * glm_mean * se,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelComparison {
    /// Regression-only model at the GLM estimate.
    pub loglik_glm: LogLikelihood,
    /// Tensor-train model at the posterior-mean fitted rates.
    pub loglik_bprttd: LogLikelihood,
}

pub fn compare_loglik(
    chain: &ChainOutput,
    counts: &CountTensor,
    data: &DesignData,
    glm: &GlmFit,
) -> Result<ModelComparison> {
    let rates = posterior_mean_rates(chain, data)?;
    let loglik_glm = crate::glm::loglik_poisson(&glm.beta_hat, None, counts, data)?;
    Ok(ModelComparison {
        loglik_glm,
        loglik_bprttd: loglik_from_means(&rates, counts)?,
    })
}
