//! Plain Poisson regression with log link and offsets, fitted by IRLS.
//!
//! Supplies the baseline fit, the starting value and fixed proposal
//! covariance for the sampler's `beta` step, and log-likelihood evaluation for
//! both the regression-only and the tensor-train model.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::math::{exp, ln_factorial, log};
use crate::par;
use crate::tensor::{check_beta, CountTensor, DesignData, TTCores};

pub const SCORE_TOL: f64 = 1e-8;
pub const REL_LOGLIK_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 100;
const MAX_HALVINGS: usize = 40;
const RANK_TOL: f64 = 1e-10;
/// Rows of the tensor accumulated per partial sum.
const ROW_CHUNK: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub beta_hat: Vec<f64>,
    /// Inverse Fisher information at `beta_hat`.
    pub covariance: Matrix,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub diagnostics: GlmDiagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlmDiagnostics {
    /// Max absolute score component at `beta_hat`.
    pub score_max: f64,
    pub last_rel_change: f64,
    pub step_halvings: usize,
    /// Every active count is zero: the maximum sits at the boundary.
    pub boundary: bool,
}

impl GlmFit {
    pub fn standard_errors(&self) -> Vec<f64> {
        self.covariance.diagonal().into_iter().map(libm::sqrt).collect()
    }
}

/// Log-likelihood value, or the first cell that makes it `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogLikelihood {
    Finite(f64),
    /// A cell with zero mean but a positive count.
    NegInfinity {
        cell: (usize, usize, usize),
    },
}

impl LogLikelihood {
    pub fn finite(self) -> Option<f64> {
        match self {
            LogLikelihood::Finite(v) => Some(v),
            LogLikelihood::NegInfinity { .. } => None,
        }
    }

    /// `-inf` for the impossible case.
    pub fn value(self) -> f64 {
        self.finite().unwrap_or(f64::NEG_INFINITY)
    }
}

struct Accum {
    loglik: f64,
    score: Vec<f64>,
    info: Vec<f64>,
}

fn check_counts(counts: &CountTensor, data: &DesignData) -> Result<()> {
    if counts.dims() != data.dims() {
        return Err(Error::Shape {
            what: "count cells",
            expected: data.dims().cells(),
            found: counts.dims().cells(),
        });
    }
    Ok(())
}

/// Loglik (without `ln y!`), score and Fisher information at `beta`.
/// Returns `None` if any mean overflows.
fn accumulate(counts: &CountTensor, data: &DesignData, beta: &[f64], with_info: bool) -> Option<Accum> {
    let dims = data.dims();
    let p = data.p();
    let per_row = dims.t * dims.k;
    let chunks = dims.n.div_ceil(ROW_CHUNK);
    let partials = par::map_range(chunks, |c| {
        let mut acc = Accum {
            loglik: 0.0,
            score: vec![0.0; p],
            info: if with_info { vec![0.0; p * p] } else { Vec::new() },
        };
        let start = c * ROW_CHUNK * per_row;
        let end = ((c + 1) * ROW_CHUNK).min(dims.n) * per_row;
        for cell in start..end {
            let u = data.offset(cell);
            if u == 0.0 {
                continue;
            }
            let y = counts.as_slice()[cell] as f64;
            let eta = data.linear_predictor(cell, beta);
            let mu = u * exp(eta);
            if !mu.is_finite() {
                return None;
            }
            acc.loglik += if y > 0.0 { y * (log(u) + eta) } else { 0.0 } - mu;
            let x = data.x(cell);
            let r = y - mu;
            for (s, xj) in acc.score.iter_mut().zip(x) {
                *s += r * xj;
            }
            if with_info {
                for a in 0..p {
                    let wa = mu * x[a];
                    for b in 0..=a {
                        acc.info[a * p + b] += wa * x[b];
                    }
                }
            }
        }
        Some(acc)
    });
    let mut total = Accum {
        loglik: 0.0,
        score: vec![0.0; p],
        info: if with_info { vec![0.0; p * p] } else { Vec::new() },
    };
    for part in partials {
        let part = part?;
        total.loglik += part.loglik;
        total.score.iter_mut().zip(&part.score).for_each(|(a, b)| *a += b);
        total.info.iter_mut().zip(&part.info).for_each(|(a, b)| *a += b);
    }
    if with_info {
        for a in 0..p {
            for b in 0..a {
                total.info[b * p + a] = total.info[a * p + b];
            }
        }
    }
    Some(total)
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn check_rank(data: &DesignData, active: &[usize]) -> Result<()> {
    let p = data.p();
    let mut gram = Matrix::zeros(p);
    for &cell in active {
        let x = data.x(cell);
        for a in 0..p {
            for b in 0..p {
                gram[(a, b)] += x[a] * x[b];
            }
        }
    }
    if let Err(fail) = gram.cholesky(RANK_TOL) {
        let j = fail.column;
        let mut span = Vec::new();
        if j > 0 {
            // regress column j on the preceding ones to name the culprits
            let sub = Matrix::from_row_major(
                j,
                (0..j)
                    .flat_map(|a| (0..j).map(move |b| (a, b)))
                    .map(|(a, b)| gram[(a, b)])
                    .collect(),
            );
            if let Ok(ch) = sub.cholesky(RANK_TOL) {
                let rhs: Vec<f64> = (0..j).map(|a| gram[(a, j)]).collect();
                let coef = ch.solve(&rhs);
                span = (0..j).filter(|&a| coef[a].abs() > 1e-8).collect();
            }
        }
        return Err(Error::RankDeficient { column: j, span });
    }
    Ok(())
}

/// Maximum-likelihood Poisson regression over cells with positive offset.
pub fn fit_glm(counts: &CountTensor, data: &DesignData) -> Result<GlmFit> {
    check_counts(counts, data)?;
    let dims = data.dims();
    let p = data.p();
    let mut active = Vec::new();
    let mut total_y = 0u64;
    for cell in 0..dims.cells() {
        let y = counts.as_slice()[cell];
        if data.offset(cell) == 0.0 {
            if y > 0 {
                return Err(Error::ImpossibleStructuralZero {
                    cell: dims.unravel(cell),
                    count: y,
                });
            }
            continue;
        }
        active.push(cell);
        total_y += y;
    }
    if active.is_empty() {
        return Err(Error::NoActiveCells);
    }
    check_rank(data, &active)?;
    let log_fact: f64 = active.iter().map(|&c| ln_factorial(counts.as_slice()[c])).sum();

    // weighted least squares on log((y + ybar) / 2) - log u as a start
    let ybar = total_y as f64 / active.len() as f64;
    let mut xtwx = Matrix::zeros(p);
    let mut xtwz = vec![0.0; p];
    for &cell in &active {
        let y = counts.as_slice()[cell] as f64;
        let mu0 = 0.5 * (y + ybar).max(1e-3);
        let z = log(mu0) - log(data.offset(cell));
        let x = data.x(cell);
        for a in 0..p {
            xtwz[a] += mu0 * x[a] * z;
            for b in 0..p {
                xtwx[(a, b)] += mu0 * x[a] * x[b];
            }
        }
    }
    let mut beta = match xtwx.cholesky(0.0) {
        Ok(ch) => ch.solve(&xtwz),
        Err(_) => vec![0.0; p],
    };
    let mut current = match accumulate(counts, data, &beta, true) {
        Some(acc) => acc,
        None => {
            beta = vec![0.0; p];
            accumulate(counts, data, &beta, true).ok_or_else(|| overflow_error(data, &beta))?
        }
    };

    let mut iterations = 0;
    let mut halvings = 0;
    let mut rel_change = f64::INFINITY;
    let mut converged = false;
    while iterations < MAX_ITERATIONS {
        if max_abs(&current.score) < SCORE_TOL {
            converged = true;
            break;
        }
        let info = Matrix::from_row_major(p, current.info.clone());
        let Ok(ch) = info.cholesky(0.0) else { break };
        let step = ch.solve(&current.score);
        iterations += 1;
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            if let Some(acc) = accumulate(counts, data, &trial, true) {
                if acc.loglik >= current.loglik {
                    accepted = Some((trial, acc));
                    break;
                }
            }
            scale *= 0.5;
            halvings += 1;
        }
        let Some((next_beta, next)) = accepted else { break };
        rel_change = (next.loglik - current.loglik).abs() / current.loglik.abs().max(1.0);
        beta = next_beta;
        current = next;
        if rel_change < REL_LOGLIK_TOL {
            converged = true;
            break;
        }
    }
    let boundary = total_y == 0;
    if boundary {
        converged = false;
    }

    let info = Matrix::from_row_major(p, current.info.clone());
    let covariance = match info.cholesky(0.0) {
        Ok(ch) => ch.inverse(),
        // fall back to a diagonal so callers always get something usable
        Err(_) => Matrix::from_diagonal(
            &info
                .diagonal()
                .iter()
                .map(|d| if *d > 0.0 { 1.0 / d } else { 1.0 })
                .collect::<Vec<_>>(),
        ),
    };
    Ok(GlmFit {
        loglik: current.loglik - log_fact,
        diagnostics: GlmDiagnostics {
            score_max: max_abs(&current.score),
            last_rel_change: rel_change,
            step_halvings: halvings,
            boundary,
        },
        beta_hat: beta,
        covariance,
        converged,
        iterations,
    })
}

fn overflow_error(data: &DesignData, beta: &[f64]) -> Error {
    for cell in 0..data.dims().cells() {
        let eta = data.linear_predictor(cell, beta);
        if !(data.offset(cell) * exp(eta)).is_finite() {
            return Error::NonFiniteRate {
                cell: data.dims().unravel(cell),
                eta,
            };
        }
    }
    Error::NoActiveCells
}

/// Score `sum (y - mu) x` of the regression-only model.
pub fn poisson_score(beta: &[f64], counts: &CountTensor, data: &DesignData) -> Result<Vec<f64>> {
    check_counts(counts, data)?;
    check_beta(data, beta)?;
    accumulate(counts, data, beta, false)
        .map(|acc| acc.score)
        .ok_or_else(|| overflow_error(data, beta))
}

/// Poisson log-likelihood including `ln y!`, with means from the full model
/// (`cores = Some`) or the regression-only model (`cores = None`).
pub fn loglik_poisson(
    beta: &[f64],
    cores: Option<&TTCores>,
    counts: &CountTensor,
    data: &DesignData,
) -> Result<LogLikelihood> {
    check_counts(counts, data)?;
    check_beta(data, beta)?;
    let rates = match cores {
        Some(c) => {
            if c.dims() != data.dims() {
                return Err(Error::Shape {
                    what: "core cells",
                    expected: data.dims().cells(),
                    found: c.dims().cells(),
                });
            }
            Some(c.rate_tensor())
        }
        None => None,
    };
    let weights = data.exposure_weights(beta)?;
    let means: Vec<f64> = match rates {
        Some(r) => weights.iter().zip(&r).map(|(w, l)| w * l).collect(),
        None => weights,
    };
    loglik_from_means(&means, counts)
}

/// Log-likelihood (including `ln y!`) for given per-cell means.
pub fn loglik_from_means(means: &[f64], counts: &CountTensor) -> Result<LogLikelihood> {
    let dims = counts.dims();
    if means.len() != dims.cells() {
        return Err(Error::Shape {
            what: "means",
            expected: dims.cells(),
            found: means.len(),
        });
    }
    let per_row = dims.t * dims.k;
    let partials = par::map_range(dims.n, |i| {
        let mut s = 0.0;
        for cell in i * per_row..(i + 1) * per_row {
            let mu = means[cell];
            let y = counts.as_slice()[cell];
            if mu == 0.0 {
                if y > 0 {
                    return Err(cell);
                }
                continue;
            }
            let yf = y as f64;
            s += if y > 0 { yf * log(mu) } else { 0.0 } - mu - ln_factorial(y);
        }
        Ok(s)
    });
    let mut total = 0.0;
    for part in partials {
        match part {
            Ok(s) => total += s,
            Err(cell) => {
                return Ok(LogLikelihood::NegInfinity {
                    cell: dims.unravel(cell),
                })
            }
        }
    }
    Ok(LogLikelihood::Finite(total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Dims, Ranks};

    fn intercept_only(ys: &[u64]) -> (CountTensor, DesignData) {
        let dims = Dims::new(1, ys.len(), 1);
        (
            CountTensor::new(dims, ys.to_vec()).unwrap(),
            DesignData::new(dims, 1, vec![1.0; ys.len()], vec![1.0; ys.len()]).unwrap(),
        )
    }

    #[test]
    fn intercept_only_is_log_mean() {
        let (y, d) = intercept_only(&[2, 4]);
        let fit = fit_glm(&y, &d).unwrap();
        assert!(fit.converged);
        assert!((fit.beta_hat[0] - 3f64.ln()).abs() < 1e-10);
        // variance of log mean = 1 / (n * ybar)
        assert!((fit.covariance[(0, 0)] - 1.0 / 6.0).abs() < 1e-10);
    }

    #[test]
    fn all_zero_counts_do_not_converge() {
        let (y, d) = intercept_only(&[0, 0, 0]);
        let fit = fit_glm(&y, &d).unwrap();
        assert!(!fit.converged);
        assert!(fit.diagnostics.boundary);
        assert!(fit.beta_hat[0] < -5.0);
    }

    #[test]
    fn impossible_structural_zero() {
        let dims = Dims::new(1, 2, 1);
        let y = CountTensor::new(dims, vec![1, 3]).unwrap();
        let d = DesignData::new(dims, 1, vec![1.0, 1.0], vec![1.0, 0.0]).unwrap();
        assert_eq!(
            fit_glm(&y, &d),
            Err(Error::ImpossibleStructuralZero {
                cell: (0, 1, 0),
                count: 3
            })
        );
    }

    #[test]
    fn structural_zero_with_zero_count_is_skipped() {
        let dims = Dims::new(1, 3, 1);
        let y = CountTensor::new(dims, vec![2, 0, 4]).unwrap();
        let d = DesignData::new(dims, 1, vec![1.0; 3], vec![1.0, 0.0, 1.0]).unwrap();
        let fit = fit_glm(&y, &d).unwrap();
        assert!((fit.beta_hat[0] - 3f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn collinear_columns_are_named() {
        let dims = Dims::new(1, 4, 1);
        let y = CountTensor::new(dims, vec![1, 2, 3, 4]).unwrap();
        let x = vec![1.0, 0.5, 2.0, 1.0, 1.0, 1.0, 1.0, 2.0, -1.0, 1.0, 0.0, 3.0];
        let d = DesignData::new(dims, 3, x, vec![1.0; 4]).unwrap();
        match fit_glm(&y, &d) {
            Err(Error::RankDeficient { column, span }) => {
                assert_eq!(column, 2);
                assert_eq!(span, vec![0, 1]);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn loglik_single_cells() {
        let dims = Dims::new(1, 1, 1);
        let one = CountTensor::new(dims, vec![1]).unwrap();
        let d = DesignData::new(dims, 1, vec![0.0], vec![1.0]).unwrap();
        let ll = loglik_poisson(&[0.0], None, &one, &d).unwrap();
        assert!((ll.value() + 1.0).abs() < 1e-15);

        let zero = CountTensor::new(dims, vec![0]).unwrap();
        let d = DesignData::new(dims, 1, vec![0.0], vec![2.0]).unwrap();
        assert!((loglik_poisson(&[0.0], None, &zero, &d).unwrap().value() + 2.0).abs() < 1e-15);
    }

    #[test]
    fn loglik_flags_impossible_cell() {
        let dims = Dims::new(1, 2, 1);
        let y = CountTensor::new(dims, vec![0, 2]).unwrap();
        let d = DesignData::new(dims, 1, vec![1.0, 1.0], vec![1.0, 0.0]).unwrap();
        let c = TTCores::constant(dims, Ranks::new(1, 1), 1.0).unwrap();
        assert_eq!(
            loglik_poisson(&[0.0], Some(&c), &y, &d).unwrap(),
            LogLikelihood::NegInfinity { cell: (0, 1, 0) }
        );
    }

    #[test]
    fn loglik_with_cores_matches_hand_evaluation() {
        let dims = Dims::new(3, 1, 1);
        let y = CountTensor::new(dims, vec![3, 0, 7]).unwrap();
        let d = DesignData::new(dims, 2, vec![1.0, 0.3, 1.0, -1.2, 1.0, 0.8], vec![1.5, 2.0, 0.7]).unwrap();
        let cores = TTCores::new(dims, Ranks::new(1, 1), vec![0.5, 1.5, 2.0], vec![1.2], vec![0.9]).unwrap();
        let beta = [0.2, -0.4];
        let mut want = 0.0;
        let xs: [f64; 3] = [0.3, -1.2, 0.8];
        let us: [f64; 3] = [1.5, 2.0, 0.7];
        let l1 = [0.5, 1.5, 2.0];
        let ys = [3.0f64, 0.0, 7.0];
        for c in [2, 0, 1] {
            let mu = us[c] * (0.2 - 0.4 * xs[c]).exp() * l1[c] * 1.2 * 0.9;
            want += ys[c] * mu.ln() - mu - statrs::function::gamma::ln_gamma(ys[c] + 1.0);
        }
        let got = loglik_poisson(&beta, Some(&cores), &y, &d).unwrap().value();
        assert!((got - want).abs() < 1e-10, "{got} vs {want}");
    }
}
