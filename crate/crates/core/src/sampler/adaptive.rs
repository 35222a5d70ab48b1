//! Adaptive random-walk Metropolis step for the regression coefficients.
//!
//! The proposal is the two-component mixture
//! `(1 - p) N(beta, 2.38^2 S_n / d) + p N(beta, 0.1^2 S / d)` where `S_n` is
//! the running covariance of the chain so far and `S` the fixed GLM
//! covariance. Only the fixed component is used during warm-up.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{Cholesky, Matrix};
use crate::math::{exp, log};
use crate::par;
use crate::tensor::{check_beta, CountTensor, DesignData, TTCores};

pub const ADAPTIVE_SCALE: f64 = 2.38;
pub const FIXED_SCALE: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProposalComponent {
    Adaptive,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Proposal {
    pub beta: Vec<f64>,
    pub component: ProposalComponent,
    /// The adaptive covariance was not positive definite and the fixed
    /// component was used instead.
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptState {
    mean_run: Vec<f64>,
    scatter: Matrix,
    sigma_fixed: Matrix,
    fixed_chol: Cholesky,
    pub p_mix: f64,
    /// Number of samples folded into the running moments.
    pub n: usize,
    pub accepts: usize,
    /// Iterations using only the fixed component.
    pub warmup: usize,
    pub fallbacks: usize,
}

impl AdaptState {
    /// `sigma_fixed` is the GLM covariance. If it is not positive definite its
    /// absolute diagonal is used instead.
    pub fn new(sigma_fixed: Matrix, p_mix: f64, warmup: usize) -> Result<Self> {
        if !(p_mix > 0.0 && p_mix < 1.0) {
            return Err(Error::Config(alloc::format!("p_mix must lie in (0, 1), got {p_mix}")));
        }
        let d = sigma_fixed.dim();
        let scale = FIXED_SCALE * FIXED_SCALE / d as f64;
        let fixed_chol = match sigma_fixed.scaled(scale).cholesky(0.0) {
            Ok(ch) => ch,
            Err(_) => {
                let diag: Vec<f64> = sigma_fixed
                    .diagonal()
                    .iter()
                    .map(|v| {
                        if v.is_finite() && v.abs() > 0.0 {
                            v.abs() * scale
                        } else {
                            scale
                        }
                    })
                    .collect();
                Matrix::from_diagonal(&diag)
                    .cholesky(0.0)
                    .map_err(|_| Error::Config("fixed proposal covariance is unusable".into()))?
            }
        };
        Ok(Self {
            mean_run: vec![0.0; d],
            scatter: Matrix::zeros(d),
            sigma_fixed,
            fixed_chol,
            p_mix,
            n: 0,
            accepts: 0,
            warmup,
            fallbacks: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mean_run.len()
    }

    pub fn mean_run(&self) -> &[f64] {
        &self.mean_run
    }

    pub fn sigma_fixed(&self) -> &Matrix {
        &self.sigma_fixed
    }

    /// Running sample covariance (denominator `n - 1`); zero before two samples.
    pub fn cov_run(&self) -> Matrix {
        if self.n < 2 {
            return Matrix::zeros(self.dim());
        }
        self.scatter.scaled(1.0 / (self.n - 1) as f64)
    }

    /// Folds one sample into the running mean and covariance.
    pub fn update(&mut self, beta: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        let delta: Vec<f64> = beta.iter().zip(&self.mean_run).map(|(b, m)| b - m).collect();
        for (m, d) in self.mean_run.iter_mut().zip(&delta) {
            *m += d / n;
        }
        let f = (n - 1.0) / n;
        let dim = self.dim();
        for a in 0..dim {
            for b in 0..dim {
                self.scatter[(a, b)] += f * delta[a] * delta[b];
            }
        }
    }
}

/// Returns the updated adaptation state.
pub fn update_adaptation(mut adapt: AdaptState, new_beta: &[f64]) -> AdaptState {
    adapt.update(new_beta);
    adapt
}

/// Draws from the mixture proposal centred at `beta`.
pub fn propose_beta<R: Rng + ?Sized>(adapt: &mut AdaptState, beta: &[f64], rng: &mut R) -> Proposal {
    let d = adapt.dim();
    let mut component = ProposalComponent::Fixed;
    let mut fell_back = false;
    let mut chol = None;
    if adapt.n > adapt.warmup {
        let pick_fixed = rng.random::<f64>() < adapt.p_mix;
        if !pick_fixed {
            let cov = adapt.cov_run().scaled(ADAPTIVE_SCALE * ADAPTIVE_SCALE / d as f64);
            match cov.cholesky(1e-14) {
                Ok(ch) => {
                    component = ProposalComponent::Adaptive;
                    chol = Some(ch);
                }
                Err(_) => {
                    fell_back = true;
                    adapt.fallbacks += 1;
                }
            }
        }
    }
    let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let step = chol.as_ref().unwrap_or(&adapt.fixed_chol).lower_mul(&z);
    Proposal {
        beta: beta.iter().zip(step).map(|(b, s)| b + s).collect(),
        component,
        fell_back,
    }
}

/// `sum y log(mu) - mu` over cells with positive offset; `None` when a mean
/// is not finite.
pub(crate) fn loglik_kernel(beta: &[f64], counts: &CountTensor, data: &DesignData, rates: &[f64]) -> Option<f64> {
    let dims = data.dims();
    let per_row = dims.t * dims.k;
    let parts = par::map_range(dims.n, |i| {
        let mut s = 0.0;
        for cell in i * per_row..(i + 1) * per_row {
            let u = data.offset(cell);
            if u == 0.0 {
                continue;
            }
            let eta = data.linear_predictor(cell, beta);
            let mu = u * exp(eta) * rates[cell];
            if !mu.is_finite() {
                return None;
            }
            let y = counts.as_slice()[cell];
            if y > 0 {
                s += y as f64 * log(mu);
            }
            s -= mu;
        }
        Some(s)
    });
    let mut total = 0.0;
    for part in parts {
        total += part?;
    }
    total.is_finite().then_some(total)
}

fn log_prior(beta: &[f64], sigma2: f64) -> f64 {
    -beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * sigma2)
}

/// Log Metropolis-Hastings ratio for moving from `current` to `proposal`
/// with residual rates `rates` held fixed. `None` if the proposal's
/// likelihood is not finite.
pub fn log_acceptance_ratio(
    current: &[f64],
    proposal: &[f64],
    counts: &CountTensor,
    data: &DesignData,
    rates: &[f64],
    sigma2: f64,
) -> Option<f64> {
    let cur = loglik_kernel(current, counts, data, rates)?;
    let prop = loglik_kernel(proposal, counts, data, rates)?;
    Some(prop - cur + log_prior(proposal, sigma2) - log_prior(current, sigma2))
}

pub(crate) fn accept_from_ratio<R: Rng + ?Sized>(log_ratio: Option<f64>, rng: &mut R) -> bool {
    match log_ratio {
        None => false,
        Some(r) if r >= 0.0 => {
            // keep the stream aligned regardless of the outcome
            let _: f64 = rng.random();
            true
        }
        Some(r) => log(rng.random::<f64>()) < r,
    }
}

/// One accept/reject decision. Returns the next `beta` and whether the
/// proposal was accepted.
pub fn mh_accept_beta<R: Rng + ?Sized>(
    current: &[f64],
    proposal: &[f64],
    counts: &CountTensor,
    data: &DesignData,
    cores: &TTCores,
    sigma2: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, bool)> {
    check_beta(data, current)?;
    check_beta(data, proposal)?;
    if cores.dims() != data.dims() || counts.dims() != data.dims() {
        return Err(Error::Shape {
            what: "model cells",
            expected: data.dims().cells(),
            found: cores.dims().cells(),
        });
    }
    let rates = cores.rate_tensor();
    let ratio = log_acceptance_ratio(current, proposal, counts, data, &rates, sigma2);
    if accept_from_ratio(ratio, rng) {
        Ok((proposal.to_vec(), true))
    } else {
        Ok((current.to_vec(), false))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::{Dims, Ranks};

    fn coordinate_sd(adapt: &mut AdaptState, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, 0, 0);
        let d = adapt.dim();
        let mut sums = vec![0.0; d];
        let mut sq = vec![0.0; d];
        let origin = vec![0.0; d];
        for _ in 0..n {
            let p = propose_beta(adapt, &origin, &mut rng);
            for j in 0..d {
                sums[j] += p.beta[j];
                sq[j] += p.beta[j] * p.beta[j];
            }
        }
        (0..d)
            .map(|j| {
                let m = sums[j] / n as f64;
                (sq[j] / n as f64 - m * m).sqrt()
            })
            .collect()
    }

    /// Adaptation state whose running covariance is (close to) the identity.
    fn adapted_identity(d: usize, p_mix: f64) -> AdaptState {
        let mut a = AdaptState::new(Matrix::identity(d), p_mix, 0).unwrap();
        // +/- unit vectors: mean 0, covariance 2m/(2m-1) * I / ... set exactly below
        for j in 0..d {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            a.update(&e);
            e[j] = -1.0;
            a.update(&e);
        }
        // scatter = 2 I, n = 2d -> cov = 2/(2d-1) I; rescale to identity
        a.scatter = Matrix::identity(d).scaled((2 * d - 1) as f64);
        a
    }

    #[test]
    fn adaptive_component_scale() {
        let d = 4;
        let mut a = adapted_identity(d, 1e-12);
        let sd = coordinate_sd(&mut a, 100_000, 1);
        for s in sd {
            assert!((s / (2.38 / 2.0) - 1.0).abs() < 0.01, "{s}");
        }
    }

    #[test]
    fn fixed_component_scale() {
        let d = 4;
        let mut a = adapted_identity(d, 1.0 - 1e-12);
        let sd = coordinate_sd(&mut a, 100_000, 2);
        for s in sd {
            assert!((s / (0.1 / 2.0) - 1.0).abs() < 0.01, "{s}");
        }
    }

    #[test]
    fn mixture_variance() {
        let d = 4;
        let mut a = adapted_identity(d, 0.05);
        let sd = coordinate_sd(&mut a, 100_000, 3);
        let want = 0.95 * 2.38f64.powi(2) / 4.0 + 0.05 * 0.01 / 4.0;
        assert!((want - 1.3455).abs() < 1e-4);
        for s in sd {
            assert!((s * s / want - 1.0).abs() < 0.02, "{}", s * s);
        }
    }

    #[test]
    fn warmup_uses_fixed_only() {
        let mut a = AdaptState::new(Matrix::identity(2), 0.05, 10).unwrap();
        let mut rng = stream(4, 0, 0);
        for _ in 0..10 {
            a.update(&[1.0, 2.0]);
            assert_eq!(
                propose_beta(&mut a, &[0.0, 0.0], &mut rng).component,
                ProposalComponent::Fixed
            );
        }
    }

    #[test]
    fn degenerate_running_covariance_falls_back() {
        let mut a = AdaptState::new(Matrix::identity(2), 0.05, 0).unwrap();
        a.update(&[1.0, 1.0]);
        a.update(&[1.0, 1.0]);
        let mut rng = stream(5, 0, 0);
        let mut fallbacks = 0;
        for _ in 0..100 {
            let p = propose_beta(&mut a, &[0.0, 0.0], &mut rng);
            assert_eq!(p.component, ProposalComponent::Fixed);
            fallbacks += p.fell_back as usize;
        }
        assert!(fallbacks > 80);
        assert_eq!(a.fallbacks, fallbacks);
    }

    #[test]
    fn running_moments() {
        let mut a = AdaptState::new(Matrix::identity(2), 0.05, 0).unwrap();
        a.update(&[3.0, -1.0]);
        a.update(&[3.0, -1.0]);
        assert_eq!(a.cov_run(), Matrix::zeros(2));

        let mut a = AdaptState::new(Matrix::identity(2), 0.05, 0).unwrap();
        a = update_adaptation(a, &[0.0, 0.0]);
        a = update_adaptation(a, &[2.0, 0.0]);
        assert_eq!(a.mean_run(), &[1.0, 0.0]);
        assert_eq!(a.cov_run(), Matrix::from_row_major(2, vec![2.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn running_covariance_converges() {
        let truth = Matrix::from_row_major(2, vec![1.0, 0.6, 0.6, 2.0]);
        let ch = truth.cholesky(0.0).unwrap();
        let mut a = AdaptState::new(Matrix::identity(2), 0.05, 0).unwrap();
        let mut rng = stream(8, 0, 0);
        for _ in 0..1000 {
            let z: Vec<f64> = (0..2).map(|_| StandardNormal.sample(&mut rng)).collect();
            a.update(&ch.lower_mul(&z));
        }
        let cov = a.cov_run();
        assert!(cov.asymmetry() == 0.0);
        assert!(cov.frobenius_distance(&truth) < 0.1 * truth.frobenius_norm());
    }

    fn two_cells() -> (CountTensor, DesignData, TTCores) {
        let dims = Dims::new(1, 2, 1);
        let counts = CountTensor::new(dims, vec![3, 5]).unwrap();
        let data = DesignData::new(dims, 2, vec![1.0, 0.5, 1.0, -0.3], vec![2.0, 1.5]).unwrap();
        let cores = TTCores::new(dims, Ranks::new(1, 1), vec![0.8], vec![1.1, 0.6], vec![1.3]).unwrap();
        (counts, data, cores)
    }

    #[test]
    fn hand_computed_ratio() {
        let (counts, data, cores) = two_cells();
        let rates = cores.rate_tensor();
        let (b0, b1) = ([0.1, -0.2], [0.3, 0.4]);
        let ll = |b: &[f64; 2]| {
            let mu0 = 2.0 * (b[0] + 0.5 * b[1]).exp() * 0.8 * 1.1 * 1.3;
            let mu1 = 1.5 * (b[0] - 0.3 * b[1]).exp() * 0.8 * 0.6 * 1.3;
            3.0 * mu0.ln() - mu0 + 5.0 * mu1.ln() - mu1
        };
        let sigma2 = 0.7;
        let lp = |b: &[f64; 2]| -(b[0] * b[0] + b[1] * b[1]) / (2.0 * sigma2);
        let want = ll(&b1) - ll(&b0) + lp(&b1) - lp(&b0);
        let got = log_acceptance_ratio(&b0, &b1, &counts, &data, &rates, sigma2).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }

    #[test]
    fn identical_proposal_always_accepted() {
        let (counts, data, cores) = two_cells();
        let mut rng = stream(9, 0, 0);
        for _ in 0..100 {
            let (b, acc) = mh_accept_beta(&[0.2, 0.1], &[0.2, 0.1], &counts, &data, &cores, 1.0, &mut rng).unwrap();
            assert!(acc);
            assert_eq!(b, vec![0.2, 0.1]);
        }
    }

    #[test]
    fn better_likelihood_with_flat_prior_accepted() {
        let dims = Dims::new(1, 1, 1);
        let counts = CountTensor::new(dims, vec![10]).unwrap();
        let data = DesignData::new(dims, 1, vec![1.0], vec![1.0]).unwrap();
        let cores = TTCores::constant(dims, Ranks::new(1, 1), 1.0).unwrap();
        let mut rng = stream(10, 0, 0);
        // moving from log(1) towards log(10) raises the likelihood
        for _ in 0..100 {
            let (_, acc) = mh_accept_beta(&[0.0], &[10f64.ln()], &counts, &data, &cores, 1e12, &mut rng).unwrap();
            assert!(acc);
        }
    }

    #[test]
    fn overflowing_proposal_rejected() {
        let (counts, data, cores) = two_cells();
        let mut rng = stream(11, 0, 0);
        let (b, acc) = mh_accept_beta(&[0.0, 0.0], &[900.0, 0.0], &counts, &data, &cores, 1e6, &mut rng).unwrap();
        assert!(!acc);
        assert_eq!(b, vec![0.0, 0.0]);
    }
}
