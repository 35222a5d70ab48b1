use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::glm::{fit_glm, GlmFit};
use crate::math::ln_factorial;
use crate::rng::{self, CellStreams, ChainRng};
use crate::tensor::{check_beta, CountTensor, DesignData, Dims, Ranks, TTCores};

use super::adaptive::{accept_from_ratio, loglik_kernel, propose_beta, AdaptState};
use super::conditionals::GammaParams;
use super::exposure::{exposure1, exposure2, exposure3};
use super::{allocate_latent, update_core1, update_core2, update_core3, PriorConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McmcConfig {
    pub iterations: usize,
    pub burnin: usize,
    pub thin: usize,
    pub p_mix: f64,
    /// Iterations that use only the fixed proposal; `None` means `2 * P`.
    pub adapt_warmup: Option<usize>,
    /// Keep the cores at their initial values (regression-only sampling).
    pub update_cores: bool,
}

impl McmcConfig {
    /// Run length of the artificial-truth simulation study.
    pub const fn simulation() -> Self {
        Self {
            iterations: 10_000,
            burnin: 3_000,
            thin: 1,
            p_mix: 0.05,
            adapt_warmup: None,
            update_cores: true,
        }
    }

    /// Run length used for the full-size application.
    pub const fn data_scale() -> Self {
        Self {
            iterations: 40_000,
            ..Self::simulation()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if self.burnin > self.iterations {
            return Err(Error::Config(format!(
                "burnin ({}) exceeds iterations ({})",
                self.burnin, self.iterations
            )));
        }
        if !(self.p_mix > 0.0 && self.p_mix < 1.0) {
            return Err(Error::Config(format!("p_mix must lie in (0, 1), got {}", self.p_mix)));
        }
        Ok(())
    }

    /// Number of retained draws, `floor((iterations - burnin) / thin)`.
    pub fn retained(&self) -> usize {
        self.iterations.saturating_sub(self.burnin) / self.thin.max(1)
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration > self.burnin && (iteration - self.burnin).is_multiple_of(self.thin)
    }
}

impl Default for McmcConfig {
    fn default() -> Self {
        Self::simulation()
    }
}

/// Starting point of a chain. `beta` always defaults to the GLM estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    /// GLM coefficients, cores drawn from their priors.
    Prior,
    Given {
        beta: Vec<f64>,
        cores: TTCores,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub beta: Vec<f64>,
    pub cores: TTCores,
    pub adapt: AdaptState,
    pub rng: ChainRng,
    pub seed: u64,
    pub iter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainOutput {
    pub dims: Dims,
    pub ranks: Ranks,
    pub p: usize,
    pub config: McmcConfig,
    pub seed: u64,
    /// Retained draws, `draws x P`.
    pub beta_draws: Vec<f64>,
    pub core1_draws: Vec<f64>,
    pub core2_draws: Vec<f64>,
    pub core3_draws: Vec<f64>,
    /// Log-likelihood (including `ln y!`) after every iteration.
    pub loglik_trace: Vec<f64>,
    pub accepted: usize,
    pub accepted_post_warmup: usize,
    pub steps_post_warmup: usize,
    pub final_state: ChainState,
}

impl ChainOutput {
    pub fn n_draws(&self) -> usize {
        self.core1_draws.len() / (self.dims.n * self.ranks.h1)
    }

    pub fn beta_draw(&self, d: usize) -> &[f64] {
        &self.beta_draws[d * self.p..(d + 1) * self.p]
    }

    pub fn cores_draw(&self, d: usize) -> TTCores {
        let l1 = self.dims.n * self.ranks.h1;
        let l2 = self.dims.t * self.ranks.components();
        let l3 = self.dims.k * self.ranks.h2;
        TTCores::new(
            self.dims,
            self.ranks,
            self.core1_draws[d * l1..(d + 1) * l1].to_vec(),
            self.core2_draws[d * l2..(d + 1) * l2].to_vec(),
            self.core3_draws[d * l3..(d + 1) * l3].to_vec(),
        )
        .expect("retained cores are positive")
    }

    /// Overall acceptance rate of the `beta` step.
    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.config.iterations.max(1) as f64
    }

    /// Acceptance rate over steps taken after the fixed-proposal warm-up.
    pub fn acceptance_rate_post_warmup(&self) -> f64 {
        self.accepted_post_warmup as f64 / self.steps_post_warmup.max(1) as f64
    }

    fn column_means(draws: &[f64], width: usize, fallback: &[f64]) -> Vec<f64> {
        let n = draws.len().checked_div(width).unwrap_or(0);
        if n == 0 {
            return fallback.to_vec();
        }
        let mut m = alloc::vec![0.0; width];
        for row in draws.chunks_exact(width) {
            m.iter_mut().zip(row).for_each(|(a, b)| *a += b);
        }
        m.iter_mut().for_each(|v| *v /= n as f64);
        m
    }

    /// Posterior mean of `beta`; the final state when nothing was retained.
    pub fn posterior_mean_beta(&self) -> Vec<f64> {
        Self::column_means(&self.beta_draws, self.p, &self.final_state.beta)
    }

    /// Entrywise posterior means of the cores; the final state when nothing
    /// was retained.
    pub fn posterior_mean_cores(&self) -> TTCores {
        let fin = &self.final_state.cores;
        TTCores::new(
            self.dims,
            self.ranks,
            Self::column_means(&self.core1_draws, fin.core1().len(), fin.core1()),
            Self::column_means(&self.core2_draws, fin.core2().len(), fin.core2()),
            Self::column_means(&self.core3_draws, fin.core3().len(), fin.core3()),
        )
        .expect("means of positive draws are positive")
    }
}

/// Fits the GLM for the starting `beta` and fixed proposal covariance, draws
/// the cores from their priors and runs the sampler.
pub fn run_chain(
    counts: &CountTensor,
    data: &DesignData,
    ranks: Ranks,
    prior: &PriorConfig,
    config: &McmcConfig,
    seed: u64,
) -> Result<ChainOutput> {
    let glm = fit_glm(counts, data)?;
    run_chain_from(counts, data, ranks, prior, config, seed, &glm, Init::Prior)
}

#[allow(clippy::too_many_arguments)]
pub fn run_chain_from(
    counts: &CountTensor,
    data: &DesignData,
    ranks: Ranks,
    prior: &PriorConfig,
    config: &McmcConfig,
    seed: u64,
    glm: &GlmFit,
    init: Init,
) -> Result<ChainOutput> {
    prior.validate()?;
    config.validate()?;
    let dims = data.dims();
    if counts.dims() != dims {
        return Err(Error::Shape {
            what: "count cells",
            expected: dims.cells(),
            found: counts.dims().cells(),
        });
    }
    if dims.cells() == 0 {
        return Err(Error::NoActiveCells);
    }
    if ranks.h1 == 0 || ranks.h2 == 0 {
        return Err(Error::Config("ranks must be positive".into()));
    }
    for cell in 0..dims.cells() {
        let y = counts.as_slice()[cell];
        if data.offset(cell) == 0.0 && y > 0 {
            return Err(Error::ImpossibleStructuralZero {
                cell: dims.unravel(cell),
                count: y,
            });
        }
    }
    let p = data.p();
    let mut rng = rng::stream(seed, rng::tag::CHAIN, 0);
    let (beta, cores) = match init {
        Init::Prior => (glm.beta_hat.clone(), draw_prior_cores(dims, ranks, prior, &mut rng)?),
        Init::Given { beta, cores } => {
            if cores.dims() != dims || cores.ranks() != ranks {
                return Err(Error::Config("initial cores do not match dims/ranks".into()));
            }
            (beta, cores)
        }
    };
    check_beta(data, &beta)?;
    let warmup = config.adapt_warmup.unwrap_or(2 * p);
    let adapt = AdaptState::new(glm.covariance.clone(), config.p_mix, warmup)?;
    let mut state = ChainState {
        beta,
        cores,
        adapt,
        rng,
        seed,
        iter: 0,
    };

    let log_fact: f64 = counts.as_slice().iter().map(|&y| ln_factorial(y)).sum();
    let retained = config.retained();
    let mut out = ChainOutput {
        dims,
        ranks,
        p,
        config: *config,
        seed,
        beta_draws: Vec::with_capacity(retained * p),
        core1_draws: Vec::with_capacity(retained * state.cores.core1().len()),
        core2_draws: Vec::with_capacity(retained * state.cores.core2().len()),
        core3_draws: Vec::with_capacity(retained * state.cores.core3().len()),
        loglik_trace: Vec::with_capacity(config.iterations),
        accepted: 0,
        accepted_post_warmup: 0,
        steps_post_warmup: 0,
        final_state: state.clone(),
    };

    for iteration in 1..=config.iterations {
        state.iter = iteration;
        let ll = sweep(&mut state, counts, data, prior, config, &mut out).map_err(|e| e.at_iteration(iteration))?;
        out.loglik_trace.push(ll - log_fact);
        if config.keeps(iteration) {
            out.beta_draws.extend_from_slice(&state.beta);
            out.core1_draws.extend_from_slice(state.cores.core1());
            out.core2_draws.extend_from_slice(state.cores.core2());
            out.core3_draws.extend_from_slice(state.cores.core3());
        }
    }
    out.final_state = state;
    Ok(out)
}

fn draw_prior_cores(dims: Dims, ranks: Ranks, prior: &PriorConfig, rng: &mut ChainRng) -> Result<TTCores> {
    let mut draw = |len: usize, shape: f64, rate: f64| {
        let g = GammaParams { shape, rate };
        (0..len).map(|_| g.sample(rng)).collect::<Vec<_>>()
    };
    let c1 = draw(dims.n * ranks.h1, prior.alpha_a, prior.alpha_b);
    let c2 = draw(dims.t * ranks.components(), prior.beta_a, prior.beta_b);
    let c3 = draw(dims.k * ranks.h2, prior.eps_a, prior.eps_b);
    TTCores::new(dims, ranks, c1, c2, c3)
}

/// One full scan; returns the log-likelihood kernel at the new state.
fn sweep(
    state: &mut ChainState,
    counts: &CountTensor,
    data: &DesignData,
    prior: &PriorConfig,
    config: &McmcConfig,
    out: &mut ChainOutput,
) -> Result<f64> {
    if config.update_cores {
        let weights = data.exposure_weights(&state.beta)?;
        let streams = CellStreams::new(state.seed, state.iter as u64);
        let stats = allocate_latent(counts, &state.cores, &streams)?;
        let e1 = exposure1(&weights, &state.cores)?;
        update_core1(&mut state.cores, &stats, &e1, prior, &mut state.rng)?;
        let e2 = exposure2(&weights, &state.cores)?;
        update_core2(&mut state.cores, &stats, &e2, prior, &mut state.rng)?;
        let e3 = exposure3(&weights, &state.cores)?;
        update_core3(&mut state.cores, &stats, &e3, prior, &mut state.rng)?;
    }

    let rates = state.cores.rate_tensor();
    let post_warmup = state.adapt.n >= state.adapt.warmup;
    let proposal = propose_beta(&mut state.adapt, &state.beta, &mut state.rng);
    let current_ll = match loglik_kernel(&state.beta, counts, data, &rates) {
        Some(v) => v,
        None => return Err(first_bad_cell(data, &state.beta)),
    };
    let proposal_ll = loglik_kernel(&proposal.beta, counts, data, &rates);
    let ratio = proposal_ll
        .map(|pl| pl - current_ll + log_prior(&proposal.beta, prior.sigma2) - log_prior(&state.beta, prior.sigma2));
    let accepted = accept_from_ratio(ratio, &mut state.rng);
    let ll = if accepted {
        state.beta = proposal.beta;
        out.accepted += 1;
        state.adapt.accepts += 1;
        proposal_ll.unwrap_or(current_ll)
    } else {
        current_ll
    };
    if post_warmup {
        out.steps_post_warmup += 1;
        out.accepted_post_warmup += accepted as usize;
    }
    state.adapt.update(&state.beta);
    Ok(ll)
}

fn log_prior(beta: &[f64], sigma2: f64) -> f64 {
    -beta.iter().map(|b| b * b).sum::<f64>() / (2.0 * sigma2)
}

fn first_bad_cell(data: &DesignData, beta: &[f64]) -> Error {
    match data.exposure_weights(beta) {
        Err(e) => e,
        Ok(_) => Error::Config("non-finite log-likelihood at the current state".into()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;
    use alloc::vec;

    fn tiny() -> (CountTensor, DesignData) {
        let dims = Dims::new(2, 3, 2);
        let y = vec![1, 0, 3, 2, 5, 1, 0, 2, 4, 1, 2, 3];
        let x: Vec<f64> = (0..12).flat_map(|c| [1.0, (c as f64 * 0.37).sin()]).collect();
        (
            CountTensor::new(dims, y).unwrap(),
            DesignData::new(dims, 2, x, vec![1.5; 12]).unwrap(),
        )
    }

    #[test]
    fn retained_draw_count() {
        let (y, d) = tiny();
        let cfg = McmcConfig {
            iterations: 10,
            burnin: 3,
            thin: 1,
            ..McmcConfig::simulation()
        };
        let out = run_chain(&y, &d, Ranks::new(2, 2), &PriorConfig::simulation(), &cfg, 1).unwrap();
        assert_eq!(out.n_draws(), 7);
        assert_eq!(out.loglik_trace.len(), 10);
        let cfg = McmcConfig {
            iterations: 20,
            burnin: 5,
            thin: 4,
            ..cfg
        };
        assert_eq!(cfg.retained(), 3);
        let out = run_chain(&y, &d, Ranks::new(2, 2), &PriorConfig::simulation(), &cfg, 1).unwrap();
        assert_eq!(out.n_draws(), 3);
    }

    #[test]
    fn same_seed_same_output() {
        let (y, d) = tiny();
        let cfg = McmcConfig {
            iterations: 200,
            burnin: 50,
            ..McmcConfig::simulation()
        };
        let a = run_chain(&y, &d, Ranks::new(2, 2), &PriorConfig::simulation(), &cfg, 42).unwrap();
        let b = run_chain(&y, &d, Ranks::new(2, 2), &PriorConfig::simulation(), &cfg, 42).unwrap();
        assert_eq!(a, b);
        let c = run_chain(&y, &d, Ranks::new(2, 2), &PriorConfig::simulation(), &cfg, 43).unwrap();
        assert_ne!(a.beta_draws, c.beta_draws);
    }

    #[test]
    fn invalid_config_rejected() {
        let (y, d) = tiny();
        let cfg = McmcConfig {
            iterations: 5,
            burnin: 6,
            ..McmcConfig::simulation()
        };
        assert!(matches!(
            run_chain(&y, &d, Ranks::new(1, 1), &PriorConfig::simulation(), &cfg, 1),
            Err(Error::Config(_))
        ));
        let cfg = McmcConfig {
            thin: 0,
            burnin: 1,
            ..cfg
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_iterations_keep_initial_state() {
        let (y, d) = tiny();
        let glm = fit_glm(&y, &d).unwrap();
        let cores = TTCores::constant(d.dims(), Ranks::new(1, 2), 0.3).unwrap();
        let cfg = McmcConfig {
            iterations: 0,
            burnin: 0,
            ..McmcConfig::simulation()
        };
        let init = Init::Given {
            beta: vec![0.1, 0.2],
            cores: cores.clone(),
        };
        let out = run_chain_from(
            &y,
            &d,
            Ranks::new(1, 2),
            &PriorConfig::simulation(),
            &cfg,
            3,
            &glm,
            init,
        )
        .unwrap();
        assert_eq!(out.n_draws(), 0);
        assert_eq!(out.posterior_mean_beta(), vec![0.1, 0.2]);
        assert_eq!(out.posterior_mean_cores(), cores);
    }

    #[test]
    fn frozen_cores_stay_put() {
        let (y, d) = tiny();
        let glm = fit_glm(&y, &d).unwrap();
        let cores = TTCores::constant(d.dims(), Ranks::new(1, 1), 1.0).unwrap();
        let cfg = McmcConfig {
            iterations: 50,
            burnin: 10,
            update_cores: false,
            ..McmcConfig::simulation()
        };
        let init = Init::Given {
            beta: glm.beta_hat.clone(),
            cores: cores.clone(),
        };
        let out = run_chain_from(
            &y,
            &d,
            Ranks::new(1, 1),
            &PriorConfig::simulation(),
            &cfg,
            3,
            &glm,
            init,
        )
        .unwrap();
        assert_eq!(out.final_state.cores, cores);
        assert!(out.core1_draws.iter().all(|v| *v == 1.0));
    }
}
