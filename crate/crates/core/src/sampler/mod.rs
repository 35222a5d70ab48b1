//! Metropolis-within-Gibbs sampler.
//!
//! Each sweep allocates every observed count across the `H1 * H2` latent
//! components, redraws the three cores from their gamma full conditionals
//! (in the order core 1, core 2, core 3, with exposures recomputed from the
//! freshest values before each family), and finally takes one adaptive
//! Metropolis-Hastings step for `beta`.

mod adaptive;
mod chain;
mod conditionals;
mod exposure;
mod latent;

pub use adaptive::{
    log_acceptance_ratio, mh_accept_beta, propose_beta, update_adaptation, AdaptState, Proposal, ProposalComponent,
    ADAPTIVE_SCALE, FIXED_SCALE,
};
pub use chain::{run_chain, run_chain_from, ChainOutput, ChainState, Init, McmcConfig};
pub use conditionals::{
    core1_conditionals, core2_conditionals, core3_conditionals, update_core1, update_core2, update_core3, GammaParams,
};
pub use exposure::{exposure1, exposure2, exposure3, exposure_sums, Exposures};
pub use latent::{allocate_latent, compute_pi, multinomial_split, LatentStats};

use crate::error::{Error, Result};
use alloc::format;

/// Gamma priors (shape, rate) on the three core families and the normal
/// prior variance on each regression coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorConfig {
    pub alpha_a: f64,
    pub alpha_b: f64,
    pub beta_a: f64,
    pub beta_b: f64,
    pub eps_a: f64,
    pub eps_b: f64,
    pub sigma2: f64,
}

impl PriorConfig {
    /// Hyperparameters of the small artificial-truth simulation study.
    pub const fn simulation() -> Self {
        Self {
            alpha_a: 1.0,
            alpha_b: 1.0,
            beta_a: 1.0,
            beta_b: 2.0,
            eps_a: 1.0,
            eps_b: 1.0,
            sigma2: 0.1,
        }
    }

    /// Hyperparameters used for the mortality application: rate 20 and mean
    /// `sqrt(1 / (H1 * H2))` for cores 1 and 2, `Ga(200, 200)` for core 3.
    pub fn data_scale(h1: usize, h2: usize) -> Self {
        let shape = libm::sqrt(1.0 / (h1 * h2) as f64) * 20.0;
        Self {
            alpha_a: shape,
            alpha_b: 20.0,
            beta_a: shape,
            beta_b: 20.0,
            eps_a: 200.0,
            eps_b: 200.0,
            sigma2: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("alpha_a", self.alpha_a),
            ("alpha_b", self.alpha_b),
            ("beta_a", self.beta_a),
            ("beta_b", self.beta_b),
            ("eps_a", self.eps_a),
            ("eps_b", self.eps_b),
            ("sigma2", self.sigma2),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("prior {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Prior means of the three core families.
    pub fn core_means(&self) -> [f64; 3] {
        [
            self.alpha_a / self.alpha_b,
            self.beta_a / self.beta_b,
            self.eps_a / self.eps_b,
        ]
    }
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self::simulation()
    }
}
