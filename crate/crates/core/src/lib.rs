//! Bayesian Poisson regression with a tensor-train residual rate.
//!
//! Counts `Y[i,t,k]` on a dense three-way grid are modelled as
//!
//! ```text
//! Y[i,t,k] ~ Poisson( u[i,t,k] * exp(x[i,t,k] . beta) * rate[i,t,k] )
//! rate[i,t,k] = sum_{h1,h2} core1[i,h1] * core2[t,h1,h2] * core3[k,h2]
//! ```
//!
//! with gamma priors on the three tensor-train cores and a zero-mean normal
//! prior on `beta`. The crate provides the deterministic model arithmetic
//! ([`tensor`]), a Poisson GLM baseline fitted by IRLS ([`glm`]), the
//! Metropolis-within-Gibbs sampler ([`sampler`]), a synthetic-data harness
//! ([`simgen`]) and posterior post-processing ([`postproc`]).
//!
//! The crate is `no_std` (with `alloc`) when built without default features.
//! The `parallel` feature fans per-cell work out over rayon; results are
//! bit-identical for any number of worker threads.

#![cfg_attr(not(feature = "std"), no_std)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod glm;
pub mod linalg;
pub mod math;
mod par;
pub mod postproc;
pub mod rng;
pub mod sampler;
pub mod simgen;
pub mod tensor;

pub use error::{Error, Result};
pub use glm::{fit_glm, loglik_poisson, GlmFit, LogLikelihood};
pub use sampler::{run_chain, run_chain_from, ChainOutput, Init, McmcConfig, PriorConfig};
pub use tensor::{param_count, CountTensor, DesignData, Dims, Ranks, TTCores};
