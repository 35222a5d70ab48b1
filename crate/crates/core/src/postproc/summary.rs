use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::sampler::{ChainOutput, PriorConfig};

use super::quantile_sorted;

pub const QUANTILE_RULE: &str = "type7";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSummary {
    pub mean: f64,
    pub sd: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Sign of an effect judged by whether its credible interval excludes zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Effect {
    Positive,
    Negative,
    Null,
}

impl Effect {
    pub fn classify(s: &ParamSummary) -> Self {
        if s.lo > 0.0 {
            Effect::Positive
        } else if s.hi < 0.0 {
            Effect::Negative
        } else {
            Effect::Null
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Effect::Positive => "positive",
            Effect::Negative => "negative",
            Effect::Null => "null",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub level: f64,
    pub quantile_rule: &'static str,
    pub draws: usize,
    pub beta: Vec<ParamSummary>,
    pub effects: Vec<Effect>,
    pub core1: Vec<ParamSummary>,
    pub core2: Vec<ParamSummary>,
    pub core3: Vec<ParamSummary>,
    /// Prior means of the three core families, for reference lines.
    pub prior_means: Option<[f64; 3]>,
}

impl PosteriorSummary {
    pub fn with_prior(mut self, prior: &PriorConfig) -> Self {
        self.prior_means = Some(prior.core_means());
        self
    }
}

/// Column-wise mean, sd and equal-tailed interval of row-major draws.
pub fn summarize_columns(draws: &[f64], width: usize, level: f64) -> Result<Vec<ParamSummary>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::Config(alloc::format!(
            "credible level must lie in (0, 1), got {level}"
        )));
    }
    let n = draws.len().checked_div(width).unwrap_or(0);
    if n < 2 {
        return Err(Error::TooFewDraws { needed: 2, found: n });
    }
    let tail = 0.5 * (1.0 - level);
    let mut column = Vec::with_capacity(n);
    Ok((0..width)
        .map(|j| {
            column.clear();
            column.extend(draws.iter().skip(j).step_by(width).copied());
            let mean = column.iter().sum::<f64>() / n as f64;
            let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
            column.sort_by(f64::total_cmp);
            ParamSummary {
                mean,
                sd: libm::sqrt(var),
                lo: quantile_sorted(&column, tail),
                hi: quantile_sorted(&column, 1.0 - tail),
            }
        })
        .collect())
}

/// Posterior summaries of every parameter at the given credible level.
pub fn summarize(chain: &ChainOutput, level: f64) -> Result<PosteriorSummary> {
    let beta = summarize_columns(&chain.beta_draws, chain.p, level)?;
    let effects = beta.iter().map(Effect::classify).collect();
    let w1 = chain.dims.n * chain.ranks.h1;
    let w2 = chain.dims.t * chain.ranks.components();
    let w3 = chain.dims.k * chain.ranks.h2;
    Ok(PosteriorSummary {
        level,
        quantile_rule: QUANTILE_RULE,
        draws: chain.n_draws(),
        effects,
        core1: summarize_columns(&chain.core1_draws, w1, level)?,
        core2: summarize_columns(&chain.core2_draws, w2, level)?,
        core3: summarize_columns(&chain.core3_draws, w3, level)?,
        beta,
        prior_means: None,
    })
}
