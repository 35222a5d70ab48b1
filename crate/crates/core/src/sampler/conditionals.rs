use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::tensor::TTCores;

use super::{LatentStats, PriorConfig};

/// Shape/rate gamma parameters (mean `shape / rate`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn ln_pdf(&self, x: f64) -> f64 {
        crate::math::gamma_ln_pdf(x, self.shape, self.rate)
    }

    /// Draws are floored at the smallest positive normal so cores stay positive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let g = Gamma::new(self.shape, 1.0 / self.rate).expect("gamma parameters are positive and finite");
        g.sample(rng).max(f64::MIN_POSITIVE)
    }
}

fn conditionals(
    what: &'static str,
    stats: &[u64],
    exposure: &[f64],
    shape: f64,
    rate: f64,
) -> Result<Vec<GammaParams>> {
    if stats.len() != exposure.len() {
        return Err(Error::Shape {
            what,
            expected: stats.len(),
            found: exposure.len(),
        });
    }
    stats
        .iter()
        .zip(exposure)
        .enumerate()
        .map(|(index, (&s, &e))| {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::InvalidValue { what, index, value: e });
            }
            Ok(GammaParams {
                shape: shape + s as f64,
                rate: rate + e,
            })
        })
        .collect()
}

/// `Ga(alpha_a + s1[i,h1], alpha_b + E1[i,h1])` for every core-1 entry.
pub fn core1_conditionals(stats: &LatentStats, e1: &[f64], prior: &PriorConfig) -> Result<Vec<GammaParams>> {
    conditionals("core1 exposure", &stats.s1, e1, prior.alpha_a, prior.alpha_b)
}

/// `Ga(beta_a + s2[t,h1,h2], beta_b + E2[t,h1,h2])`.
pub fn core2_conditionals(stats: &LatentStats, e2: &[f64], prior: &PriorConfig) -> Result<Vec<GammaParams>> {
    conditionals("core2 exposure", &stats.s2, e2, prior.beta_a, prior.beta_b)
}

/// `Ga(eps_a + s3[k,h2], eps_b + E3[k,h2])`.
pub fn core3_conditionals(stats: &LatentStats, e3: &[f64], prior: &PriorConfig) -> Result<Vec<GammaParams>> {
    conditionals("core3 exposure", &stats.s3, e3, prior.eps_a, prior.eps_b)
}

fn redraw<R: Rng + ?Sized>(dst: &mut [f64], params: &[GammaParams], rng: &mut R) {
    for (v, g) in dst.iter_mut().zip(params) {
        *v = g.sample(rng);
    }
}

pub fn update_core1<R: Rng + ?Sized>(
    cores: &mut TTCores,
    stats: &LatentStats,
    e1: &[f64],
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<()> {
    let params = core1_conditionals(stats, e1, prior)?;
    redraw(cores.core1_mut(), &params, rng);
    Ok(())
}

pub fn update_core2<R: Rng + ?Sized>(
    cores: &mut TTCores,
    stats: &LatentStats,
    e2: &[f64],
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<()> {
    let params = core2_conditionals(stats, e2, prior)?;
    redraw(cores.core2_mut(), &params, rng);
    Ok(())
}

pub fn update_core3<R: Rng + ?Sized>(
    cores: &mut TTCores,
    stats: &LatentStats,
    e3: &[f64],
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<()> {
    let params = core3_conditionals(stats, e3, prior)?;
    redraw(cores.core3_mut(), &params, rng);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::tensor::{Dims, Ranks};

    fn mean_of_draws(g: GammaParams, n: usize, seed: u64) -> (f64, f64) {
        let mut rng = stream(seed, 0, 0);
        let draws: Vec<f64> = (0..n).map(|_| g.sample(&mut rng)).collect();
        let m = draws.iter().sum::<f64>() / n as f64;
        (m, (g.shape / (g.rate * g.rate) / n as f64).sqrt())
    }

    #[test]
    fn zero_data_recovers_prior() {
        let prior = PriorConfig::simulation();
        let stats = LatentStats::zeros(1, 1, 1, 1, 1);
        let params = core1_conditionals(&stats, &[0.0], &prior).unwrap();
        assert_eq!(params[0], GammaParams { shape: 1.0, rate: 1.0 });
        let (m, se) = mean_of_draws(params[0], 100_000, 3);
        assert!((m - 1.0).abs() < 3.0 * se);
    }

    #[test]
    fn posterior_mean_shape_over_rate() {
        let g = GammaParams { shape: 4.0, rate: 2.0 };
        let (m, se) = mean_of_draws(g, 100_000, 4);
        assert!((m - 2.0).abs() < 3.0 * se);
    }

    #[test]
    fn update_writes_the_right_family() {
        let dims = Dims::new(1, 1, 1);
        let mut cores = TTCores::constant(dims, Ranks::new(1, 1), 1.0).unwrap();
        let mut stats = LatentStats::zeros(1, 1, 1, 1, 1);
        stats.s3[0] = 1_000_000;
        let prior = PriorConfig::simulation();
        let mut rng = stream(1, 0, 0);
        update_core3(&mut cores, &stats, &[1000.0], &prior, &mut rng).unwrap();
        assert_eq!(cores.core1(), &[1.0]);
        assert!((cores.core3()[0] - 1000.0).abs() < 5.0);
    }

    #[test]
    fn negative_exposure_rejected() {
        let stats = LatentStats::zeros(1, 1, 1, 1, 1);
        assert!(core2_conditionals(&stats, &[-1.0], &PriorConfig::simulation()).is_err());
    }
}
