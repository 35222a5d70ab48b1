//! Synthetic data sets for parameter-recovery studies and the absolute
//! percentage error (APE) summaries used to score them.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use crate::error::{Error, Result};
use crate::glm::fit_glm;
use crate::postproc::quantile_sorted;
use crate::rng::{self, ChainRng};
use crate::sampler::{run_chain_from, GammaParams, Init, McmcConfig, PriorConfig};
use crate::tensor::{CountTensor, DesignData, Dims, Ranks, TTCores};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimDesign {
    pub dims: Dims,
    pub ranks: Ranks,
    /// Number of random covariates, not counting the intercept.
    pub p: usize,
    pub intercept: bool,
    /// Mean and variance of the normal law for `beta`.
    pub beta_law: (f64, f64),
    /// Shape and rate of the gamma law for the entries of each core family.
    pub core_laws: [(f64, f64); 3],
    /// Standard deviation of the zero-mean normal covariates.
    pub covariate_sd: f64,
    /// Shape and rate of the gamma law for offsets.
    pub offset_law: (f64, f64),
    pub replications: usize,
    /// Draw the true parameters once and share them across replications;
    /// otherwise each replication draws its own.
    pub shared_truth: bool,
    pub seed: u64,
}

impl SimDesign {
    /// Artificial-truth design: `N = T = K = 20`, ranks `(5, 5)`, intercept
    /// plus five covariates, `beta ~ N(0, 0.1)`, cores `~ Ga(1, 2.8)`,
    /// offsets `~ Ga(5, 1)`, 100 replications.
    pub const fn artificial(seed: u64) -> Self {
        Self {
            dims: Dims::new(20, 20, 20),
            ranks: Ranks::new(5, 5),
            p: 5,
            intercept: true,
            beta_law: (0.0, 0.1),
            core_laws: [(1.0, 2.8); 3],
            covariate_sd: 1.0,
            offset_law: (5.0, 1.0),
            replications: 100,
            shared_truth: true,
            seed,
        }
    }

    /// Large-exposure design: offsets `~ Ga(1e6, 1)` at the application's
    /// size. The true cores are synthetic stand-ins drawn from the data-scale
    /// priors.
    pub fn large_exposure(seed: u64) -> Self {
        let prior = PriorConfig::data_scale(6, 6);
        Self {
            dims: Dims::new(420, 72, 18),
            ranks: Ranks::new(6, 6),
            core_laws: [
                (prior.alpha_a, prior.alpha_b),
                (prior.beta_a, prior.beta_b),
                (prior.eps_a, prior.eps_b),
            ],
            offset_law: (1e6, 1.0),
            replications: 1,
            ..Self::artificial(seed)
        }
    }

    /// Total number of regression coefficients.
    pub fn n_coefficients(&self) -> usize {
        self.p + self.intercept as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("core1 law shape", self.core_laws[0].0),
            ("core1 law rate", self.core_laws[0].1),
            ("core2 law shape", self.core_laws[1].0),
            ("core2 law rate", self.core_laws[1].1),
            ("core3 law shape", self.core_laws[2].0),
            ("core3 law rate", self.core_laws[2].1),
            ("offset_law shape", self.offset_law.0),
            ("offset_law rate", self.offset_law.1),
        ];
        for (what, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(alloc::format!("{what} must be positive, got {v}")));
            }
        }
        if !(self.beta_law.1 >= 0.0) || !(self.covariate_sd >= 0.0) {
            return Err(Error::Config("variances must be non-negative".into()));
        }
        if self.dims.cells() == 0 || self.ranks.components() == 0 {
            return Err(Error::Config("dimensions and ranks must be positive".into()));
        }
        if self.n_coefficients() == 0 {
            return Err(Error::Config("design has no coefficients".into()));
        }
        Ok(())
    }
}

/// Parameters of one model fit, flattened by family.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub beta: Vec<f64>,
    pub cores: TTCores,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimData {
    pub truth: ParamSet,
    pub data: DesignData,
    pub counts: CountTensor,
}

fn normal_draws(rng: &mut ChainRng, len: usize, mean: f64, sd: f64) -> Vec<f64> {
    if sd == 0.0 {
        return vec![mean; len];
    }
    let law = Normal::new(mean, sd).expect("finite sd");
    (0..len).map(|_| law.sample(rng)).collect()
}

fn gamma_draws(rng: &mut ChainRng, len: usize, (shape, rate): (f64, f64)) -> Vec<f64> {
    let g = GammaParams { shape, rate };
    (0..len).map(|_| g.sample(rng)).collect()
}

fn draw_truth(design: &SimDesign, rng: &mut ChainRng) -> Result<ParamSet> {
    let beta = normal_draws(
        rng,
        design.n_coefficients(),
        design.beta_law.0,
        libm::sqrt(design.beta_law.1),
    );
    let Dims { n, t, k } = design.dims;
    let Ranks { h1, h2 } = design.ranks;
    let cores = TTCores::new(
        design.dims,
        design.ranks,
        gamma_draws(rng, n * h1, design.core_laws[0]),
        gamma_draws(rng, t * h1 * h2, design.core_laws[1]),
        gamma_draws(rng, k * h2, design.core_laws[2]),
    )?;
    Ok(ParamSet { beta, cores })
}

/// Draws one replication: truth, covariates, offsets and Poisson counts.
pub fn generate(design: &SimDesign, replication: usize) -> Result<SimData> {
    design.validate()?;
    let truth = if design.shared_truth {
        draw_truth(design, &mut rng::stream(design.seed, rng::tag::SIM_TRUTH, 0))?
    } else {
        draw_truth(
            design,
            &mut rng::stream(design.seed, rng::tag::SIM_TRUTH, replication as u64 + 1),
        )?
    };
    let mut rng = rng::stream(design.seed, rng::tag::SIM_DATA, replication as u64);
    let cells = design.dims.cells();
    let p = design.n_coefficients();
    let random = normal_draws(&mut rng, cells * design.p, 0.0, design.covariate_sd);
    let mut covariates = Vec::with_capacity(cells * p);
    for c in 0..cells {
        if design.intercept {
            covariates.push(1.0);
        }
        covariates.extend_from_slice(&random[c * design.p..(c + 1) * design.p]);
    }
    let offsets = gamma_draws(&mut rng, cells, design.offset_law);
    let data = DesignData::new(design.dims, p, covariates, offsets)?;
    let weights = data.exposure_weights(&truth.beta)?;
    let rates = truth.cores.rate_tensor();
    let counts = weights
        .iter()
        .zip(&rates)
        .map(|(w, l)| poisson_draw(w * l, &mut rng))
        .collect();
    let counts = CountTensor::new(design.dims, counts)?;
    Ok(SimData { truth, data, counts })
}

pub(crate) fn poisson_draw<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).map(|p| p.sample(rng) as u64).unwrap_or(0)
}

/// Six-number summary in the order Min, 1st Qu., Median, Mean, 3rd Qu., Max.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApeSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub mean: f64,
    pub q3: f64,
    pub max: f64,
    /// Elements that entered the summary.
    pub count: usize,
    /// Elements left out because the true value is (numerically) zero.
    pub excluded: usize,
}

impl ApeSummary {
    pub const COLUMNS: [&'static str; 6] = ["Min.", "1st Qu.", "Median", "Mean", "3rd Qu.", "Max."];

    pub fn values(&self) -> [f64; 6] {
        [self.min, self.q1, self.median, self.mean, self.q3, self.max]
    }
}

/// Truth magnitudes below this are excluded from APE summaries.
pub const APE_ZERO_TOL: f64 = 1e-12;

/// Elementwise `|estimate - truth| / |truth|`, skipping near-zero truths.
pub fn ape_values(truth: &[f64], estimate: &[f64]) -> Result<(Vec<f64>, usize)> {
    if truth.len() != estimate.len() {
        return Err(Error::Shape {
            what: "estimate",
            expected: truth.len(),
            found: estimate.len(),
        });
    }
    let mut excluded = 0;
    let mut out = Vec::with_capacity(truth.len());
    for (t, e) in truth.iter().zip(estimate) {
        if t.abs() < APE_ZERO_TOL {
            excluded += 1;
        } else {
            out.push((e - t).abs() / t.abs());
        }
    }
    Ok((out, excluded))
}

pub fn summarize_ape(mut values: Vec<f64>, excluded: usize) -> ApeSummary {
    if values.is_empty() {
        return ApeSummary {
            min: f64::NAN,
            q1: f64::NAN,
            median: f64::NAN,
            mean: f64::NAN,
            q3: f64::NAN,
            max: f64::NAN,
            count: 0,
            excluded,
        };
    }
    values.sort_by(f64::total_cmp);
    ApeSummary {
        min: values[0],
        q1: quantile_sorted(&values, 0.25),
        median: quantile_sorted(&values, 0.5),
        mean: values.iter().sum::<f64>() / values.len() as f64,
        q3: quantile_sorted(&values, 0.75),
        max: values[values.len() - 1],
        count: values.len(),
        excluded,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ApeReport {
    pub beta: ApeSummary,
    pub core1: ApeSummary,
    pub core2: ApeSummary,
    pub core3: ApeSummary,
}

impl ApeReport {
    pub fn rows(&self) -> [(&'static str, ApeSummary); 4] {
        [
            ("beta", self.beta),
            ("core1", self.core1),
            ("core2", self.core2),
            ("core3", self.core3),
        ]
    }
}

fn family_summary(truth: &[f64], estimate: &[f64]) -> Result<ApeSummary> {
    let (v, ex) = ape_values(truth, estimate)?;
    Ok(summarize_ape(v, ex))
}

/// APE summaries per parameter family.
pub fn score_ape(truth: &ParamSet, estimate: &ParamSet) -> Result<ApeReport> {
    if truth.cores.dims() != estimate.cores.dims() || truth.cores.ranks() != estimate.cores.ranks() {
        return Err(Error::Config("truth and estimate have different shapes".into()));
    }
    Ok(ApeReport {
        beta: family_summary(&truth.beta, &estimate.beta)?,
        core1: family_summary(truth.cores.core1(), estimate.cores.core1())?,
        core2: family_summary(truth.cores.core2(), estimate.cores.core2())?,
        core3: family_summary(truth.cores.core3(), estimate.cores.core3())?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationResult {
    pub replication: usize,
    pub truth: ParamSet,
    pub estimate: ParamSet,
    pub ape: ApeReport,
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveryReport {
    pub replications: Vec<ReplicationResult>,
    /// Cross-replication mean of the posterior means, flattened as
    /// `beta, core1, core2, core3`.
    pub mean_of_means: Vec<f64>,
    /// Cross-replication standard deviation (denominator `R - 1`, zero for one
    /// replication).
    pub sd_of_means: Vec<f64>,
}

impl ParamSet {
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = self.beta.clone();
        v.extend_from_slice(self.cores.core1());
        v.extend_from_slice(self.cores.core2());
        v.extend_from_slice(self.cores.core3());
        v
    }
}

/// Start of each chain in a recovery study.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecoveryStart {
    /// GLM coefficients and prior draws for the cores.
    Prior,
    /// The generating parameters.
    Truth,
}

/// Runs generate, sample and score for every replication and aggregates the
/// posterior means across replications.
pub fn recovery_report(
    design: &SimDesign,
    prior: &PriorConfig,
    mcmc: &McmcConfig,
    start: RecoveryStart,
) -> Result<RecoveryReport> {
    design.validate()?;
    let results = crate::par::map_range(design.replications, |r| -> Result<ReplicationResult> {
        let sim = generate(design, r)?;
        let glm = fit_glm(&sim.counts, &sim.data)?;
        let init = match start {
            RecoveryStart::Prior => Init::Prior,
            RecoveryStart::Truth => Init::Given {
                beta: sim.truth.beta.clone(),
                cores: sim.truth.cores.clone(),
            },
        };
        let seed = rng::derive_seed(design.seed, rng::tag::REPLICATION, r as u64);
        let out = run_chain_from(&sim.counts, &sim.data, design.ranks, prior, mcmc, seed, &glm, init)?;
        let estimate = ParamSet {
            beta: out.posterior_mean_beta(),
            cores: out.posterior_mean_cores(),
        };
        let ape = score_ape(&sim.truth, &estimate)?;
        Ok(ReplicationResult {
            replication: r,
            truth: sim.truth,
            estimate,
            ape,
            acceptance_rate: out.acceptance_rate_post_warmup(),
        })
    });
    let replications = results.into_iter().collect::<Result<Vec<_>>>()?;
    let flat: Vec<Vec<f64>> = replications.iter().map(|r| r.estimate.flatten()).collect();
    let width = flat.first().map_or(0, Vec::len);
    let reps = flat.len() as f64;
    let mut mean = vec![0.0; width];
    for row in &flat {
        mean.iter_mut().zip(row).for_each(|(m, v)| *m += v / reps);
    }
    let mut sd = vec![0.0; width];
    if flat.len() > 1 {
        for row in &flat {
            sd.iter_mut()
                .zip(row)
                .zip(&mean)
                .for_each(|((s, v), m)| *s += (v - m) * (v - m));
        }
        sd.iter_mut().for_each(|s| *s = libm::sqrt(*s / (reps - 1.0)));
    }
    Ok(RecoveryReport {
        replications,
        mean_of_means: mean,
        sd_of_means: sd,
    })
}
