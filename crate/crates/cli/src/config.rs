//! Run configuration: a flat `key = value` file whose keys are the field
//! names of [`RunConfig`], layered under command-line overrides.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use bprttd_core::postproc::{Metric, DEFAULT_RESTARTS};
use bprttd_core::simgen::{RecoveryStart, SimDesign};
use bprttd_core::{Dims, McmcConfig, PriorConfig, Ranks};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Fit,
    Glm,
    Simulate,
    Score,
    Cluster,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PriorPreset {
    /// Hyperparameters of the mortality application, scaled by the ranks.
    Data,
    /// Hyperparameters of the artificial-truth simulation study.
    Simulation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimPreset {
    Artificial,
    Large,
}

pub trait ConfigValue: Sized {
    fn parse_value(s: &str) -> Result<Self, String>;
    fn render_value(&self) -> String;
}

macro_rules! display_value {
    ($($t:ty),*) => {$(
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                s.parse().map_err(|e| format!("cannot parse `{s}`: {e}"))
            }
            fn render_value(&self) -> String {
                self.to_string()
            }
        }
    )*};
}
display_value!(usize, u64, f64, bool, String);

impl ConfigValue for PathBuf {
    fn parse_value(s: &str) -> Result<Self, String> {
        Ok(PathBuf::from(s))
    }
    fn render_value(&self) -> String {
        self.display().to_string()
    }
}

macro_rules! enum_value {
    ($t:ty { $($name:literal => $v:expr),* $(,)? }) => {
        impl ConfigValue for $t {
            fn parse_value(s: &str) -> Result<Self, String> {
                match s {
                    $($name => Ok($v),)*
                    _ => Err(format!("expected one of {}, got `{s}`", [$($name),*].join(", "))),
                }
            }
            fn render_value(&self) -> String {
                $(if *self == $v { return $name.to_string(); })*
                unreachable!()
            }
        }
    };
}
enum_value!(Mode { "fit" => Mode::Fit, "glm" => Mode::Glm, "simulate" => Mode::Simulate, "score" => Mode::Score, "cluster" => Mode::Cluster });
enum_value!(PriorPreset { "data" => PriorPreset::Data, "simulation" => PriorPreset::Simulation });
enum_value!(SimPreset { "artificial" => SimPreset::Artificial, "large" => SimPreset::Large });
enum_value!(RecoveryStart { "truth" => RecoveryStart::Truth, "prior" => RecoveryStart::Prior });
enum_value!(Metric { "euclidean" => Metric::Euclidean, "manhattan" => Metric::Manhattan });

macro_rules! run_config {
    ($($(#[$doc:meta])* $name:ident : $ty:ty),* $(,)?) => {
        /// Every field is optional so that files and flags can be layered;
        /// [`RunConfig::resolve`] fills in the defaults for a mode.
        #[derive(Debug, Clone, Default, PartialEq)]
        pub struct RunConfig {
            $($(#[$doc])* pub $name: Option<$ty>,)*
        }

        impl RunConfig {
            pub const KEYS: &'static [&'static str] = &[$(stringify!($name)),*];

            pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
                match key {
                    $(stringify!($name) => {
                        self.$name = Some(<$ty>::parse_value(value).map_err(|e| CliError::usage(format!("config key `{key}`: {e}")))?);
                    })*
                    _ => return Err(CliError::usage(format!("unknown config key `{key}`"))),
                }
                Ok(())
            }

            /// Overwrites fields that are set in `other`.
            pub fn merge(&mut self, other: &RunConfig) {
                $(if other.$name.is_some() {
                    self.$name = other.$name.clone();
                })*
            }

            /// Canonical `key = value` text; parsing it back gives the same config.
            pub fn render(&self) -> String {
                let mut s = String::new();
                $(if let Some(v) = &self.$name {
                    let _ = writeln!(s, "{} = {}", stringify!($name), v.render_value());
                })*
                s
            }
        }
    };
}

run_config! {
    mode: Mode,
    h1: usize,
    h2: usize,
    /// Preset the individual hyperparameters start from.
    prior: PriorPreset,
    alpha_a: f64,
    alpha_b: f64,
    beta_a: f64,
    beta_b: f64,
    eps_a: f64,
    eps_b: f64,
    sigma2: f64,
    iterations: usize,
    burnin: usize,
    thin: usize,
    p_mix: f64,
    adapt_warmup: usize,
    seed: u64,
    data: PathBuf,
    covariates: PathBuf,
    offsets: PathBuf,
    out: PathBuf,
    level: f64,
    /// `i:k` label pairs separated by `;` for the trajectory table.
    cells: String,
    threads: usize,
    sim_design: SimPreset,
    sim_n: usize,
    sim_t: usize,
    sim_k: usize,
    sim_p: usize,
    sim_offset_shape: f64,
    sim_offset_rate: f64,
    replications: usize,
    shared_truth: bool,
    recovery: bool,
    start: RecoveryStart,
    /// Directory holding `truth_beta.csv` and `truth_cores.csv`.
    truth: PathBuf,
    /// Directory holding the `summary.csv` of a fit.
    fit: PathBuf,
    regions: usize,
    genders: usize,
    ages: usize,
    /// Comma-separated candidate cluster counts.
    k: String,
    metric: Metric,
    pam_restarts: usize,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::usage(format!(
                    "config line {}: expected `key = value`",
                    n + 1
                )));
            };
            cfg.set(key.trim(), value.trim())?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text).map_err(|e| CliError::usage(format!("{}: {e}", path.display())))
    }

    /// Hex SHA-256 of the canonical rendering, leaving out `out` and
    /// `threads` since neither changes any result.
    pub fn hash(&self) -> String {
        let key = RunConfig {
            out: None,
            threads: None,
            ..self.clone()
        };
        hex::encode(Sha256::digest(key.render().as_bytes()))
    }

    /// Fills defaults for `mode` and checks the invariants, so that the
    /// rendered config is complete enough to rerun.
    pub fn resolve(mut self, mode: Mode) -> Result<Self> {
        self.mode = Some(mode);
        self.out.get_or_insert_with(|| PathBuf::from("bprttd-out"));
        match mode {
            Mode::Fit => {
                require(&self.data, "data")?;
                require(&self.seed, "seed")?;
                require(&self.h1, "h1")?;
                require(&self.h2, "h2")?;
                self.prior.get_or_insert(PriorPreset::Data);
                self.fill_mcmc(McmcConfig::data_scale());
                self.level.get_or_insert(0.95);
            }
            Mode::Glm => {
                require(&self.data, "data")?;
            }
            Mode::Simulate => {
                require(&self.seed, "seed")?;
                let base = self.base_design();
                self.sim_design.get_or_insert(SimPreset::Artificial);
                self.sim_n.get_or_insert(base.dims.n);
                self.sim_t.get_or_insert(base.dims.t);
                self.sim_k.get_or_insert(base.dims.k);
                self.sim_p.get_or_insert(base.p);
                self.h1.get_or_insert(base.ranks.h1);
                self.h2.get_or_insert(base.ranks.h2);
                self.sim_offset_shape.get_or_insert(base.offset_law.0);
                self.sim_offset_rate.get_or_insert(base.offset_law.1);
                self.replications.get_or_insert(1);
                self.shared_truth.get_or_insert(true);
                if *self.recovery.get_or_insert(false) {
                    self.prior.get_or_insert(PriorPreset::Simulation);
                    self.fill_mcmc(McmcConfig::simulation());
                    self.start.get_or_insert(RecoveryStart::Truth);
                }
            }
            Mode::Score => {
                require(&self.truth, "truth")?;
                require(&self.fit, "fit")?;
            }
            Mode::Cluster => {
                require(&self.fit, "fit")?;
                require(&self.regions, "regions")?;
                require(&self.genders, "genders")?;
                require(&self.ages, "ages")?;
                let regions = self.regions.unwrap_or(1);
                self.k.get_or_insert_with(|| {
                    (1..=regions.min(10))
                        .map(|k| k.to_string())
                        .collect::<Vec<_>>()
                        .join(",")
                });
                self.metric.get_or_insert(Metric::Euclidean);
                self.pam_restarts.get_or_insert(DEFAULT_RESTARTS);
                self.seed.get_or_insert(0);
            }
        }
        if self.threads == Some(0) {
            return Err(CliError::usage("threads must be at least 1"));
        }
        if self.iterations.is_some() {
            self.mcmc()?;
        }
        if self.prior.is_some() {
            self.prior_config()?;
        }
        if let Some(level) = self.level {
            if !(level > 0.0 && level < 1.0) {
                return Err(CliError::usage(format!("level must lie in (0, 1), got {level}")));
            }
        }
        Ok(self)
    }

    fn fill_mcmc(&mut self, base: McmcConfig) {
        self.iterations.get_or_insert(base.iterations);
        self.burnin.get_or_insert(base.burnin);
        self.thin.get_or_insert(base.thin);
        self.p_mix.get_or_insert(base.p_mix);
    }

    pub fn ranks(&self) -> Result<Ranks> {
        let h1 = require(&self.h1, "h1")?;
        let h2 = require(&self.h2, "h2")?;
        if h1 == 0 || h2 == 0 {
            return Err(CliError::usage("ranks h1 and h2 must be positive"));
        }
        Ok(Ranks::new(h1, h2))
    }

    pub fn prior_config(&self) -> Result<PriorConfig> {
        let base = match self.prior.unwrap_or(PriorPreset::Data) {
            PriorPreset::Data => {
                let r = self.ranks()?;
                PriorConfig::data_scale(r.h1, r.h2)
            }
            PriorPreset::Simulation => PriorConfig::simulation(),
        };
        let p = PriorConfig {
            alpha_a: self.alpha_a.unwrap_or(base.alpha_a),
            alpha_b: self.alpha_b.unwrap_or(base.alpha_b),
            beta_a: self.beta_a.unwrap_or(base.beta_a),
            beta_b: self.beta_b.unwrap_or(base.beta_b),
            eps_a: self.eps_a.unwrap_or(base.eps_a),
            eps_b: self.eps_b.unwrap_or(base.eps_b),
            sigma2: self.sigma2.unwrap_or(base.sigma2),
        };
        p.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(p)
    }

    pub fn mcmc(&self) -> Result<McmcConfig> {
        let cfg = McmcConfig {
            iterations: require(&self.iterations, "iterations")?,
            burnin: self.burnin.unwrap_or(0),
            thin: self.thin.unwrap_or(1),
            p_mix: self.p_mix.unwrap_or(McmcConfig::simulation().p_mix),
            adapt_warmup: self.adapt_warmup,
            update_cores: true,
        };
        if cfg.burnin >= cfg.iterations {
            return Err(CliError::usage(format!(
                "burnin ({}) must be smaller than iterations ({})",
                cfg.burnin, cfg.iterations
            )));
        }
        cfg.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(cfg)
    }

    fn base_design(&self) -> SimDesign {
        let seed = self.seed.unwrap_or(0);
        match self.sim_design.unwrap_or(SimPreset::Artificial) {
            SimPreset::Artificial => SimDesign::artificial(seed),
            SimPreset::Large => SimDesign::large_exposure(seed),
        }
    }

    pub fn sim_design(&self) -> Result<SimDesign> {
        let base = self.base_design();
        let design = SimDesign {
            dims: Dims::new(
                self.sim_n.unwrap_or(base.dims.n),
                self.sim_t.unwrap_or(base.dims.t),
                self.sim_k.unwrap_or(base.dims.k),
            ),
            ranks: self.ranks()?,
            p: self.sim_p.unwrap_or(base.p),
            offset_law: (
                self.sim_offset_shape.unwrap_or(base.offset_law.0),
                self.sim_offset_rate.unwrap_or(base.offset_law.1),
            ),
            replications: self.replications.unwrap_or(1),
            shared_truth: self.shared_truth.unwrap_or(true),
            ..base
        };
        design.validate().map_err(|e| CliError::usage(e.to_string()))?;
        Ok(design)
    }

    pub fn k_candidates(&self) -> Result<Vec<usize>> {
        let text = require(&self.k, "k")?;
        text.split(',')
            .map(|s| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| CliError::usage(format!("k: `{s}` is not a cluster count")))
            })
            .collect()
    }
}

fn require<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
    v.clone()
        .ok_or_else(|| CliError::usage(format!("missing required setting `{key}`")))
}
