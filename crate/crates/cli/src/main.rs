use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use bprttd_cli::commands;
use bprttd_cli::config::{Mode, RunConfig};
use bprttd_cli::error::{CliError, Result};

/// Bayesian Poisson regression with a tensor-train residual rate.
#[derive(Debug, Parser)]
#[command(name = "bprttd", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Fit the model by MCMC and write summaries, draws and trajectories.
    Fit {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        model: Model,
        /// Credible level of the reported intervals.
        #[arg(long)]
        level: Option<String>,
        /// Trajectory cells as `i:k` label pairs separated by `;` (default: all).
        #[arg(long)]
        cells: Option<String>,
    },
    /// Fit only the Poisson GLM baseline.
    Glm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        input: Input,
    },
    /// Generate synthetic data sets, optionally refitting each one.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        model: Model,
        /// Design preset: `artificial` or `large`.
        #[arg(long)]
        design: Option<String>,
        #[arg(long)]
        n: Option<String>,
        #[arg(long)]
        t: Option<String>,
        #[arg(long)]
        k: Option<String>,
        /// Number of non-intercept covariates.
        #[arg(long)]
        p: Option<String>,
        #[arg(long)]
        replications: Option<String>,
        /// Draw a fresh truth for every replication.
        #[arg(long)]
        independent_truth: bool,
        /// Fit every replication and write recovery and APE tables.
        #[arg(long)]
        recovery: bool,
        /// Chain start for recovery: `truth` or `prior`.
        #[arg(long)]
        start: Option<String>,
    },
    /// Compare a fit's posterior means against a simulated truth.
    Score {
        #[command(flatten)]
        common: Common,
        /// Directory with `truth_beta.csv` and `truth_cores.csv`.
        #[arg(long)]
        truth: Option<String>,
        /// Directory with the fit's `summary.csv`.
        #[arg(long)]
        fit: Option<String>,
    },
    /// Cluster regions by their core-1 posterior means (PAM).
    Cluster {
        #[command(flatten)]
        common: Common,
        /// Directory with the fit's `summary.csv`.
        #[arg(long)]
        fit: Option<String>,
        #[arg(long)]
        regions: Option<String>,
        #[arg(long)]
        genders: Option<String>,
        #[arg(long)]
        ages: Option<String>,
        /// Candidate cluster counts, comma separated.
        #[arg(long)]
        k: Option<String>,
        /// `euclidean` or `manhattan`.
        #[arg(long)]
        metric: Option<String>,
        #[arg(long)]
        restarts: Option<String>,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// `key = value` run configuration; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Worker threads (results do not depend on it).
    #[arg(long)]
    threads: Option<String>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Args)]
struct Input {
    /// Long-format CSV with columns i, t, k, count, offset*, covariates.
    #[arg(long)]
    data: Option<String>,
    /// Optional side table of covariates keyed by i, t, k.
    #[arg(long)]
    covariates: Option<String>,
    /// Optional side table of offsets keyed by i, t, k.
    #[arg(long)]
    offsets: Option<String>,
}

#[derive(Debug, Args)]
struct Model {
    #[arg(long)]
    h1: Option<String>,
    #[arg(long)]
    h2: Option<String>,
    /// Prior preset: `data` or `simulation`.
    #[arg(long)]
    prior: Option<String>,
    #[arg(long)]
    iterations: Option<String>,
    #[arg(long)]
    burnin: Option<String>,
    #[arg(long)]
    thin: Option<String>,
}

type Pairs = Vec<(&'static str, Option<String>)>;

impl Common {
    fn pairs(&self) -> Pairs {
        vec![
            ("seed", self.seed.clone()),
            ("out", self.out.clone()),
            ("threads", self.threads.clone()),
        ]
    }
}

impl Input {
    fn pairs(&self) -> Pairs {
        vec![
            ("data", self.data.clone()),
            ("covariates", self.covariates.clone()),
            ("offsets", self.offsets.clone()),
        ]
    }
}

impl Model {
    fn pairs(&self) -> Pairs {
        vec![
            ("h1", self.h1.clone()),
            ("h2", self.h2.clone()),
            ("prior", self.prior.clone()),
            ("iterations", self.iterations.clone()),
            ("burnin", self.burnin.clone()),
            ("thin", self.thin.clone()),
        ]
    }
}

fn flag(on: bool, value: &str) -> Option<String> {
    on.then(|| value.to_string())
}

fn build_config(command: Command) -> Result<RunConfig> {
    let (mode, common, mut pairs): (Mode, Common, Pairs) = match command {
        Command::Fit {
            common,
            input,
            model,
            level,
            cells,
        } => {
            let mut p = input.pairs();
            p.extend(model.pairs());
            p.push(("level", level));
            p.push(("cells", cells));
            (Mode::Fit, common, p)
        }
        Command::Glm { common, input } => (Mode::Glm, common, input.pairs()),
        Command::Simulate {
            common,
            model,
            design,
            n,
            t,
            k,
            p,
            replications,
            independent_truth,
            recovery,
            start,
        } => {
            let mut v = model.pairs();
            v.extend([
                ("sim_design", design),
                ("sim_n", n),
                ("sim_t", t),
                ("sim_k", k),
                ("sim_p", p),
                ("replications", replications),
                ("shared_truth", flag(independent_truth, "false")),
                ("recovery", flag(recovery, "true")),
                ("start", start),
            ]);
            (Mode::Simulate, common, v)
        }
        Command::Score { common, truth, fit } => (Mode::Score, common, vec![("truth", truth), ("fit", fit)]),
        Command::Cluster {
            common,
            fit,
            regions,
            genders,
            ages,
            k,
            metric,
            restarts,
        } => (
            Mode::Cluster,
            common,
            vec![
                ("fit", fit),
                ("regions", regions),
                ("genders", genders),
                ("ages", ages),
                ("k", k),
                ("metric", metric),
                ("pam_restarts", restarts),
            ],
        ),
    };
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    pairs.extend(common.pairs());
    for (key, value) in pairs {
        if let Some(v) = value {
            cfg.set(key, &v)?;
        }
    }
    for kv in &common.set {
        let (key, value) = kv
            .split_once('=')
            .ok_or_else(|| CliError::usage(format!("--set expects KEY=VALUE, got `{kv}`")))?;
        cfg.set(key.trim(), value.trim())?;
    }
    cfg.resolve(mode)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match build_config(cli.command).and_then(|cfg| commands::run(&cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
