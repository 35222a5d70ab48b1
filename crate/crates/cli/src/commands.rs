//! One function per subcommand. Each takes a resolved [`RunConfig`].

use std::collections::HashMap;
use std::fs::File;
use std::path::Path;

use bprttd_core::postproc::{
    compare_loglik, core1_feature_matrix, fitted_trajectories, pam_cluster, summarize, FactorLayout, PamOptions,
};
use bprttd_core::simgen::{ape_values, generate, recovery_report, summarize_ape, ApeSummary};
use bprttd_core::{fit_glm, run_chain_from, Init};

use crate::config::{Mode, RunConfig};
use crate::csvio::{load_inputs, write_long_csv, Labels, LoadedData};
use crate::error::{CliError, Result};
use crate::output::{self, OutDir};

/// Trajectory cells fitted per batch; bounds the draw buffer.
const TRAJECTORY_BATCH: usize = 256;

/// Runs `cfg` on a dedicated pool of `cfg.threads` workers (all cores if unset).
pub fn run(cfg: &RunConfig) -> Result<()> {
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cfg.threads {
        pool = pool.num_threads(n);
    }
    let pool = pool.build().map_err(|e| CliError::usage(format!("thread pool: {e}")))?;
    pool.install(|| match cfg.mode {
        Some(Mode::Fit) => fit(cfg),
        Some(Mode::Glm) => glm(cfg),
        Some(Mode::Simulate) => simulate(cfg),
        Some(Mode::Score) => score(cfg),
        Some(Mode::Cluster) => cluster(cfg),
        None => Err(CliError::usage("no command given")),
    })
}

fn out_dir(cfg: &RunConfig, command: &str) -> Result<OutDir> {
    let dir = cfg.out.clone().unwrap_or_else(|| "bprttd-out".into());
    let out = OutDir::create(&dir, command, cfg.seed, &cfg.hash())?;
    out.write_text("config.txt", &cfg.render())?;
    Ok(out)
}

fn load(cfg: &RunConfig) -> Result<LoadedData> {
    let data = cfg
        .data
        .as_deref()
        .ok_or_else(|| CliError::usage("missing required setting `data`"))?;
    load_inputs(data, cfg.covariates.as_deref(), cfg.offsets.as_deref())
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let LoadedData { counts, data, labels } = load(cfg)?;
    let ranks = cfg.ranks()?;
    let prior = cfg.prior_config()?;
    let mcmc = cfg.mcmc()?;
    let seed = cfg
        .seed
        .ok_or_else(|| CliError::usage("missing required setting `seed`"))?;
    let level = cfg.level.unwrap_or(0.95);
    let cells = trajectory_cells(cfg.cells.as_deref(), &labels)?;
    let out = out_dir(cfg, "fit")?;

    let glm = fit_glm(&counts, &data)?;
    output::write_glm(&out, &glm, &labels)?;
    let chain = run_chain_from(&counts, &data, ranks, &prior, &mcmc, seed, &glm, Init::Prior)?;
    let summary = summarize(&chain, level)?.with_prior(&prior);
    output::write_summary(&out, &summary, &labels, ranks)?;
    output::write_samples_beta(&out, &chain, &labels)?;
    output::write_samples_cores(&out, &chain, &labels)?;
    output::write_loglik_trace(&out, &chain)?;

    let mut rows = Vec::new();
    for batch in cells.chunks(TRAJECTORY_BATCH) {
        rows.extend(fitted_trajectories(&chain, &counts, &data, &glm, batch, level)?);
    }
    output::write_trajectories(&out, &rows, &labels, level)?;
    let cmp = compare_loglik(&chain, &counts, &data, &glm)?;
    output::write_loglik(&out, &cmp)?;

    eprintln!(
        "fit: {} draws, acceptance {:.3}, loglik glm {} bprttd {} -> {}",
        chain.n_draws(),
        chain.acceptance_rate_post_warmup(),
        cmp.loglik_glm.value(),
        cmp.loglik_bprttd.value(),
        out.dir().display()
    );
    Ok(())
}

/// `i:k;i:k` label pairs, or every `(i, k)` pair when unset.
fn trajectory_cells(spec: Option<&str>, labels: &Labels) -> Result<Vec<(usize, usize)>> {
    let Some(spec) = spec.filter(|s| !s.trim().is_empty()) else {
        let k = labels.k.len();
        return Ok((0..labels.i.len() * k).map(|c| (c / k, c % k)).collect());
    };
    let find = |axis: &[String], name: &str, v: &str| {
        axis.iter()
            .position(|l| l == v)
            .ok_or_else(|| CliError::usage(format!("cells: unknown {name} label `{v}`")))
    };
    spec.split(';')
        .map(|pair| {
            let (i, k) = pair
                .split_once(':')
                .ok_or_else(|| CliError::usage(format!("cells: expected `i:k`, got `{pair}`")))?;
            Ok((find(&labels.i, "i", i.trim())?, find(&labels.k, "k", k.trim())?))
        })
        .collect()
}

pub fn glm(cfg: &RunConfig) -> Result<()> {
    let LoadedData { counts, data, labels } = load(cfg)?;
    let out = out_dir(cfg, "glm")?;
    let fit = fit_glm(&counts, &data)?;
    output::write_glm(&out, &fit, &labels)?;
    eprintln!(
        "glm: converged={} after {} iterations, loglik {} -> {}",
        fit.converged,
        fit.iterations,
        fit.loglik,
        out.dir().display()
    );
    Ok(())
}

fn covariate_names(p: usize, intercept: bool) -> Vec<String> {
    let mut names: Vec<String> = intercept.then(|| "intercept".to_string()).into_iter().collect();
    names.extend((1..=p).map(|j| format!("x{j}")));
    names
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let design = cfg.sim_design()?;
    let out = out_dir(cfg, "simulate")?;
    let names = covariate_names(design.p, design.intercept);
    let labels = Labels::numbered(design.dims, names);
    for r in 0..design.replications {
        let sim = generate(&design, r)?;
        let dir = if design.replications > 1 {
            out.sub(&format!("rep{:03}", r + 1))?
        } else {
            out.clone()
        };
        let loaded = LoadedData {
            counts: sim.counts,
            data: sim.data,
            labels: labels.clone(),
        };
        let w = dir.file("data.csv", &[("replication", (r + 1).to_string())])?;
        write_long_csv(w, &loaded).map_err(|e| CliError::csv(&dir.path("data.csv"), e))?;
        output::write_truth(&dir, &sim.truth, &labels)?;
    }
    eprintln!(
        "simulate: {} replication(s) -> {}",
        design.replications,
        out.dir().display()
    );

    if cfg.recovery != Some(true) {
        return Ok(());
    }
    let prior = cfg.prior_config()?;
    let mcmc = cfg.mcmc()?;
    let start = cfg.start.unwrap_or(bprttd_core::simgen::RecoveryStart::Truth);
    let report = recovery_report(&design, &prior, &mcmc, start)?;

    const RECOVERY: &str = "recovery.csv";
    let mut w = out.csv(RECOVERY, &[("replications", design.replications.to_string())])?;
    let head = ["family", "label", "h1", "h2", "truth", "mean_of_means", "sd_of_means"];
    w.write_record(head)
        .map_err(|e| CliError::csv(&out.path(RECOVERY), e))?;
    let truth = design.shared_truth.then(|| report.replications[0].truth.flatten());
    let keys = parameter_keys(&labels, design.ranks);
    for (n, (family, [l, a, b])) in keys.iter().enumerate() {
        let t = truth.as_ref().map_or(String::new(), |v| v[n].to_string());
        let row = [
            family.to_string(),
            l.clone(),
            a.clone(),
            b.clone(),
            t,
            report.mean_of_means[n].to_string(),
            report.sd_of_means[n].to_string(),
        ];
        w.write_record(&row)
            .map_err(|e| CliError::csv(&out.path(RECOVERY), e))?;
    }
    output::finish(w, &out, RECOVERY)?;

    const APE: &str = "ape.csv";
    let mut w = out.csv(APE, &[])?;
    let mut head = vec!["replication".to_string()];
    head.extend(output::ape_header());
    head.push("acceptance_rate".into());
    w.write_record(&head).map_err(|e| CliError::csv(&out.path(APE), e))?;
    for rep in &report.replications {
        for (family, s) in rep.ape.rows() {
            let mut row = vec![(rep.replication + 1).to_string()];
            row.extend(output::ape_row(family, &s));
            row.push(rep.acceptance_rate.to_string());
            w.write_record(&row).map_err(|e| CliError::csv(&out.path(APE), e))?;
        }
    }
    output::finish(w, &out, APE)?;
    let medians: Vec<String> = report.replications[0]
        .ape
        .rows()
        .iter()
        .map(|(f, s)| format!("{f} {:.3}", s.median))
        .collect();
    eprintln!("recovery: replication 1 median APE: {}", medians.join(", "));
    Ok(())
}

/// `(family, [label, h1, h2])` for `beta, core1, core2, core3` in flattened order.
fn parameter_keys(labels: &Labels, ranks: bprttd_core::Ranks) -> Vec<(&'static str, [String; 3])> {
    let mut keys: Vec<_> = labels
        .covariates
        .iter()
        .map(|c| ("beta", [c.clone(), String::new(), String::new()]))
        .collect();
    for (f, entries) in output::core_entries(labels, ranks).into_iter().enumerate() {
        keys.extend(entries.into_iter().map(|e| (output::FAMILIES[f], e)));
    }
    keys
}

type Key = (String, String, String, String);

/// Reads `(family, label, h1, h2) -> column` in file order.
fn read_keyed(path: &Path, family_col: Option<&str>, value_col: &str) -> Result<Vec<(Key, f64)>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(file);
    let header = rdr.headers().map_err(|e| CliError::csv(path, e))?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CliError::data(path, format!("missing column `{name}`")))
    };
    let v = col(value_col)?;
    let (fam, label, h1, h2) = match family_col {
        Some(f) => (Some(col(f)?), col("label")?, col("h1").ok(), col("h2").ok()),
        None => (None, col("covariate")?, None, None),
    };
    let mut out = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::csv(path, e))?;
        let get = |c: Option<usize>| c.and_then(|c| rec.get(c)).unwrap_or("").to_string();
        let family = fam.map_or_else(|| "beta".to_string(), |c| rec.get(c).unwrap_or("").to_string());
        let raw = rec.get(v).unwrap_or("");
        let value: f64 = raw
            .parse()
            .map_err(|_| CliError::data(path, format!("record {}: `{raw}` is not a number", n + 1)))?;
        out.push(((family, get(Some(label)), get(h1), get(h2)), value));
    }
    Ok(out)
}

pub fn score(cfg: &RunConfig) -> Result<()> {
    let truth_dir = cfg
        .truth
        .as_deref()
        .ok_or_else(|| CliError::usage("missing required setting `truth`"))?;
    let fit_dir = cfg
        .fit
        .as_deref()
        .ok_or_else(|| CliError::usage("missing required setting `fit`"))?;
    let mut truth = read_keyed(&truth_dir.join("truth_beta.csv"), None, "value")?;
    truth.extend(read_keyed(&truth_dir.join("truth_cores.csv"), Some("family"), "value")?);
    let summary_path = fit_dir.join("summary.csv");
    let estimates: HashMap<Key, f64> = read_keyed(&summary_path, Some("family"), "mean")?.into_iter().collect();

    let mut rows: Vec<(String, ApeSummary)> = Vec::new();
    for family in ["beta", "core1", "core2", "core3"] {
        let mut t = Vec::new();
        let mut e = Vec::new();
        for (key, v) in truth.iter().filter(|(k, _)| k.0 == family) {
            let est = estimates.get(key).ok_or_else(|| {
                CliError::data(
                    &summary_path,
                    format!("no estimate for {} {} h1={} h2={}", key.0, key.1, key.2, key.3),
                )
            })?;
            t.push(*v);
            e.push(*est);
        }
        let (values, excluded) = ape_values(&t, &e)?;
        rows.push((family.to_string(), summarize_ape(values, excluded)));
    }
    let out = out_dir(cfg, "score")?;
    output::write_ape(&out, "ape.csv", &rows)?;
    for (f, s) in &rows {
        eprintln!("score: {f} median APE {:.4} over {} entries", s.median, s.count);
    }
    Ok(())
}

pub fn cluster(cfg: &RunConfig) -> Result<()> {
    let fit_dir = cfg
        .fit
        .as_deref()
        .ok_or_else(|| CliError::usage("missing required setting `fit`"))?;
    let summary_path = fit_dir.join("summary.csv");
    let core1: Vec<(Key, f64)> = read_keyed(&summary_path, Some("family"), "mean")?
        .into_iter()
        .filter(|(k, _)| k.0 == "core1")
        .collect();
    let mut h1s: Vec<&str> = core1.iter().map(|(k, _)| k.2.as_str()).collect();
    h1s.sort_unstable();
    h1s.dedup();
    let h1 = h1s.len();
    let means: Vec<f64> = core1.iter().map(|(_, v)| *v).collect();
    let layout = FactorLayout {
        regions: cfg.regions.unwrap_or(0),
        genders: cfg.genders.unwrap_or(0),
        ages: cfg.ages.unwrap_or(0),
    };
    let points = core1_feature_matrix(&means, h1, layout).map_err(|e| CliError::data(&summary_path, e.to_string()))?;
    let options = PamOptions {
        metric: cfg.metric.unwrap_or_default(),
        restarts: cfg.pam_restarts.unwrap_or(bprttd_core::postproc::DEFAULT_RESTARTS),
        seed: cfg.seed.unwrap_or(0),
    };
    let report = pam_cluster(&points, &cfg.k_candidates()?, &options)?;
    let out = out_dir(cfg, "cluster")?;
    let region_labels: Vec<String> = (1..=layout.regions).map(|r| r.to_string()).collect();
    output::write_cluster(&out, &report, &region_labels)?;
    match report.suggested_k {
        Some(k) => eprintln!("cluster: elbow suggests k = {k} (advisory) -> {}", out.dir().display()),
        None => eprintln!("cluster: too few candidates for an elbow -> {}", out.dir().display()),
    }
    Ok(())
}
