//! CSV writers. Every file starts with `#` metadata lines (tool version,
//! command, seed, config hash) that the readers in this crate skip.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use bprttd_core::postproc::{ClusterReport, ModelComparison, PosteriorSummary, TrajectoryRow};
use bprttd_core::simgen::{ApeSummary, ParamSet};
use bprttd_core::{ChainOutput, GlmFit, LogLikelihood, Ranks, TTCores};

use crate::csvio::Labels;
use crate::error::{CliError, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const FAMILIES: [&str; 3] = ["core1", "core2", "core3"];

/// Output directory plus the metadata stamped on every file in it.
#[derive(Debug, Clone)]
pub struct OutDir {
    dir: PathBuf,
    meta: Vec<(String, String)>,
}

pub type CsvOut = csv::Writer<BufWriter<File>>;

impl OutDir {
    pub fn create(dir: &Path, command: &str, seed: Option<u64>, config_hash: &str) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let mut meta = vec![("command".to_string(), command.to_string())];
        if let Some(s) = seed {
            meta.push(("seed".to_string(), s.to_string()));
        }
        meta.push(("config_sha256".to_string(), config_hash.to_string()));
        Ok(Self {
            dir: dir.to_path_buf(),
            meta,
        })
    }

    /// Same metadata, different directory.
    pub fn sub(&self, name: &str) -> Result<Self> {
        let dir = self.dir.join(name);
        fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
        Ok(Self {
            dir,
            meta: self.meta.clone(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Opens `name` and writes the metadata block plus `extra` lines.
    pub fn file(&self, name: &str, extra: &[(&str, String)]) -> Result<BufWriter<File>> {
        let path = self.path(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        writeln!(w, "# bprttd {VERSION}").map_err(|e| CliError::io(&path, e))?;
        let lines = self
            .meta
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain(extra.iter().map(|(k, v)| (*k, v)));
        for (k, v) in lines {
            writeln!(w, "# {k}={v}").map_err(|e| CliError::io(&path, e))?;
        }
        Ok(w)
    }

    pub fn csv(&self, name: &str, extra: &[(&str, String)]) -> Result<CsvOut> {
        Ok(csv::Writer::from_writer(self.file(name, extra)?))
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

pub fn finish(w: CsvOut, dir: &OutDir, name: &str) -> Result<()> {
    let path = dir.path(name);
    let mut inner = w.into_inner().map_err(|e| CliError::io(&path, e.into_error()))?;
    inner.flush().map_err(|e| CliError::io(&path, e))
}

fn rec(w: &mut CsvOut, dir: &OutDir, name: &str, fields: &[String]) -> Result<()> {
    w.write_record(fields).map_err(|e| CliError::csv(&dir.path(name), e))
}

/// `(label, h1, h2)` of every core entry, in storage order, per family.
/// Latent indices are 1-based; a blank means "not applicable".
pub fn core_entries(labels: &Labels, ranks: Ranks) -> [Vec<[String; 3]>; 3] {
    let Ranks { h1, h2 } = ranks;
    let blank = String::new;
    let mut c1 = Vec::with_capacity(labels.i.len() * h1);
    for l in &labels.i {
        for a in 1..=h1 {
            c1.push([l.clone(), a.to_string(), blank()]);
        }
    }
    let mut c2 = Vec::with_capacity(labels.t.len() * h1 * h2);
    for l in &labels.t {
        for a in 1..=h1 {
            for b in 1..=h2 {
                c2.push([l.clone(), a.to_string(), b.to_string()]);
            }
        }
    }
    let mut c3 = Vec::with_capacity(labels.k.len() * h2);
    for l in &labels.k {
        for b in 1..=h2 {
            c3.push([l.clone(), blank(), b.to_string()]);
        }
    }
    [c1, c2, c3]
}

fn fmt(v: f64) -> String {
    v.to_string()
}

pub fn write_summary(dir: &OutDir, s: &PosteriorSummary, labels: &Labels, ranks: Ranks) -> Result<()> {
    const NAME: &str = "summary.csv";
    let mut w = dir.csv(
        NAME,
        &[
            ("level", s.level.to_string()),
            ("quantile_rule", s.quantile_rule.to_string()),
            ("draws", s.draws.to_string()),
        ],
    )?;
    let head = [
        "family",
        "label",
        "h1",
        "h2",
        "mean",
        "sd",
        "lo",
        "hi",
        "effect",
        "prior_mean",
    ];
    rec(&mut w, dir, NAME, &head.map(String::from))?;
    for ((name, p), e) in labels.covariates.iter().zip(&s.beta).zip(&s.effects) {
        let row = [
            "beta".into(),
            name.clone(),
            String::new(),
            String::new(),
            fmt(p.mean),
            fmt(p.sd),
            fmt(p.lo),
            fmt(p.hi),
            e.as_str().into(),
            "0".into(),
        ];
        rec(&mut w, dir, NAME, &row)?;
    }
    let entries = core_entries(labels, ranks);
    let fams = [&s.core1, &s.core2, &s.core3];
    for (f, (params, keys)) in fams.iter().zip(&entries).enumerate() {
        let prior = s.prior_means.map_or(String::new(), |m| fmt(m[f]));
        for (p, [l, a, b]) in params.iter().zip(keys) {
            let row = [
                FAMILIES[f].into(),
                l.clone(),
                a.clone(),
                b.clone(),
                fmt(p.mean),
                fmt(p.sd),
                fmt(p.lo),
                fmt(p.hi),
                String::new(),
                prior.clone(),
            ];
            rec(&mut w, dir, NAME, &row)?;
        }
    }
    finish(w, dir, NAME)
}

/// Chain iteration of retained draw `d`.
fn iteration_of(chain: &ChainOutput, d: usize) -> usize {
    chain.config.burnin + (d + 1) * chain.config.thin
}

pub fn write_samples_beta(dir: &OutDir, chain: &ChainOutput, labels: &Labels) -> Result<()> {
    const NAME: &str = "samples_beta.csv";
    let mut w = dir.csv(NAME, &[])?;
    let mut head = vec!["iteration".to_string()];
    head.extend(labels.covariates.iter().cloned());
    rec(&mut w, dir, NAME, &head)?;
    for d in 0..chain.n_draws() {
        let mut row = vec![iteration_of(chain, d).to_string()];
        row.extend(chain.beta_draw(d).iter().map(|v| fmt(*v)));
        rec(&mut w, dir, NAME, &row)?;
    }
    finish(w, dir, NAME)
}

pub fn write_samples_cores(dir: &OutDir, chain: &ChainOutput, labels: &Labels) -> Result<()> {
    const NAME: &str = "samples_cores.csv";
    let mut w = dir.csv(NAME, &[])?;
    rec(
        &mut w,
        dir,
        NAME,
        &["iteration", "family", "label", "h1", "h2", "value"].map(String::from),
    )?;
    let entries = core_entries(labels, chain.ranks);
    let draws = [&chain.core1_draws, &chain.core2_draws, &chain.core3_draws];
    for d in 0..chain.n_draws() {
        let it = iteration_of(chain, d).to_string();
        for (f, keys) in entries.iter().enumerate() {
            let width = keys.len();
            for (v, [l, a, b]) in draws[f][d * width..(d + 1) * width].iter().zip(keys) {
                let row = [it.clone(), FAMILIES[f].into(), l.clone(), a.clone(), b.clone(), fmt(*v)];
                rec(&mut w, dir, NAME, &row)?;
            }
        }
    }
    finish(w, dir, NAME)
}

pub fn write_trajectories(dir: &OutDir, rows: &[TrajectoryRow], labels: &Labels, level: f64) -> Result<()> {
    const NAME: &str = "trajectories.csv";
    let mut w = dir.csv(NAME, &[("level", level.to_string())])?;
    let head = [
        "i",
        "k",
        "t",
        "observed",
        "bprttd_mean",
        "bprttd_lo",
        "bprttd_hi",
        "glm_mean",
        "glm_lo",
        "glm_hi",
    ];
    rec(&mut w, dir, NAME, &head.map(String::from))?;
    for r in rows {
        let row = [
            labels.i[r.i].clone(),
            labels.k[r.k].clone(),
            labels.t[r.t].clone(),
            r.observed.to_string(),
            fmt(r.bprttd_mean),
            fmt(r.bprttd_lo),
            fmt(r.bprttd_hi),
            fmt(r.glm_mean),
            fmt(r.glm_lo),
            fmt(r.glm_hi),
        ];
        rec(&mut w, dir, NAME, &row)?;
    }
    finish(w, dir, NAME)
}

fn fmt_ll(ll: LogLikelihood) -> String {
    match ll {
        LogLikelihood::Finite(v) => fmt(v),
        LogLikelihood::NegInfinity { .. } => "-inf".into(),
    }
}

pub fn write_loglik(dir: &OutDir, cmp: &ModelComparison) -> Result<()> {
    const NAME: &str = "loglik.csv";
    let mut w = dir.csv(NAME, &[])?;
    rec(&mut w, dir, NAME, &["model".into(), "loglik".into()])?;
    rec(&mut w, dir, NAME, &["glm".into(), fmt_ll(cmp.loglik_glm)])?;
    rec(&mut w, dir, NAME, &["bprttd".into(), fmt_ll(cmp.loglik_bprttd)])?;
    finish(w, dir, NAME)
}

pub fn write_loglik_trace(dir: &OutDir, chain: &ChainOutput) -> Result<()> {
    const NAME: &str = "loglik_trace.csv";
    let mut w = dir.csv(NAME, &[])?;
    rec(&mut w, dir, NAME, &["iteration".into(), "loglik".into()])?;
    for (n, v) in chain.loglik_trace.iter().enumerate() {
        rec(&mut w, dir, NAME, &[(n + 1).to_string(), fmt(*v)])?;
    }
    finish(w, dir, NAME)
}

pub fn write_glm(dir: &OutDir, fit: &GlmFit, labels: &Labels) -> Result<()> {
    const NAME: &str = "glm.csv";
    let d = &fit.diagnostics;
    let mut w = dir.csv(
        NAME,
        &[
            ("converged", fit.converged.to_string()),
            ("iterations", fit.iterations.to_string()),
            ("score_max", fmt(d.score_max)),
            ("step_halvings", d.step_halvings.to_string()),
            ("boundary", d.boundary.to_string()),
            ("loglik", fmt(fit.loglik)),
        ],
    )?;
    rec(&mut w, dir, NAME, &["covariate", "estimate", "se"].map(String::from))?;
    for ((name, b), se) in labels.covariates.iter().zip(&fit.beta_hat).zip(fit.standard_errors()) {
        rec(&mut w, dir, NAME, &[name.clone(), fmt(*b), fmt(se)])?;
    }
    finish(w, dir, NAME)
}

pub fn write_truth(dir: &OutDir, truth: &ParamSet, labels: &Labels) -> Result<()> {
    const BETA: &str = "truth_beta.csv";
    let mut w = dir.csv(BETA, &[])?;
    rec(&mut w, dir, BETA, &["covariate".into(), "value".into()])?;
    for (name, b) in labels.covariates.iter().zip(&truth.beta) {
        rec(&mut w, dir, BETA, &[name.clone(), fmt(*b)])?;
    }
    finish(w, dir, BETA)?;
    write_cores(dir, "truth_cores.csv", &truth.cores, labels)
}

pub fn write_cores(dir: &OutDir, name: &str, cores: &TTCores, labels: &Labels) -> Result<()> {
    let mut w = dir.csv(name, &[])?;
    rec(
        &mut w,
        dir,
        name,
        &["family", "label", "h1", "h2", "value"].map(String::from),
    )?;
    let values = [cores.core1(), cores.core2(), cores.core3()];
    for (f, keys) in core_entries(labels, cores.ranks()).iter().enumerate() {
        for (v, [l, a, b]) in values[f].iter().zip(keys) {
            rec(
                &mut w,
                dir,
                name,
                &[FAMILIES[f].into(), l.clone(), a.clone(), b.clone(), fmt(*v)],
            )?;
        }
    }
    finish(w, dir, name)
}

pub fn ape_header() -> Vec<String> {
    [
        "family", "min", "q1", "median", "mean", "q3", "max", "count", "excluded",
    ]
    .map(String::from)
    .to_vec()
}

pub fn ape_row(family: &str, s: &ApeSummary) -> Vec<String> {
    let mut row = vec![family.to_string()];
    row.extend(s.values().iter().map(|v| fmt(*v)));
    row.push(s.count.to_string());
    row.push(s.excluded.to_string());
    row
}

pub fn write_ape(dir: &OutDir, name: &str, rows: &[(String, ApeSummary)]) -> Result<()> {
    let mut w = dir.csv(name, &[])?;
    rec(&mut w, dir, name, &ape_header())?;
    for (family, s) in rows {
        rec(&mut w, dir, name, &ape_row(family, s))?;
    }
    finish(w, dir, name)
}

/// Writes `cluster.csv` (one row per region and candidate k) and
/// `elbow.csv` (objective per k with the advisory knee flagged).
pub fn write_cluster(dir: &OutDir, report: &ClusterReport, region_labels: &[String]) -> Result<()> {
    const NAME: &str = "cluster.csv";
    let metric = format!("{:?}", report.options.metric).to_lowercase();
    let mut w = dir.csv(
        NAME,
        &[
            ("metric", metric.clone()),
            ("restarts", report.options.restarts.to_string()),
        ],
    )?;
    rec(
        &mut w,
        dir,
        NAME,
        &["k", "region", "cluster", "medoid"].map(String::from),
    )?;
    for run in &report.runs {
        for (r, c) in run.assignment.iter().enumerate() {
            let row = [
                run.k.to_string(),
                region_labels[r].clone(),
                (c + 1).to_string(),
                (run.medoids[*c] == r).to_string(),
            ];
            rec(&mut w, dir, NAME, &row)?;
        }
    }
    finish(w, dir, NAME)?;

    const ELBOW: &str = "elbow.csv";
    let mut w = dir.csv(ELBOW, &[("metric", metric)])?;
    rec(&mut w, dir, ELBOW, &["k", "cost", "suggested"].map(String::from))?;
    for (k, cost) in report.elbow() {
        rec(
            &mut w,
            dir,
            ELBOW,
            &[k.to_string(), fmt(cost), (report.suggested_k == Some(k)).to_string()],
        )?;
    }
    finish(w, dir, ELBOW)
}
