use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use bprttd_cli::csvio::load_long_csv;
use bprttd_core::simgen::{generate, SimDesign};
use bprttd_core::{Dims, Ranks};

fn bprttd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bprttd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn simulate(dir: &Path, seed: &str) -> Output {
    bprttd(&[
        "simulate",
        "--seed",
        seed,
        "--n",
        "4",
        "--t",
        "3",
        "--k",
        "5",
        "--p",
        "2",
        "--h1",
        "2",
        "--h2",
        "2",
        "--out",
        s(dir),
    ])
}

#[test]
fn burnin_not_below_iterations_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    assert_eq!(code(&simulate(&sim, "1")), 0);
    let data = sim.join("data.csv");
    let out = bprttd(&[
        "fit",
        "--data",
        s(&data),
        "--seed",
        "1",
        "--h1",
        "2",
        "--h2",
        "2",
        "--iterations",
        "50",
        "--burnin",
        "50",
    ]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("burnin"));
}

#[test]
fn missing_seed_and_unknown_flag_are_usage_errors() {
    assert_eq!(code(&bprttd(&["fit", "--data", "x.csv", "--h1", "2", "--h2", "2"])), 1);
    assert_eq!(code(&bprttd(&["fit", "--colour", "red"])), 1);
    assert_eq!(code(&bprttd(&["simulate", "--seed", "1", "--set", "colour=red"])), 1);
    assert_eq!(code(&bprttd(&["--help"])), 0);
}

#[test]
fn simulate_is_byte_identical_for_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    for (dir, seed) in [(&a, "11"), (&b, "11"), (&c, "12")] {
        assert_eq!(code(&simulate(dir, seed)), 0);
    }
    for f in ["data.csv", "truth_beta.csv", "truth_cores.csv"] {
        let fa = fs::read(a.join(f)).unwrap();
        let fb = fs::read(b.join(f)).unwrap();
        assert_eq!(fa, fb, "{f}");
    }
    assert_ne!(
        fs::read(a.join("data.csv")).unwrap(),
        fs::read(c.join("data.csv")).unwrap()
    );
}

#[test]
fn simulated_csv_loads_back_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("sim");
    assert_eq!(code(&simulate(&dir, "5")), 0);
    let loaded = load_long_csv(&dir.join("data.csv")).unwrap();
    let design = SimDesign {
        dims: Dims::new(4, 3, 5),
        ranks: Ranks::new(2, 2),
        p: 2,
        replications: 1,
        ..SimDesign::artificial(5)
    };
    let sim = generate(&design, 0).unwrap();
    assert_eq!(loaded.counts, sim.counts);
    assert_eq!(loaded.data, sim.data);
    assert_eq!(loaded.labels.covariates, ["intercept", "x1", "x2"]);
}

fn cube_csv(skip: Option<(usize, usize, usize)>) -> String {
    let mut text = String::from("i,t,k,count,offset_pop,offset_years,intercept\n");
    for i in 1..=2 {
        for t in 1..=2 {
            for k in 1..=2 {
                if skip == Some((i, t, k)) {
                    continue;
                }
                text.push_str(&format!("{i},{t},{k},{},2,3,1\n", i + t + k));
            }
        }
    }
    text
}

#[test]
fn two_offset_columns_multiply() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    fs::write(&path, cube_csv(None)).unwrap();
    let loaded = load_long_csv(&path).unwrap();
    assert!(loaded.data.offsets().iter().all(|&u| u == 6.0));
    // intercept-only GLM: exp(b0) = total count / total exposure
    let out = bprttd(&["glm", "--data", s(&path), "--out", s(&tmp.path().join("g"))]);
    assert_eq!(code(&out), 0);
    let glm = fs::read_to_string(tmp.path().join("g/glm.csv")).unwrap();
    let row = glm.lines().find(|l| l.starts_with("intercept,")).unwrap();
    let b0: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!((b0 - (36.0f64 / 48.0).ln()).abs() < 1e-10, "{b0}");
}

#[test]
fn missing_cell_exits_with_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("d.csv");
    fs::write(&path, cube_csv(Some((2, 1, 2)))).unwrap();
    let out = bprttd(&["glm", "--data", s(&path), "--out", s(&tmp.path().join("g"))]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("(2, 1, 2)"), "{err}");
}

#[test]
fn fit_score_and_cluster_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let fit = tmp.path().join("fit");
    assert_eq!(code(&simulate(&sim, "3")), 0);
    let out = bprttd(&[
        "fit",
        "--data",
        s(&sim.join("data.csv")),
        "--seed",
        "9",
        "--h1",
        "2",
        "--h2",
        "2",
        "--prior",
        "simulation",
        "--iterations",
        "300",
        "--burnin",
        "100",
        "--thin",
        "2",
        "--out",
        s(&fit),
        "--cells",
        "1:1;4:5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "config.txt",
        "glm.csv",
        "summary.csv",
        "samples_beta.csv",
        "samples_cores.csv",
        "trajectories.csv",
        "loglik.csv",
        "loglik_trace.csv",
    ] {
        assert!(fit.join(f).is_file(), "{f}");
    }
    let traj = fs::read_to_string(fit.join("trajectories.csv")).unwrap();
    let mut lines = traj.lines().filter(|l| !l.starts_with('#'));
    assert_eq!(
        lines.next().unwrap(),
        "i,k,t,observed,bprttd_mean,bprttd_lo,bprttd_hi,glm_mean,glm_lo,glm_hi"
    );
    assert_eq!(lines.count(), 2 * 3);
    let beta = fs::read_to_string(fit.join("samples_beta.csv")).unwrap();
    assert!(beta.starts_with("# bprttd "));
    assert_eq!(beta.lines().filter(|l| !l.starts_with('#')).count(), 1 + 100);
    let summary = fs::read_to_string(fit.join("summary.csv")).unwrap();
    assert!(summary.contains("# quantile_rule=type7"));

    // a saved config reproduces the run
    let again = tmp.path().join("again");
    let cfg = fit.join("config.txt");
    let out = bprttd(&["fit", "--config", s(&cfg), "--out", s(&again)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["summary.csv", "samples_beta.csv", "trajectories.csv"] {
        assert_eq!(fs::read(fit.join(f)).unwrap(), fs::read(again.join(f)).unwrap(), "{f}");
    }

    let out = bprttd(&[
        "score",
        "--truth",
        s(&sim),
        "--fit",
        s(&fit),
        "--out",
        s(&tmp.path().join("score")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let ape = fs::read_to_string(tmp.path().join("score/ape.csv")).unwrap();
    assert_eq!(ape.lines().filter(|l| !l.starts_with('#')).count(), 5);

    let out = bprttd(&[
        "cluster",
        "--fit",
        s(&fit),
        "--regions",
        "4",
        "--genders",
        "1",
        "--ages",
        "1",
        "--out",
        s(&tmp.path().join("cl")),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let bad = bprttd(&[
        "cluster",
        "--fit",
        s(&fit),
        "--regions",
        "3",
        "--genders",
        "1",
        "--ages",
        "1",
        "--out",
        s(&tmp.path().join("cl2")),
    ]);
    assert_eq!(code(&bad), 2);
}
