use std::path::{Path, PathBuf};
use std::process::Command;

use permrate::rng::{substream, Purpose};
use permrate_cli::args::{AnalysisArgs, BandwidthArg, CsetArgs, KindArg};
use permrate_cli::report::Report;
use permrate_cli::run;
use rand::Rng;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_permrate"));
    c.env_remove("PERMRATE_SEED");
    c
}

/// Two groups with the same regression function; group 1 is shifted by `shift`.
fn two_sample_csv(dir: &Path, n: usize, shift: f64, seed: u64) -> PathBuf {
    let mut r = substream(seed, Purpose::Simulation, 0, 0);
    let mut text = String::from("x,y,g\n");
    for i in 0..n {
        let g = if i % 3 == 0 { 1 } else { 2 };
        let x: f64 = r.random();
        let e: f64 = r.random::<f64>() - 0.5;
        let y = (3.0 * x).sin() + e + if g == 1 { shift } else { 0.0 };
        text.push_str(&format!("{x},{y},{g}\n"));
    }
    let path = dir.join(format!("two_{seed}.csv"));
    std::fs::write(&path, text).unwrap();
    path
}

/// Running variable symmetric about 0 and an outcome independent of it.
fn sharp_null_rdd_csv(dir: &Path, n: usize, seed: u64) -> PathBuf {
    let mut r = substream(seed, Purpose::Simulation, 1, 0);
    let mut text = String::from("score,outcome\n");
    for _ in 0..n {
        let x: f64 = 2.0 * r.random::<f64>() - 1.0;
        let y: f64 = r.random::<f64>() + r.random::<f64>();
        text.push_str(&format!("{x},{y}\n"));
    }
    let path = dir.join(format!("rdd_{seed}.csv"));
    std::fs::write(&path, text).unwrap();
    path
}

fn mean_args(input: &Path) -> AnalysisArgs {
    let mut a = AnalysisArgs::with_input(input);
    a.group = Some("g".into());
    a.point = Some(0.5);
    a.bandwidth = BandwidthArg::Value(0.3);
    a.perms = 199;
    a.seed = 5;
    a
}

#[test]
fn test_subcommand_writes_a_round_trippable_report() {
    let dir = tempfile::tempdir().unwrap();
    let input = two_sample_csv(dir.path(), 600, 0.0, 1);
    let out = dir.path().join("report.json");
    let plots = dir.path().join("plots");
    let status = bin()
        .args(["test", "--input"])
        .arg(&input)
        .args(["--group", "g", "--point", "0.5", "--bandwidth", "0.3", "--perms", "199", "--seed", "3"])
        .args(["--methods", "sp,nsp,t,sb,ss", "--out"])
        .arg(&out)
        .arg("--plot-dir")
        .arg(&plots)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let stdout = String::from_utf8(status.stdout).unwrap();
    assert!(stdout.contains("sp") && stdout.contains("p-value"), "{stdout}");

    let text = std::fs::read_to_string(&out).unwrap();
    let report = Report::from_json(&text).unwrap();
    assert_eq!(report.schema_version, 1);
    assert_eq!(report.permutation.len(), 2);
    assert_eq!(report.comparators.len(), 3);
    assert_eq!(report.permutation[0].report.perm_draws.len(), 200);
    assert!(report.timings.contains_key("permutation"));
    // Every number survives the trip exactly.
    assert_eq!(Report::from_json(&report.to_json().unwrap()).unwrap(), report);
    assert_eq!(report.to_json().unwrap(), text);

    let draws = std::fs::read_to_string(plots.join("perm_draws_sp.csv")).unwrap();
    assert_eq!(draws.lines().count(), 201);
    assert!(plots.join("resample_draws_sb.csv").exists());
}

#[test]
fn seed_fixes_everything() {
    let dir = tempfile::tempdir().unwrap();
    let input = two_sample_csv(dir.path(), 300, 0.2, 2);
    let strip = |mut r: Report| {
        r.timings.clear();
        r
    };
    let a = mean_args(&input);
    let r1 = strip(run::run_test(&a).unwrap());
    let r2 = strip(run::run_test(&a).unwrap());
    assert_eq!(r1, r2);
    let r3 = strip(run::run_test(&AnalysisArgs { seed: 6, ..a.clone() }).unwrap());
    assert_ne!(r1.permutation[0].uniform, r3.permutation[0].uniform);
    assert_ne!(r1.permutation[0].report.perm_draws, r3.permutation[0].report.perm_draws);

    let c = CsetArgs { analysis: a.clone(), grid_points: 15, grid_width: 5.0, grid_tol: 0.05, shift_stat: false };
    let s1 = run::run_cset(&c).unwrap().confidence_set.unwrap();
    let s2 = run::run_cset(&c).unwrap().confidence_set.unwrap();
    assert_eq!(s1, s2);
}

#[test]
fn env_seed_fallback() {
    let dir = tempfile::tempdir().unwrap();
    let input = two_sample_csv(dir.path(), 300, 0.0, 3);
    let run_with = |env: Option<&str>, out: &str| {
        let out = dir.path().join(out);
        let mut c = bin();
        c.args(["test", "--input"]).arg(&input);
        c.args(["--group", "g", "--point", "0.5", "--bandwidth", "0.3", "--perms", "99", "--methods", "sp", "--out"]);
        c.arg(&out);
        if let Some(s) = env {
            c.env("PERMRATE_SEED", s);
        }
        assert!(c.stdout(std::process::Stdio::null()).status().unwrap().success());
        let r = Report::from_json(&std::fs::read_to_string(out).unwrap()).unwrap();
        (r.config.seed, r.permutation[0].uniform)
    };
    let (s, u) = run_with(Some("41"), "a.json");
    assert_eq!(s, 41);
    assert_eq!(u, run::decision_uniform(41));
    assert_eq!(run_with(None, "b.json").0, 0);
}

#[test]
fn errors_exit_nonzero_with_context() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "x,z\n1,2\n").unwrap();
    let out = bin().args(["test", "--input"]).arg(&input).args(["--kind", "rdd"]).output().unwrap();
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("'y'"), "{err}");

    let input = two_sample_csv(dir.path(), 100, 0.0, 4);
    let out = bin().args(["test", "--input"]).arg(&input).args(["--group", "g"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stderr).unwrap().contains("--point"));
}

#[test]
fn cset_bandwidth_and_density() {
    let dir = tempfile::tempdir().unwrap();
    let input = two_sample_csv(dir.path(), 900, 0.5, 5);
    let c = CsetArgs { analysis: mean_args(&input), grid_points: 21, grid_width: 6.0, grid_tol: 0.02, shift_stat: false };
    let r = run::run_cset(&c).unwrap();
    let cs = r.confidence_set.unwrap();
    let (lo, hi) = cs.interval_hull.unwrap();
    assert!(lo < 0.5 && 0.5 < hi, "[{lo}, {hi}]");

    let rdd = sharp_null_rdd_csv(dir.path(), 2000, 6);
    let mut a = AnalysisArgs::with_input(&rdd);
    a.kind = KindArg::Rdd;
    a.x = "score".into();
    a.y = "outcome".into();
    let b = run::run_bandwidth(&a).unwrap();
    assert!(b.value > 0.0 && b.value <= 2.0);

    let out = bin().args(["bandwidth", "--input"]).arg(&rdd).args(["--kind", "rdd", "--x", "score", "--y", "outcome"]).output().unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["value"].as_f64().unwrap(), b.value);

    let mut d = AnalysisArgs::with_input(&rdd);
    d.kind = KindArg::Density;
    d.x = "score".into();
    d.bandwidth = BandwidthArg::Value(0.3);
    d.perms = 99;
    d.methods = vec![permrate::simlab::MethodId::Sp, permrate::simlab::MethodId::Nsp];
    let r = run::run_test(&d).unwrap();
    assert_eq!(r.n[0] + r.n[1], 2000);
    d.bandwidth = BandwidthArg::Ik;
    assert!(run::run_test(&d).is_err());
}

#[test]
fn simulate_writes_tables_and_curves() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let status = bin()
        .args(["simulate", "--design", "sharp_null_custom", "--n", "30,60", "--h", "0.4", "--reps", "200"])
        .args(["--perms", "39", "--seed", "1", "--methods", "sp,t", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(std::fs::read_to_string(out.join("table.csv")).unwrap().lines().count(), 3);
    assert!(out.join("table.json").exists());

    let status = bin()
        .args(["simulate", "--design", "sharp_null_custom", "--n", "30,60", "--h", "0.4", "--reps", "200"])
        .args(["--perms", "39", "--methods", "sp", "--power-shifts", "0,0.5,1,1.5", "--out"])
        .arg(&out)
        .output()
        .unwrap();
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    assert_eq!(std::fs::read_to_string(out.join("power_sp.csv")).unwrap().lines().count(), 5);
}

/// Kolmogorov–Smirnov test of uniformity (asymptotic p-value).
fn ks_uniform_p(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max);
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn sharp_null_p_values_are_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let p: Vec<f64> = (0..200)
        .map(|seed| {
            let input = sharp_null_rdd_csv(dir.path(), 80, 100 + seed);
            let mut a = AnalysisArgs::with_input(&input);
            a.kind = KindArg::Rdd;
            a.x = "score".into();
            a.y = "outcome".into();
            a.bandwidth = BandwidthArg::Value(0.8);
            a.perms = 199;
            a.seed = seed;
            a.methods = vec![permrate::simlab::MethodId::Sp];
            run::run_test(&a).unwrap().permutation[0].report.p_value
        })
        .collect();
    let ks = ks_uniform_p(p);
    assert!(ks > 0.01, "KS p = {ks}");
}
