use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use itq_core::model::{load_experiment, LoadOptions, RankTransform};
use itq_core::rank::{null_distribution, Design, NullOptions};
use itq_core::stratified::treated_intervals_scre;
use serde_json::Value;
use tempfile::TempDir;

const TOY: &str = "z,y\n1,5\n1,4.2\n1,3.1\n0,1\n0,2.5\n0,0.3\n1,6\n0,1.7\n";

fn itq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_itq"))
        .args(args)
        .env_remove("ITQ_SEED")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn lower(v: &Value) -> f64 {
    match v {
        Value::String(s) if s == "-inf" => f64::NEG_INFINITY,
        other => other.as_f64().unwrap(),
    }
}

fn lowers(result: &Value) -> Vec<f64> {
    result["entries"].as_array().unwrap().iter().map(|e| lower(&e["lower"])).collect()
}

#[test]
fn m1_family_is_nested_at_twice_alpha() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "toy.csv", TOY);
    let out = itq(&["quantile-ci", "--data", data.to_str().unwrap(), "--method", "m1", "--alpha", "0.05", "--statistic", "wilcoxon"]);
    let v = json_of(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["result"]["level"], 0.9);
    let l = lowers(&v["result"]);
    assert_eq!(l.len(), 8);
    assert!(l.windows(2).all(|w| w[0] <= w[1]));
    assert!(String::from_utf8_lossy(&out.stdout).contains("\"-inf\""));
}

#[test]
fn m0_matches_uncorrected_treated_side() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "toy.csv", TOY);
    let d = data.to_str().unwrap();
    let q = "0.5,0.75,1";
    let m0 = json_of(&itq(&["quantile-ci", "--data", d, "--method", "m0", "--quantiles", q, "--gamma", "0.7"]));
    let m2 = json_of(&itq(&["quantile-ci", "--data", d, "--method", "m2", "--quantiles", q, "--gamma", "0", "--sides", "treated"]));
    assert_eq!(lowers(&m0["result"]), lowers(&m2["result"]));
}

#[test]
fn sharp_shift_test_is_small() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "toy.csv", TOY);
    let v = json_of(&itq(&["test", "--data", data.to_str().unwrap(), "--k", "n", "--c", "0", "--statistic", "wilcoxon"]));
    let p = v["result"]["value"].as_f64().unwrap();
    assert!((p - 1.0 / 70.0).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let bad = write(dir.path(), "bad.csv", "z,x\n1,2\n0,1\n");
    let toy = write(dir.path(), "toy.csv", TOY);
    let nonbinary = write(dir.path(), "nb.csv", "z,y\n2,1\n0,1\n");
    assert_eq!(itq(&["quantile-ci", "--data", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(itq(&["quantile-ci", "--data", nonbinary.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(itq(&["quantile-ci", "--data", "missing.csv"]).status.code(), Some(2));
    let t = toy.to_str().unwrap();
    assert_eq!(itq(&["quantile-ci", "--data", t, "--method", "m2", "--all"]).status.code(), Some(3));
    assert_eq!(itq(&["quantile-ci", "--data", t, "--alpha", "1.5"]).status.code(), Some(3));
    assert_eq!(itq(&["quantile-ci", "--data", t, "--method", "m9"]).status.code(), Some(3));
    assert_eq!(itq(&["test", "--data", t, "--k", "x", "--c", "0"]).status.code(), Some(3));
    assert_eq!(itq(&["--help"]).status.code(), Some(0));
}

#[test]
fn unit_sensitivity_bound_equals_stratified_intervals() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("z,y,stratum\n");
    for s in 0..6 {
        let (a, b) = (s as f64 * 0.3 + 1.0, s as f64 * 0.2);
        csv.push_str(&format!("1,{a},p{s}\n0,{b},p{s}\n"));
    }
    let data = write(dir.path(), "pairs.csv", &csv);
    let v = json_of(&itq(&[
        "sensitivity", "--data", data.to_str().unwrap(), "--gamma-grid", "1.0", "--statistic", "wilcoxon", "--alpha", "0.1",
    ]));
    let parsed = load_experiment(csv.as_bytes(), &LoadOptions::default()).unwrap();
    let trs = [RankTransform::Wilcoxon];
    let null = null_distribution(&Design::of(&parsed), &trs, &NullOptions::default()).unwrap();
    let want = treated_intervals_scre(&parsed, &trs, 0.1, &null).unwrap();
    let got = &v["result"]["families"][0];
    assert_eq!(lowers(got), want.lower_bounds());
}

#[test]
fn wide_gamma_grid_runs() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("z,y,stratum\n");
    for s in 0..10 {
        csv.push_str(&format!("1,{},m{s}\n0,{},m{s}\n", 1.0 + s as f64 * 0.1, s as f64 * 0.05));
    }
    let data = write(dir.path(), "pairs.csv", &csv);
    let v = json_of(&itq(&[
        "sensitivity", "--data", data.to_str().unwrap(), "--gamma-grid", "1.0,1.3,2.2,4.0,8.3,38.4", "--mc-draws", "5000",
    ]));
    assert_eq!(v["result"]["families"].as_array().unwrap().len(), 6);
}

#[test]
fn simulate_emits_tidy_csv() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let o = itq(&[
        "simulate", "--study", "method-comparison", "--replications", "4", "--rho2", "0.5", "--mc-draws", "2000", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("result.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("rho2,quantile_pct,method_or_gamma,median_lower,n_informative"));
    assert_eq!(lines.count(), 15);
}

#[test]
fn manifest_replays_and_detects_tampering() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "toy.csv", TOY);
    let out = dir.path().join("run");
    let o = itq(&[
        "quantile-ci", "--data", data.to_str().unwrap(), "--method", "m2", "--quantiles", "0.5,0.75,1", "--mc-draws", "3000",
        "--seed", "11", "--out", out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest_path = out.join("manifest.json");
    let manifest: Value = serde_json::from_str(&fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 11);
    assert_eq!(manifest["mc_draws"], 3000);
    assert_eq!(manifest["input"]["sha256"].as_str().unwrap().len(), 64);

    let ok = itq(&["replay", "--manifest", manifest_path.to_str().unwrap()]);
    assert!(ok.status.success(), "{}", String::from_utf8_lossy(&ok.stderr));

    let tampered = manifest.to_string().replace(manifest["result_json_sha256"].as_str().unwrap(), &"0".repeat(64));
    let tampered_path = write(dir.path(), "tampered.json", &tampered);
    assert_eq!(itq(&["replay", "--manifest", tampered_path.to_str().unwrap()]).status.code(), Some(4));
}

#[test]
fn results_do_not_depend_on_threads() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("z,y\n");
    for i in 0..40 {
        csv.push_str(&format!("{},{}\n", (i % 2 == 0) as u8, (i * 37 % 17) as f64 / 3.0 + (i % 2) as f64));
    }
    let data = write(dir.path(), "d.csv", &csv);
    let d = data.to_str().unwrap();
    let run = |threads: &str| {
        itq(&["quantile-ci", "--data", d, "--method", "m2", "--quantiles", "0.5,0.9", "--mc-draws", "4000", "--threads", threads])
            .stdout
    };
    assert_eq!(run("1"), run("3"));
}

#[test]
fn seed_comes_from_environment() {
    let dir = TempDir::new().unwrap();
    let data = write(dir.path(), "toy.csv", TOY);
    let out = Command::new(env!("CARGO_BIN_EXE_itq"))
        .args(["test", "--data", data.to_str().unwrap(), "--k", "3", "--c", "1"])
        .env("ITQ_SEED", "99")
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(manifest["seed"], 99);
}

#[test]
fn population_band_over_levels() {
    let dir = TempDir::new().unwrap();
    let mut csv = String::from("z,y\n");
    for i in 0..30 {
        csv.push_str(&format!("{},{}\n", (i % 2) as u8, i as f64 / 4.0 + 2.0 * (i % 2) as f64));
    }
    let data = write(dir.path(), "d.csv", &csv);
    let v = json_of(&itq(&[
        "population-ci", "--data", data.to_str().unwrap(), "--betas", "0.5,0.8", "--population", "300", "--band", "--mc-draws",
        "4000",
    ]));
    let band = lowers(&v["result"]["band"]);
    assert!(band.windows(2).all(|w| w[0] <= w[1]));
}
