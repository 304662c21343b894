use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gausstree")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_model(dir: &Path, shape: &str, rho: &str) -> String {
    let path = dir.join(format!("{shape}.json"));
    let out = run(&["make", shape, "--rho", rho, "--out", path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path.to_str().unwrap().to_owned()
}

#[test]
fn make_chain_echoes_the_model() {
    let v = json(&run(&["make", "chain", "--d", "4", "--rho", "0.5,0.4,0.3"]));
    assert_eq!(v["d"], 4);
    let edges = v["edges"].as_array().unwrap();
    let want = [(1, 2, 0.5), (2, 3, 0.4), (3, 4, 0.3)];
    assert_eq!(edges.len(), 3);
    for (e, (i, j, r)) in edges.iter().zip(want) {
        assert_eq!((e[0].as_u64().unwrap(), e[1].as_u64().unwrap(), e[2].as_f64().unwrap()), (i, j, r));
    }
}

#[test]
fn approx_methods_agree() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "star", "0.7,-0.3,0.5,0.2,0.6");
    let v = json(&run(&["approx-exponent", "--model", &model, "--method", "all"]));
    let vals: Vec<f64> = ["full", "triangle", "linear"].iter().map(|m| v[m]["value"].as_f64().unwrap()).collect();
    assert!(vals[0] > 0.0);
    for x in &vals[1..] {
        assert!((x - vals[0]).abs() <= 1e-12 * vals[0], "{vals:?}");
    }
}

#[test]
fn usage_and_domain_errors_have_distinct_codes() {
    assert_eq!(run(&["make", "chain", "--rho", "0.5", "--bogus"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["make", "chain", "--rho", "0.5,1.0"]).status.code(), Some(1));
    assert_eq!(run(&["make", "hybrid", "--rho", "0.5,0.4,0.3,0.2"]).status.code(), Some(1));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn made_models_feed_every_consumer() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "hybrid", "0.5,0.4,0.3,0.45,0.35");
    let text = std::fs::read_to_string(&model).unwrap();
    let m = gausstree::GaussianTreeModel::from_json(&text).unwrap();
    assert_eq!(gausstree::GaussianTreeModel::from_json(&m.to_json()).unwrap(), m);

    let exact = json(&run(&["exact-exponent", "--model", &model, "--starts", "2"]));
    let approx = json(&run(&["approx-exponent", "--model", &model]));
    assert!(exact["K_p"].as_f64().unwrap() > 0.0);
    assert!(approx["value"].as_f64().unwrap() > 0.0);

    let learned = json(&run(&["learn", "--model", &model, "--n", "20000", "--seed", "3"]));
    assert_eq!(learned["d"], 6);
    assert_eq!(learned["edges"].as_array().unwrap().len(), 5);

    let csv_path = dir.path().join("curve.csv");
    let out = run(&[
        "simulate", "--model", &model, "--n-grid", "50:150:50", "--trials", "200", "--no-exact", "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "n,trials,errors,p_hat,ci_lo,ci_hi,sim_exponent,K_p,K_tilde");
    assert_eq!(lines.count(), 3);
}

#[test]
fn dumped_samples_learn_the_same_tree() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "chain", "0.6,0.5,0.7");
    let dump = dir.path().join("samples.csv");
    let a = json(&run(&["learn", "--model", &model, "--n", "300", "--dump-samples", dump.to_str().unwrap()]));
    let b = json(&run(&["learn", "--samples", dump.to_str().unwrap()]));
    assert_eq!(a["edges"], b["edges"]);
    assert_eq!(std::fs::read_to_string(&dump).unwrap().lines().count(), 300);
}

#[test]
fn simulation_is_thread_independent() {
    let dir = tempfile::tempdir().unwrap();
    let model = write_model(dir.path(), "chain", "0.3,0.2,0.25");
    let args = ["simulate", "--model", &model, "--n-grid", "40:80:40", "--trials", "300", "--no-exact"];
    let one = run(&[&args[..], &["--threads", "1"]].concat());
    let four = run(&[&args[..], &["--threads", "4"]].concat());
    assert!(one.status.success());
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn crossover_reports_requested_rates() {
    let v = json(&run(&["crossover", "--rho-e", "0.6", "--rho-ep", "-0.18", "--method", "closed,snr"]));
    let (c, s) = (v["closed"].as_f64().unwrap(), v["snr"].as_f64().unwrap());
    assert!((c - s).abs() <= 1e-10 * c);
    assert!(v.get("exact").is_none());
}

#[test]
fn extremal_scan_reports() {
    let v = json(&run(&["extremal-scan", "--d", "5", "--rho", "0.6,0.5,0.4,0.2"]));
    assert_eq!(v["trees"], 125);
    assert_eq!(v["placements_per_tree"], 24);
    assert_eq!(v["holds"], true);
    assert_eq!(run(&["extremal-scan", "--d", "4", "--rho", "0.9,0.5,0.4"]).status.code(), Some(1));
}
