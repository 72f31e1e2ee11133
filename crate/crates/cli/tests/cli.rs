use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lqrflow"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn floats(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<f64>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines
        .map(|l| l.split(',').map(|x| x.parse::<f64>().unwrap()).collect())
        .collect();
    (header, rows)
}

fn two_state() -> String {
    data("two_state.json").display().to_string()
}

#[test]
fn care_two_state() {
    let out = run(&["care", &two_state(), "--k0", "0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
    // independent check of the CARE residual from the reported P
    let p = floats(&v["p_star"]);
    let (p11, p12, p22) = (p[0], p[1], p[3]);
    let pb = [p11 + p12, p12 + p22];
    let m = [
        -4.0 * p11 - pb[0] * pb[0] / 2.0 + 1.0,
        p11 - 3.0 * p12 - pb[0] * pb[1] / 2.0,
        2.0 * p12 - 2.0 * p22 - pb[1] * pb[1] / 2.0 + 1.0,
    ];
    assert!(m.iter().all(|x| x.abs() <= 1e-10), "{m:?}");
}

#[test]
fn care_scalar_and_sampled_start() {
    let out = run(&["care", data("scalar.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((floats(&v["k_star"])[0] - (2f64.sqrt() - 1.0)).abs() < 1e-9);
    assert_eq!(v["k0_source"], "instance");

    let sampled = run(&["care", &two_state(), "--seed", "3"]);
    assert_eq!(sampled.status.code(), Some(0));
    assert_eq!(json(&sampled)["k0_source"], "sampled");
}

#[test]
fn input_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, "{not json").unwrap();
    let out = run(&["care", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "ParseError");

    let missing = dir.path().join("missing.json");
    fs::write(&missing, r#"{"n":1,"m":1,"a":[-1],"b":[1],"q":[1]}"#).unwrap();
    assert_eq!(run(&["care", missing.to_str().unwrap()]).status.code(), Some(2));

    let short = dir.path().join("short.json");
    fs::write(&short, r#"{"n":2,"m":1,"a":[-1],"b":[1,1],"q":[1,0,0,1],"r":[1]}"#).unwrap();
    assert_eq!(run(&["care", short.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(run(&["eval", &two_state(), "--k", "0,zero"]).status.code(), Some(2));
    assert_eq!(run(&["care", "/nonexistent/instance.json"]).status.code(), Some(2));
}

#[test]
fn care_domain_errors_exit_3() {
    let out = run(&["care", &two_state(), "--k0", "0,-3"]);
    assert_eq!(out.status.code(), Some(3));
    let err: Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["kind"], "NotStabilizing");
    let capped = run(&["care", &two_state(), "--k0", "5,5", "--max-iter", "1"]);
    assert_eq!(capped.status.code(), Some(3));
}

#[test]
fn eval_values() {
    let out = run(&["eval", &two_state(), "--k", "0,0"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!((v["value"].as_f64().unwrap() - 5.0 / 18.0).abs() < 1e-12);
    assert_eq!(v["in_K"], true);
    assert_eq!(floats(&v["m_eigs"]).len(), 2);

    let lqr = json(&run(&["eval", &two_state(), "--k", "0,0", "--objective", "lqr"]));
    assert!((lqr["value"].as_f64().unwrap() - 5.0 / 6.0).abs() < 1e-12);
    assert!(lqr.get("y_eigs").is_some());

    // boundary gain
    assert_eq!(run(&["eval", &two_state(), "--k", "0,-1"]).status.code(), Some(3));
    // unstable but in the sigma set: value without gradient
    let unstable = run(&["eval", &two_state(), "--k", "0,-2"]);
    assert_eq!(unstable.status.code(), Some(0));
    let u = json(&unstable);
    assert!(u["grad"].is_null());
    assert!(u["grad_reason"].is_string());
    assert_eq!(run(&["eval", &two_state(), "--k", "0,-2", "--objective", "lqr"]).status.code(), Some(3));
}

#[test]
fn eval_gradient_vanishes_at_optimum() {
    let care = json(&run(&["care", &two_state(), "--k0", "0,0"]));
    let k = floats(&care["k_star"]);
    let k_arg = format!("{:.17e},{:.17e}", k[0], k[1]);
    for objective in ["bellman", "lqr"] {
        let v = json(&run(&["eval", &two_state(), "--k", &k_arg, "--objective", objective]));
        let g = floats(&v["grad"]);
        assert!(g.iter().all(|x| x.abs() < 1e-8), "{objective}: {g:?}");
    }
}

#[test]
fn flow_reaches_oracle_gain() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let care = json(&run(&["care", &two_state(), "--k0", "0,0"]));
    let k_star = floats(&care["k_star"]);
    for kind in ["bellman", "lqr", "natural"] {
        let out = run(&["flow", &two_state(), "--kind", kind, "--k0", "0,0", "--out", csv.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{kind}");
        let summary = json(&out);
        let k_final = floats(&summary["k_final"]);
        let dist = ((k_final[0] - k_star[0]).powi(2) + (k_final[1] - k_star[1]).powi(2)).sqrt();
        assert!(dist < 1e-6, "{kind}: {dist}");

        let (header, rows) = read_csv(&csv);
        assert_eq!(header, ["t", "k_11", "k_12", "objective", "grad_norm", "abscissa"]);
        assert_eq!(rows.len(), summary["samples"].as_u64().unwrap() as usize);
        let last = rows.last().unwrap();
        assert_eq!(&last[1..3], &k_final[..]);
        assert!(rows.windows(2).all(|w| w[1][0] > w[0][0]));
        assert!(rows.iter().all(|r| r[5] < 0.0));
        assert!(rows
            .windows(2)
            .all(|w| w[1][3] <= w[0][3] + 1e-10 * (1.0 + w[0][3].abs())));
    }
}

#[test]
fn flow_errors() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("traj.csv");
    let csv = csv.to_str().unwrap();
    assert_eq!(run(&["flow", &two_state(), "--k0", "0,-3", "--out", csv]).status.code(), Some(3));
    assert_eq!(run(&["flow", &two_state(), "--k0", "0,0", "--rtol", "-1", "--out", csv]).status.code(), Some(2));
    // a step budget that cannot finish is a numerical failure, with a partial CSV
    let out = run(&["flow", &two_state(), "--k0", "0,0", "--max-steps", "3", "--out", csv]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(json(&out)["status"], "StepFailure");
    let (_, rows) = read_csv(Path::new(csv));
    assert!(!rows.is_empty());
}

#[test]
fn grid_two_state() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let out = run(&["grid", &two_state(), "--k1", "-3:3:121", "--k2", "-3:3:121", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let (header, rows) = read_csv(&csv);
    assert_eq!(header, ["k1", "k2", "value", "stable"]);
    assert_eq!(rows.len(), 121 * 121);
    let origin = rows.iter().find(|r| r[0] == 0.0 && r[1] == 0.0).unwrap();
    assert!((origin[2] - 5.0 / 18.0).abs() < 1e-12);
    for r in &rows {
        let (k1, k2) = (r[0], r[1]);
        if (k2 + k1 + 1.0).abs() < 1e-9 {
            assert!(r[2].is_nan(), "({k1}, {k2})");
        } else {
            assert_eq!(r[3] == 1.0, k2 > -k1 - 1.0, "({k1}, {k2})");
        }
    }
}

#[test]
fn grid_needs_two_states() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("grid.csv");
    let out = run(&["grid", data("scalar.json").to_str().unwrap(), "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(run(&["grid", &two_state(), "--k1", "0:1", "--out", csv.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn bench_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bench.json");
    fs::write(&config, r#"{"num_instances": 6, "seed": 11}"#).unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let res = run(&["bench", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(0));
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 7);
    for name in &names {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name:?}");
    }
    let (header, rows) = read_csv(&a.join("instance_0000.csv"));
    assert_eq!(header, ["t", "rho_bellman", "rho_lqr", "rho_natural"]);
    assert!(rows[0][1..].iter().all(|r| (r - 1.0).abs() <= 1e-12));
    let summary: Value = serde_json::from_slice(&fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["summary"]["num_instances"], 6);

    let other = dir.path().join("c");
    run(&["bench", "--config", config.to_str().unwrap(), "--out", other.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(
        fs::read(a.join("instance_0000.csv")).unwrap(),
        fs::read(other.join("instance_0000.csv")).unwrap()
    );
}

#[test]
fn bench_config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    for text in [r#"{"num_instances": 0}"#, r#"{"n": 1, "m": 2}"#, r#"{"bogus": 1}"#, "[1,"] {
        let config = dir.path().join("bench.json");
        fs::write(&config, text).unwrap();
        let res = run(&["bench", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(2), "{text}");
    }
}
