use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use otdual_cli::io::{parse_matrix, parse_vector};
use serde_json::Value;
use tempfile::TempDir;

fn otdual(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_otdual")).args(args).output().expect("binary runs")
}

fn put(dir: &Path, name: &str, contents: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, contents).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json_stdout(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn bump(n: usize, centre: f64, width: f64) -> String {
    let v: Vec<f64> = (0..n).map(|i| (-(i as f64 / (n - 1) as f64 - centre).powi(2) / (2.0 * width * width)).exp() + 1e-3).collect();
    let t: f64 = v.iter().sum();
    otdual_cli::io::format_vector(&v.iter().map(|x| x / t).collect::<Vec<_>>())
}

fn read_vec(p: &Path) -> Vec<f64> {
    parse_vector(&fs::read_to_string(p).unwrap(), "test").unwrap()
}

fn l1(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

#[test]
fn point_masses_give_minus_epsilon() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", "# a single bin\n1\n");
    let c = put(d.path(), "c.csv", "0\n");
    let v = json_stdout(&otdual(&["distance", "--a", s(&a), "--b", s(&a), "--cost", s(&c), "--epsilon", "0.3"]));
    assert!((v["value"].as_f64().unwrap() + 0.3).abs() < 1e-15);
    assert!((v["dual_value"].as_f64().unwrap() + 0.3).abs() < 1e-15);
}

#[test]
fn zero_epsilon_uses_the_exact_solver() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", "0.5\n0.5\n");
    let b = put(d.path(), "b.txt", "0.25\n0.75\n");
    let c = put(d.path(), "c.csv", "0,1\n1,0\n");
    let v = json_stdout(&otdual(&["distance", "--a", s(&a), "--b", s(&b), "--cost", s(&c), "--epsilon", "0"]));
    assert_eq!(v["solver"], "network-simplex");
    assert!((v["value"].as_f64().unwrap() - 0.25).abs() < 1e-15);
    assert!((v["dual_value"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn huge_epsilon_coupling_is_the_product() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", "0.2\n0.3\n0.5\n");
    let b = put(d.path(), "b.txt", "0.6\n0.1\n0.3\n");
    let p = d.path().join("p.csv");
    let v = json_stdout(&otdual(&[
        "distance", "--a", s(&a), "--b", s(&b), "--grid", "line", "--epsilon", "1e6", "--dump-coupling", s(&p),
    ]));
    assert_eq!(v["converged"], true);
    let m = parse_matrix(&fs::read_to_string(&p).unwrap(), "p").unwrap();
    let (av, bv) = ([0.2, 0.3, 0.5], [0.6, 0.1, 0.3]);
    for i in 0..3 {
        for j in 0..3 {
            assert!((m[[i, j]] - av[i] * bv[j]).abs() < 1e-6);
        }
    }
}

#[test]
fn rescale_median_changes_the_cost_scale() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", &bump(12, 0.2, 0.1));
    let b = put(d.path(), "b.txt", &bump(12, 0.8, 0.1));
    let base = ["distance", "--a", s(&a), "--b", s(&b), "--grid", "line:-6:6", "--epsilon", "0"];
    let raw = json_stdout(&otdual(&base))["value"].as_f64().unwrap();
    let mut args = base.to_vec();
    args.push("--rescale-median");
    let scaled = json_stdout(&otdual(&args))["value"].as_f64().unwrap();
    let pts: Vec<f64> = (0..12).map(|i| -6.0 + 12.0 * i as f64 / 11.0).collect();
    let mut c: Vec<f64> = pts.iter().flat_map(|x| pts.iter().map(move |y| (x - y) * (x - y))).collect();
    c.sort_by(f64::total_cmp);
    let median = 0.5 * (c[71] + c[72]);
    assert!((scaled - raw / median).abs() < 1e-12 * raw);
}

#[test]
fn identical_inputs_reproduce_the_single_input_file() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", &bump(25, 0.4, 0.15));
    let cfg = put(d.path(), "cfg.json", r#"{"epsilon": 0.01, "tol": 1e-9, "seed": 7}"#);
    let one = d.path().join("one");
    let two = d.path().join("two");
    assert!(otdual(&["barycenter", "--config", s(&cfg), "--out", s(&one), s(&a)]).status.success());
    assert!(otdual(&["barycenter", "--config", s(&cfg), "--out", s(&two), s(&a), s(&a)]).status.success());
    assert_eq!(fs::read(one.join("barycenter.csv")).unwrap(), fs::read(two.join("barycenter.csv")).unwrap());
}

#[test]
fn regbary_without_regularization_matches_barycenter() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", &bump(30, 0.25, 0.08));
    let b = put(d.path(), "b.txt", &bump(30, 0.7, 0.1));
    let cb = put(d.path(), "cb.json", r#"{"epsilon": 0.01, "tol": 1e-10, "max_iter": 100000}"#);
    let cr = put(d.path(), "cr.json", r#"{"epsilon": 0.01, "lambda": 0, "tol": 1e-10, "max_iter": 100000}"#);
    let (ob, or) = (d.path().join("b"), d.path().join("r"));
    let out = otdual(&["barycenter", "--config", s(&cb), "--out", s(&ob), s(&a), s(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = otdual(&["regbary", "--config", s(&cr), "--out", s(&or), s(&a), s(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let e = l1(&read_vec(&ob.join("barycenter.csv")), &read_vec(&or.join("barycenter.csv")));
    assert!(e <= 1e-5, "ℓ¹ gap {e}");
}

#[test]
fn one_flow_step_is_a_regularized_barycenter() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", &bump(30, 0.4, 0.12));
    let cf = put(d.path(), "cf.json", r#"{"epsilon": 0.02, "lambda": 1, "tau": 0.1, "steps": 1, "tol": 1e-9}"#);
    // The JKO step scales the regularizer by the time step.
    let cr = put(d.path(), "cr.json", r#"{"epsilon": 0.02, "lambda": 0.1, "tol": 1e-9}"#);
    let (of, or) = (d.path().join("f"), d.path().join("r"));
    let out = otdual(&["flow", "--config", s(&cf), "--out", s(&of), s(&a)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(otdual(&["regbary", "--config", s(&cr), "--out", s(&or), s(&a)]).status.success());
    assert_eq!(fs::read(of.join("final.csv")).unwrap(), fs::read(or.join("barycenter.csv")).unwrap());
    let traj = parse_matrix(&fs::read_to_string(of.join("trajectory.csv")).unwrap(), "t").unwrap();
    assert_eq!(traj.dim(), (2, 30));
    let summary: Value = serde_json::from_str(&fs::read_to_string(of.join("summary.json")).unwrap()).unwrap();
    assert!(summary["monitor_trace"][0].as_f64().unwrap() <= 1e-7);
}

#[test]
fn invalid_configs_name_every_bad_key() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", "1\n");
    let cfg = put(d.path(), "cfg.json", r#"{"epsilon": "small", "max_iter": -3, "colour": "red"}"#);
    let out = otdual(&["barycenter", "--config", s(&cfg), "--out", s(&d.path().join("o")), s(&a)]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    for key in ["epsilon:", "max_iter:", "colour:"] {
        assert!(err.contains(key), "{key} missing from {err}");
    }
}

#[test]
fn missing_files_fail_with_a_message() {
    let out = otdual(&["distance", "--a", "/nonexistent/a.txt", "--b", "/nonexistent/b.txt", "--epsilon", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/a.txt"));
}

#[test]
fn exhausted_budget_exits_with_two_and_still_writes() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", &bump(20, 0.2, 0.1));
    let b = put(d.path(), "b.txt", &bump(20, 0.8, 0.1));
    let cfg = put(d.path(), "cfg.json", r#"{"epsilon": 0.01, "tol": 1e-12, "max_iter": 3}"#);
    let o = d.path().join("o");
    let out = otdual(&["barycenter", "--config", s(&cfg), "--out", s(&o), s(&a), s(&b)]);
    assert_eq!(out.status.code(), Some(2));
    let summary: Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], false);
    assert_eq!(summary["objective_trace"].as_array().unwrap().len(), 4);
    assert_eq!(read_vec(&o.join("barycenter.csv")).len(), 20);
}

#[test]
fn thread_count_does_not_change_results() {
    let d = TempDir::new().unwrap();
    let n = 200;
    let a = put(d.path(), "a.txt", &bump(n, 0.3, 0.1));
    let b = put(d.path(), "b.txt", &bump(n, 0.6, 0.05));
    let cfg = put(d.path(), "cfg.json", r#"{"epsilon": 0.005, "tol": 1e-8, "max_iter": 2000}"#);
    let run = |threads: &str, dir: &str| {
        let o = d.path().join(dir);
        let out = Command::new(env!("CARGO_BIN_EXE_otdual"))
            .env("OT_THREADS", threads)
            .args(["barycenter", "--config", s(&cfg), "--out", s(&o), s(&a), s(&b)])
            .output()
            .unwrap();
        assert!(out.status.code().is_some_and(|c| c != 1), "{}", String::from_utf8_lossy(&out.stderr));
        fs::read(o.join("barycenter.csv")).unwrap()
    };
    assert_eq!(run("1", "one"), run("4", "four"));
}

#[test]
fn pgm_inputs_produce_pgm_outputs() {
    let d = TempDir::new().unwrap();
    let img = |cx: usize| {
        let mut s = String::from("P2\n# test image\n6 6\n255\n");
        for r in 0usize..6 {
            let row: Vec<String> = (0usize..6).map(|c| if r.abs_diff(cx) <= 1 && c.abs_diff(cx) <= 1 { "255" } else { "3" }.to_string()).collect();
            s.push_str(&row.join(" "));
            s.push('\n');
        }
        s
    };
    let a = put(d.path(), "a.pgm", &img(1));
    let b = put(d.path(), "b.pgm", &img(4));
    let o = d.path().join("o");
    let out = otdual(&["barycenter", "--out", s(&o), s(&a), s(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let bary = read_vec(&o.join("barycenter.csv"));
    assert_eq!(bary.len(), 36);
    assert!((bary.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let pgm = otdual_cli::io::parse_pgm(&fs::read_to_string(o.join("barycenter.pgm")).unwrap(), "out").unwrap();
    assert_eq!((pgm.width, pgm.height), (6, 6));
    let summary: Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["epsilon"].as_f64().unwrap(), 1.0 / 36.0);
}

#[test]
fn semidiscrete_symmetric_instance() {
    let d = TempDir::new().unwrap();
    let pts: String = (0..200).map(|i| format!("{}\n", -1.0 + (2 * i + 1) as f64 / 200.0)).collect();
    let src = put(d.path(), "x.csv", &pts);
    let sites = put(d.path(), "y.csv", "-0.5\n0.5\n");
    let masses = put(d.path(), "b.txt", "0.5\n0.5\n");
    let cfg = put(d.path(), "cfg.json", r#"{"epsilon": 0.05, "tol": 1e-10}"#);
    let o = d.path().join("o");
    let out = otdual(&[
        "semidiscrete", "--config", s(&cfg), "--out", s(&o), "--source", s(&src), "--sites", s(&sites), "--masses", s(&masses),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let g = read_vec(&o.join("g.csv"));
    assert!(g.iter().all(|v| v.abs() <= 1e-4));
    let summary: Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    for m in summary["cell_masses"].as_array().unwrap() {
        assert!((m.as_f64().unwrap() - 0.5).abs() <= 1e-3);
    }
}

#[test]
fn zero_epsilon_barycenter_is_exact() {
    let d = TempDir::new().unwrap();
    let a = put(d.path(), "a.txt", "1\n0\n0\n0\n");
    let b = put(d.path(), "b.txt", "0\n0\n0\n1\n");
    let cfg = put(d.path(), "cfg.json", r#"{"epsilon": 0}"#);
    let o = d.path().join("o");
    let out = otdual(&["barycenter", "--config", s(&cfg), "--out", s(&o), s(&a), s(&b)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(o.join("summary.json")).unwrap()).unwrap();
    // Grid 0, ⅓, ⅔, 1: the best support point is ⅓ or ⅔, at cost ½(1/9 + 4/9).
    let value = summary["value"].as_f64().unwrap();
    assert!((value - 5.0 / 18.0).abs() < 1e-12, "value {value}");
}
