use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

fn drqp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drqp")).args(args).output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn vec_of(v: &Value) -> Vec<f64> {
    v.as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect()
}

#[test]
fn solve_qpex1_writes_result_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let result = dir.path().join("result.json");
    let out = drqp(&[
        "solve", "--builtin", "qpex1", "--beta", "1", "--lambda0", "3,3", "--reference",
        "--trace", trace.to_str().unwrap(), "--out", result.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&result).unwrap()).unwrap();
    let y = vec_of(&v["kkt"]["y"]);
    assert!(y[0].abs() < 1e-5 && (y[1] - 1.0).abs() < 1e-5, "{y:?}");

    let mut rd = csv::Reader::from_path(&trace).unwrap();
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(
        header,
        ["k", "norm_dy", "norm_dw", "norm_dlam", "norm_dv", "cos_theta", "ratio_b", "opt_residual", "dist_v", "rate", "active_subset"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), v["iterations"].as_u64().unwrap() as usize);
    assert_eq!(&rows.last().unwrap()[10], "1");
}

#[test]
fn trace_without_reference_has_base_columns() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.csv");
    let out = drqp(&["solve", "--builtin", "qpex2(1,10)", "--beta", "1", "--trace", trace.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let mut rd = csv::Reader::from_path(&trace).unwrap();
    assert_eq!(rd.headers().unwrap().len(), 8);
}

#[test]
fn solve_infeasible_exits_two_with_certificate() {
    let out = drqp(&["solve", "--builtin", "qpex3", "--beta", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["status"], "Infeasible");
    let y = vec_of(&v["certificate"]["y_circ"]);
    assert!((y[0] - 3.0).abs() < 1e-6 && (y[1] - 4.0).abs() < 1e-6);
}

#[test]
fn auto_beta_on_qpex1_is_one() {
    let out = drqp(&["solve", "--builtin", "qpex1", "--beta", "auto"]);
    assert_eq!(out.status.code(), Some(0));
    assert!((json(&out)["beta"].as_f64().unwrap() - 1.0).abs() < 1e-9);
}

#[test]
fn iteration_limit_exits_three() {
    let out = drqp(&["solve", "--builtin", "qpex1", "--max-iter", "3"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_input_exits_one() {
    for args in [
        &["solve", "--builtin", "qpex9"][..],
        &["solve", "--builtin", "qpex1", "--beta", "-1"],
        &["solve", "--builtin", "qpex1", "--lambda0", "1,2,3"],
        &["solve"],
        &["rate-table", "--query", "1.5,0,1"],
        &["beta-sweep", "--builtin", "qpex1", "--betas", ""],
    ] {
        let out = drqp(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn rate_table_layout_and_query() {
    let out = drqp(&["rate-table"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<Vec<&str>> = text.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(lines.len(), 7);
    assert!(lines.iter().all(|l| l.len() == 7));
    let cell: f64 = lines[3][3].parse().unwrap();
    assert!((cell - 0.763).abs() < 5e-3);

    let alpha = String::from_utf8(drqp(&["rate-table", "--mode", "alpha"]).stdout).unwrap();
    let cell: f64 = alpha.lines().nth(4).unwrap().split('\t').nth(1).unwrap().parse().unwrap();
    assert!((cell - 0.775).abs() < 5e-3);

    let q = String::from_utf8(drqp(&["rate-table", "--query", "0,0,1"]).stdout).unwrap();
    assert_eq!(q.trim(), "0.500000");
}

#[test]
fn rate_table_is_deterministic() {
    let a = drqp(&["rate-table", "--mz", "0.1,0.5", "--rows", "0.3,0.7"]).stdout;
    let b = drqp(&["rate-table", "--mz", "0.1,0.5", "--rows", "0.3,0.7"]).stdout;
    assert_eq!(a, b);
}

#[test]
fn beta_sweep_marks_optimum() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = drqp(&["beta-sweep", "--builtin", "qpex1", "--grid", "0.1:10:9", "--out", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 10);
    assert_eq!(rows.iter().filter(|r| &r[4] == "1").count(), 1);
    let best = rows.iter().min_by_key(|r| r[2].parse::<usize>().unwrap()).unwrap();
    let beta: f64 = best[0].parse().unwrap();
    assert!((0.5..=2.0).contains(&beta), "fastest beta {beta}");
}

#[test]
fn certify_verdicts() {
    let out = drqp(&["certify", "--builtin", "qpex3-variant(3)", "--beta", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "infeasible");
    let lq = vec_of(&v["certificate"]["lambda_q"]);
    assert!((lq[0] - 1.0).abs() < 1e-6 && lq[1].abs() < 1e-6);

    let out = drqp(&["certify", "--builtin", "qpex1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["verdict"], "feasible");
    assert_eq!(v["distance"].as_f64(), Some(0.0));
}

#[test]
fn validate_reads_files() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    fs::write(&good, drqp::save_problem(&drqp::builtin::qpex2::<f64>(1.0, 10.0))).unwrap();
    let out = drqp(&["validate", "--file", good.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["passed"], true);

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"n": 2, "m": 2, "Q": [[1, 0], [0, 1]], "q": [0, 0], "A": [[1, 1], [2, 2]], "b": [1, 2], "lower": [0, 0], "upper": [1, 1]}"#,
    )
    .unwrap();
    let out = drqp(&["validate", "--file", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["passed"], false);
}
