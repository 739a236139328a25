use std::process::{Command, Output};

use serde_json::Value;

fn timebin_amp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_timebin-amp"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn number(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn run_reports_amplified_fidelity() {
    let v = json(&timebin_amp(&["run", "--eta", "0.2", "--t", "0.25"]));
    assert_eq!(v["schema_version"], "1");
    assert_eq!(v["command"], "run");
    let r = &v["result"];
    assert!((number(&r["eta_out"]) - 3.0 / 7.0).abs() < 1e-12);
    assert!((number(&r["g"]) - 15.0 / 7.0).abs() < 1e-12);
    assert!((number(&r["p_total"]) - 0.00546875).abs() < 1e-15);
    assert_eq!(r["per_pattern"].as_array().unwrap().len(), 16);
    assert_eq!(r["per_pattern"][0]["correction"], "none");
    assert!(v["meta"].is_object());
}

#[test]
fn perfect_input_stays_perfect() {
    let v = json(&timebin_amp(&[
        "run",
        "--eta",
        "1",
        "--t",
        "0.5",
        "--no-meta",
    ]));
    assert!(v.get("meta").is_none());
    assert!((number(&v["result"]["eta_out"]) - 1.0).abs() < 1e-12);
    assert!((number(&v["result"]["p_total"]) - 0.0625).abs() < 1e-15);
}

#[test]
fn undefined_values_serialize_as_null() {
    let v = json(&timebin_amp(&["run", "--eta", "0", "--t", "0"]));
    assert_eq!(v["result"]["eta_out_defined"], false);
    assert!(v["result"]["g"].is_null());
    assert!(v["result"]["conditioned_output"].is_null());
}

#[test]
fn single_coefficient_is_completed() {
    let v = json(&timebin_amp(&[
        "run", "--alpha", "0.6", "--eta", "0.5", "--t", "0.3",
    ]));
    assert!((number(&v["config"]["beta"]) - 0.8).abs() < 1e-12);
}

#[test]
fn out_of_range_arguments_exit_with_usage_code() {
    for args in [
        &["run", "--eta", "0.2", "--t", "1.5"][..],
        &["run", "--eta", "-0.1", "--t", "0.5"],
        &[
            "run", "--alpha", "0.9", "--beta", "0.9", "--eta", "0.5", "--t", "0.5",
        ],
        &["sweep", "--eta-list", "0.2", "--t-step", "0"],
        &["patterns", "--eta", "0.5"],
    ] {
        let out = timebin_amp(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
    let out = timebin_amp(&["run", "--eta", "0.2", "--t", "1.5"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("--t"));
}

#[test]
fn sweep_is_byte_identical_and_tidy() {
    let args = [
        "sweep",
        "--eta-list",
        "0.2,0.4",
        "--t-min",
        "0.1",
        "--t-max",
        "0.9",
        "--t-step",
        "0.1",
    ];
    let (a, b) = (timebin_amp(&args), timebin_amp(&args));
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# schema_version=1 command=sweep"));
    assert_eq!(lines.next(), Some("eta,t,p1,p2,p_total,eta_prime,g,source"));
    assert_eq!(lines.count(), 18);
}

#[test]
fn sweep_writes_to_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("fig.csv");
    let out = timebin_amp(&[
        "sweep",
        "--eta-list",
        "0.4",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 2 + 99);
}

#[test]
fn unwritable_output_exits_with_io_code() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("fig.csv");
    let out = timebin_amp(&[
        "sweep",
        "--eta-list",
        "0.4",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn brute_sweep_matches_closed_sweep() {
    let common = [
        "sweep",
        "--eta-list",
        "0.3",
        "--t-min",
        "0.1",
        "--t-max",
        "0.9",
        "--t-step",
        "0.2",
        "--format",
        "json",
    ];
    let closed = json(&timebin_amp(&common));
    let brute = json(&timebin_amp(
        &[&common[..], &["--source", "brute"]].concat(),
    ));
    let (c, b) = (
        closed["result"]["rows"].as_array().unwrap(),
        brute["result"]["rows"].as_array().unwrap(),
    );
    assert_eq!(c.len(), 5);
    for (c, b) in c.iter().zip(b) {
        assert_eq!(c["source"], "closed");
        assert_eq!(b["source"], "brute");
        for key in ["p1", "p2", "p_total", "eta_prime", "g"] {
            assert!((number(&c[key]) - number(&b[key])).abs() < 1e-10, "{key}");
        }
    }
}

#[test]
fn gnuplot_layout_has_one_column_per_eta() {
    let out = timebin_amp(&[
        "sweep",
        "--eta-list",
        "0.2,0.8",
        "--t-min",
        "0.1",
        "--t-max",
        "0.3",
        "--t-step",
        "0.1",
        "--layout",
        "gnuplot",
        "--quantity",
        "g",
    ]);
    let text = stdout(&out);
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 3);
    assert!(data.iter().all(|l| l.split(' ').count() == 3));
}

#[test]
fn threads_env_is_validated() {
    let out = Command::new(env!("CARGO_BIN_EXE_timebin-amp"))
        .args(["sweep", "--eta-list", "0.4"])
        .env("TIMEBIN_AMP_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn patterns_lists_sixteen_uniform_rows() {
    let out = timebin_amp(&["patterns", "--eta", "0.5", "--t", "0.5", "--format", "csv"]);
    let text = stdout(&out);
    let rows: Vec<&str> = text.lines().skip(2).collect();
    assert_eq!(rows.len(), 16);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        for p in &cells[1..3] {
            assert!((p.parse::<f64>().unwrap() - 0.00390625).abs() < 1e-15);
        }
    }
}

#[test]
fn patterns_vanish_without_transmission() {
    let v = json(&timebin_amp(&[
        "patterns",
        "--eta",
        "0.5",
        "--t",
        "0",
        "--format",
        "json",
        "--branch",
        "entangled",
    ]));
    let rows = v["result"]["patterns"].as_array().unwrap();
    assert_eq!(rows.len(), 16);
    assert!(rows
        .iter()
        .all(|r| number(&r["prob_entangled"]) == 0.0 && r.get("prob_vacuum").is_none()));
}

#[test]
fn patterns_table_is_human_readable() {
    let text = stdout(&timebin_amp(&[
        "patterns", "--eta", "0.5", "--t", "0.25", "--branch", "vacuum",
    ]));
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("pattern"));
    assert!(lines.next().unwrap().starts_with("D1aD2aD1bD2b"));
}

#[test]
fn verify_passes_and_detects_mutation() {
    let ok = timebin_amp(&["verify", "--grid", "quick"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stdout(&ok));
    assert!(stdout(&ok).contains("7/7 checks passed"));
    let bad = timebin_amp(&["verify", "--mutate-bs-sign"]);
    assert_eq!(bad.status.code(), Some(1));
    assert!(stdout(&bad).starts_with("FAIL element isometry"));
}
