use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mpass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpass"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn result_record(dir: &Path) -> Value {
    let log = fs::read_to_string(dir.join("runlog.jsonl")).unwrap();
    log.lines()
        .map(|l| serde_json::from_str::<Value>(l).unwrap())
        .find(|v| v["event"] == "result")
        .expect("result record")
}

#[test]
fn solve_smooth_benchmark_converges_to_the_saddle() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mpass(&["solve", "--problem", "smooth_double_well", "--out", out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = result_record(dir.path());
    assert_eq!(r["status"], "converged");
    let x: Vec<f64> = serde_json::from_value(r["x"].clone()).unwrap();
    assert!(x.iter().all(|c| c.abs() < 1e-2), "{x:?}");
    for f in ["runlog.jsonl", "certs.csv", "path_final.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let csv = fs::read_to_string(dir.path().join("path_final.csv")).unwrap();
    assert!(csv.starts_with("t,x0,x1,phi,psi,phi_plus_psi"));
}

#[test]
fn solve_nonsmooth_benchmark_exits_zero() {
    let o = mpass(&["solve", "--problem", "nonsmooth_twin_paraboloid", "--n-max", "50"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("converged"));
}

#[test]
fn malformed_inline_expression_is_a_usage_error_naming_the_token() {
    let o = mpass(&[
        "solve", "--phi", "add(x0, foo(x1))", "--separator", "x0", "--z0", "-1,0", "--z1", "1,0",
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("`foo`"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["solve", "--problem", "no_such_problem"][..],
        &["solve", "--grid-m", "1"],
        &["cps", "--mode", "sideways"],
        &["solve", "--problem", "smooth_double_well", "--phi", "x0"],
        &["frobnicate"],
        &["delta", "0,0", "1,0,2"],
    ] {
        let o = mpass(args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
}

#[test]
fn too_few_certificates_is_no_convergence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = mpass(&["solve", "--problem", "smooth_double_well", "--n-max", "4", "--out", out]);
    assert_eq!(o.status.code(), Some(2));
    let r = result_record(dir.path());
    assert_eq!(r["status"], "no_convergence");
    assert!(r["clusters"].as_array().is_some_and(|c| !c.is_empty()));
}

#[test]
fn level_set_that_does_not_separate_is_a_topology_failure() {
    let o = mpass(&[
        "solve",
        "--phi",
        "add(pow(sub(sq(x0),1),2),sq(x1))",
        "--separator",
        "sub(x0,0.5)",
        "--z0",
        "-1,0",
        "--z1",
        "1,0",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("topology"), "{}", stderr(&o));
}

#[test]
fn delta_prints_log_distances() {
    for (args, want) in [(["0,0", "1,0"], 2f64.ln()), (["0,0", "0,0"], 0.0), (["0,0", "3,0"], 4f64.ln())] {
        let o = mpass(&["delta", args[0], args[1]]);
        assert_eq!(o.status.code(), Some(0));
        let d: f64 = stdout(&o).trim().parse().unwrap();
        assert!((d - want).abs() < 1e-4, "{args:?}: {d}");
    }
}

#[test]
fn cps_table_rows_pass_on_benchmark() {
    let o = mpass(&["cps", "--problem", "nonsmooth_twin_paraboloid", "--n-max", "12"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("all rows PASS"));
    assert!(!text.contains("FAIL"));
    assert_eq!(text.lines().filter(|l| l.trim_end().ends_with("PASS  PASS  PASS")).count(), 10);
}

#[test]
fn cps_norm_mode_on_unbounded_separator_warns() {
    let o = mpass(&["cps", "--problem", "smooth_double_well", "--n-max", "6", "--mode", "norm"]);
    assert!(stdout(&o).starts_with("WARNING"), "{}", stdout(&o));
    let o = mpass(&["cps", "--problem", "smooth_double_well_ring", "--n-max", "6", "--mode", "norm"]);
    assert!(!stdout(&o).contains("WARNING"));
}

#[test]
fn cps_below_n_min_prints_an_empty_table() {
    let o = mpass(&["cps", "--problem", "smooth_double_well", "--n-max", "1"]);
    let text = stdout(&o);
    assert!(text.contains("(no rows)") && text.contains("below n_min = 3"), "{text}");
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn dumped_config_reparses_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let o = mpass(&[
        "cps", "--problem", "kinked_ridge", "--n-max", "7", "--grid-m", "24", "--seed", "11", "--mode", "norm",
        "--dump-config",
    ]);
    assert_eq!(o.status.code(), Some(0));
    fs::write(&cfg, &o.stdout).unwrap();
    let again = mpass(&["cps", "--config", cfg.to_str().unwrap(), "--dump-config"]);
    assert_eq!(again.stdout, o.stdout);
    let parsed = mpass::cli::RunConfig::parse(&stdout(&o)).unwrap();
    assert_eq!(parsed.params.grid_m, 24);
    assert_eq!(parsed.params.seed, 11);
}

#[test]
fn same_config_and_seed_give_identical_certificates() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let o = mpass(&[
            "cps", "--problem", "kinked_ridge", "--n-max", "10", "--seed", "7", "--out", d.path().to_str().unwrap(),
        ]);
        assert!(o.status.code().is_some());
    }
    let ca = fs::read(a.path().join("certs.csv")).unwrap();
    let cb = fs::read(b.path().join("certs.csv")).unwrap();
    assert!(!ca.is_empty());
    assert_eq!(ca, cb);
}

#[test]
fn bench_subset_prints_table() {
    let o = mpass(&["bench", "--only", "5,8"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    assert!(text.contains("criterion 5: PASS") && text.contains("criterion 8: PASS"));
    assert!(text.contains("2/2 criteria passed"));
}

#[test]
fn in_process_entry_point_matches_binary() {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = mpass::cli::run(["mpass", "delta", "0,0", "1,0"], &mut out, &mut err);
    assert_eq!(code, 0);
    let d: f64 = String::from_utf8(out).unwrap().trim().parse().unwrap();
    assert!((d - 2f64.ln()).abs() < 1e-4);
}
