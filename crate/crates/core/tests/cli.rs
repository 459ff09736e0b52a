use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn msrbf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msrbf"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, cfg: Value) -> String {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    path.to_str().unwrap().to_owned()
}

fn small_franke(out: &Path) -> Value {
    json!({
        "experiment": "franke",
        "kernel": "matern32",
        "gamma": 0.5,
        "levels": 3,
        "q": 2,
        "eval_level": 6,
        "out": out,
    })
}

#[test]
fn successful_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cfg = small_franke(&out);
    cfg["dump_patterns"] = json!(true);
    let path = write_config(dir.path(), "franke.json", cfg);
    let o = msrbf(&["run", "--config", &path]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );

    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "level,n,h,error_2,error_inf,order_2,order_inf,nnz_percent,cg_iterations"
    );
    assert_eq!(lines.count(), 3);

    let meta: Value =
        serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "ok");
    assert_eq!(meta["config"]["levels"], 3);
    assert!(meta["timings"]["total"].as_f64().unwrap() > 0.0);

    // lower block triangle, sorted coordinate lists
    for (l, lp) in [(1, 1), (2, 1), (2, 2), (3, 1), (3, 2), (3, 3)] {
        let text = fs::read_to_string(out.join(format!("pattern_L{l}_Lp{lp}.txt"))).unwrap();
        let keys: Vec<(usize, usize)> = text
            .lines()
            .map(|line| {
                let f: Vec<&str> = line.split_whitespace().collect();
                assert_eq!(f.len(), 3);
                f[2].parse::<f64>().unwrap();
                (f[0].parse().unwrap(), f[1].parse().unwrap())
            })
            .collect();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }
    assert!(!out.join("pattern_L1_Lp2.txt").exists());
}

#[test]
fn overrides_take_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_config(dir.path(), "franke.json", small_franke(&out));
    let other = dir.path().join("other");
    let o = msrbf(&[
        "run",
        "--config",
        &path,
        "--levels",
        "2",
        "--kernel",
        "matern52",
        "--precond",
        "diag",
        "--kappa",
        "1e-8",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    assert!(!out.exists());
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(other.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["config"]["levels"], 2);
    assert_eq!(meta["config"]["kernel"], "matern52");
    assert_eq!(meta["config"]["precond"], "diag");
    assert_eq!(meta["config"]["kappa"], 1e-8);
}

#[test]
fn configuration_errors_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut typo = small_franke(&out);
    typo["gama"] = json!(0.5);
    let typo = write_config(dir.path(), "typo.json", typo);
    let good = write_config(dir.path(), "good.json", small_franke(&out));
    let missing = dir.path().join("missing.json");
    let cloud = write_config(
        dir.path(),
        "cloud.json",
        json!({ "experiment": "cloud", "x0": [0.0, 0.0] }),
    );

    for args in [
        vec!["run", "--config", typo.as_str()],
        vec!["run", "--config", missing.to_str().unwrap()],
        vec!["run", "--config", good.as_str(), "--gamma", "-1"],
        vec!["run", "--config", good.as_str(), "--precond", "ilu"],
        vec!["run", "--config", cloud.as_str()],
        vec!["condition", "--config", typo.as_str()],
        vec!["frobnicate"],
    ] {
        let o = msrbf(&args);
        assert_eq!(
            o.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&o.stderr)
        );
    }
    assert!(!out.exists());
}

#[test]
fn solver_failure_exits_with_one_and_marks_results() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut cfg = small_franke(&out);
    cfg["cg_tol"] = json!(1e-14);
    cfg["max_iters"] = json!(2);
    let path = write_config(dir.path(), "hard.json", cfg);
    let o = msrbf(&["run", "--config", &path]);
    assert_eq!(
        o.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("level"), "{stderr}");
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert!(csv.lines().last().unwrap().starts_with("# FAILED"), "{csv}");
    let meta: Value =
        serde_json::from_str(&fs::read_to_string(out.join("meta.json")).unwrap()).unwrap();
    assert_eq!(meta["status"], "failed");
}

#[test]
fn condition_report_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let path = write_config(dir.path(), "franke.json", small_franke(&out));
    let o = msrbf(&["condition", "--config", &path]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = fs::read_to_string(out.join("condition.csv")).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let conds: Vec<f64> = rows
        .records()
        .map(|r| r.unwrap()[4].parse::<f64>().unwrap())
        .collect();
    assert_eq!(conds.len(), 3);
    assert!(conds.iter().all(|&c| c >= 1.0 && c.is_finite()));
}
