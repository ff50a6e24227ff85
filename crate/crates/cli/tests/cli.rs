use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn gcov(dir: &Path, args: &[&str], config: Option<Value>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_gcov"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(c) = config {
        let p = dir.join("config.json");
        std::fs::write(&p, serde_json::to_vec(&c).unwrap()).unwrap();
        cmd.arg("--config").arg(p);
    }
    cmd.output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap()
}

fn single_line_error(o: &Output) {
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with("error: "), "{err}");
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"spec": {"model": "mar", "r": 1, "s": 1, "phi": [0.3], "psi": [0.8]}, "t": 1000, "dist": {"kind": "student_t", "nu": 5.0}});
    let o = gcov(dir.path(), &["simulate", "--seed", "7"], Some(cfg.clone()));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let series = std::fs::read_to_string(dir.path().join("out/series.csv")).unwrap();
    let errors = std::fs::read_to_string(dir.path().join("out/errors.csv")).unwrap();
    assert_eq!(series.lines().count(), 1001);
    assert_eq!(errors.lines().count(), 1001);
    let meta = read_json(&dir.path().join("out/series.json"));
    assert_eq!(meta["provenance"]["seed"], json!(7));
    assert!(meta["provenance"]["config_hash"].as_str().unwrap().len() == 64);

    let o = gcov(dir.path(), &["simulate", "--seed", "7"], Some(cfg));
    assert!(o.status.success());
    assert_eq!(std::fs::read_to_string(dir.path().join("out/series.csv")).unwrap(), series);
}

#[test]
fn dar21_simulation_is_finite() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"spec": {"model": "dar", "p": 2, "q": 1, "phi": [0.4, 0.2], "omega": 1.0, "alpha": [0.4]}, "t": 1000, "seed": 3});
    let o = gcov(dir.path(), &["simulate"], Some(cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let meta = read_json(&dir.path().join("out/series.json"));
    assert_eq!(meta["result"]["all_finite"], json!(true));
}

#[test]
fn infeasible_simulation_needs_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"spec": {"model": "mar", "r": 2, "s": 0, "phi": [0.8, 0.4], "psi": []}, "t": 200});
    let o = gcov(dir.path(), &["simulate", "--seed", "1"], Some(cfg.clone()));
    single_line_error(&o);
    let o = gcov(dir.path(), &["simulate", "--seed", "1", "--allow-infeasible"], Some(cfg));
    assert!(o.status.success());
}

#[test]
fn errors_are_single_line() {
    let dir = tempfile::tempdir().unwrap();
    single_line_error(&gcov(dir.path(), &["simulate"], Some(json!({"spec": {"model": "mar", "r": 1, "s": 0, "phi": [0.5], "psi": []}, "t": 10}))));
    single_line_error(&gcov(dir.path(), &["simulate", "--seed", "1"], Some(json!({"t": 10, "bogus": 1}))));
    single_line_error(&gcov(dir.path(), &["nonsense"], None));
    single_line_error(&gcov(dir.path(), &["montecarlo", "table4", "--scale", "2", "--seed", "1"], None));
    single_line_error(&gcov(dir.path(), &["estimate", "--seed", "1"], Some(json!({"input": {"path": "missing.csv"}, "order": {"model": "mar", "r": 1, "s": 0}}))));
}

#[test]
fn flip_binding_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"kind": "flip", "spec": {"r": 1, "s": 1, "phi": [0.3], "psi": [0.8]}, "q": 1});
    let o = gcov(dir.path(), &["binding"], Some(cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("out/binding.json"));
    let psi = &r["result"]["candidates"][0]["spec"]["psi"];
    assert!((psi[0].as_f64().unwrap() - (0.8 + 1.0 / 0.3)).abs() < 1e-10);
    assert!((psi[1].as_f64().unwrap() + 0.8 / 0.3).abs() < 1e-10);
}

#[test]
fn estimate_and_test_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let sim = json!({"spec": {"model": "mar", "r": 1, "s": 1, "phi": [0.3], "psi": [0.8]}, "t": 600});
    assert!(gcov(dir.path(), &["simulate", "--seed", "2"], Some(sim)).status.success());
    let input = json!({"path": dir.path().join("out/series.csv"), "column": "y"});
    let est = json!({
        "input": input,
        "order": {"model": "mar", "r": 1, "s": 1},
        "gcov": {"h": 3, "transforms": ["power:1", "power:2"], "n_starts": 6},
        "constraints": "mar",
        "sandwich": {"replications": 50}
    });
    let o = gcov(dir.path(), &["estimate", "--seed", "4"], Some(est));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("out/estimate.json"));
    let th = r["result"]["theta_hat"].as_array().unwrap();
    assert!((th[0].as_f64().unwrap() - 0.3).abs() < 0.15);
    assert!((th[1].as_f64().unwrap() - 0.8).abs() < 0.15);
    assert_eq!(r["result"]["se"].as_array().unwrap().len(), 2);

    let t = json!({"input": input, "test": {"kind": "nlsd"}, "gcov": {"h": 3}});
    let o = gcov(dir.path(), &["test"], Some(t));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("out/test.json"));
    assert_eq!(r["result"]["test"]["reject"], json!(true));
}

#[test]
fn select_dar_trail_is_short() {
    let dir = tempfile::tempdir().unwrap();
    let sim = json!({"spec": {"model": "dar", "p": 2, "q": 1, "phi": [0.4, 0.2], "omega": 1.0, "alpha": [0.4]}, "t": 1000});
    assert!(gcov(dir.path(), &["simulate", "--seed", "5"], Some(sim)).status.success());
    let cfg = json!({
        "input": {"path": dir.path().join("out/series.csv"), "column": "y"},
        "gcov": {"h": 3, "transforms": ["power:1", "power:2"], "n_starts": 4},
        "max_order": 2,
        "b": 99
    });
    let o = gcov(dir.path(), &["select-dar", "--seed", "6"], Some(cfg));
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.path().join("out/select_dar.json"));
    let trail = r["result"]["trail"].as_array().unwrap();
    assert!(!trail.is_empty() && trail.len() <= 4);
    let csv = std::fs::read_to_string(dir.path().join("out/select_dar.csv")).unwrap();
    assert_eq!(csv.lines().count(), trail.len() + 1);
}

#[test]
fn montecarlo_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        let o = Command::new(env!("CARGO_BIN_EXE_gcov"))
            .args(["montecarlo", "figC2", "--scale", "0.0005", "--seed", "9", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(out.join("figC2.csv")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    assert_eq!(String::from_utf8(a).unwrap().lines().count(), 6);
}
