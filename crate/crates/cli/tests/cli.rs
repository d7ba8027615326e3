use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cesbound")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn unknown_scale_exits_2_and_lists_valid_names() {
    for cmd in ["bounds", "simulate"] {
        let o = run(&[cmd, "--scale", "bogus"]);
        assert_eq!(o.status.code(), Some(2), "{cmd}");
        let err = stderr(&o);
        for name in ["first-element", "normalized-trace", "det-root"] {
            assert!(err.contains(name), "{err}");
        }
    }
}

#[test]
fn bad_config_and_usage_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"schema": 1, "simulation": {"nu_grid": [1.5]}}"#).unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("> 2"));
    assert_eq!(run(&["simulate", "--config", "/nonexistent/c.json"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "--level", "slow"]).status.code(), Some(2));
    assert_eq!(run(&["nonsense"]).status.code(), Some(2));
}

#[test]
fn verify_fast_passes_and_corruption_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["verify", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(dir.path().join("verify_fast.json").exists());

    let o = run(&["verify", "--corrupt-duplication"]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.lines().any(|l| l.starts_with("FAIL") && l.contains("D_m vecs(A) = vec(A)")), "{out}");
}

#[test]
fn bounds_writes_csv_and_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let a = run(&["bounds", "--scale", "first-element", "--out", d]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    let b = run(&["bounds", "--scale", "first-element"]);
    let table_a: String = stdout(&a).lines().filter(|l| !l.starts_with("wrote")).collect();
    let table_b: String = stdout(&b).lines().collect();
    assert_eq!(table_a, table_b);
    let csv = std::fs::read_to_string(dir.path().join("bounds_first-element.csv")).unwrap();
    assert!(csv.starts_with("generator,block,row,col,value"));
    assert!(dir.path().join("bounds_first-element.chain.json").exists());
}

#[test]
fn adaptivity_default_model_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["adaptivity", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("yes"));
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("adaptivity.json")).unwrap()).unwrap();
    assert_eq!(json["entries"].as_array().unwrap().len(), 2);
}

fn simulate_into(dir: &Path, parallelism: &str) -> String {
    let o = run(&[
        "simulate", "--nu", "3,10", "--trials", "20", "--seed", "11", "--scale", "det-root", "--parallelism", parallelism,
        "--out", dir.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    std::fs::read_to_string(dir.join("mse_det-root.csv")).unwrap()
}

#[test]
fn simulate_is_reproducible_across_parallelism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let csv_a = simulate_into(a.path(), "1");
    let csv_b = simulate_into(b.path(), "3");
    assert_eq!(csv_a, csv_b);
    assert_eq!(csv_a.lines().count(), 1 + 2 * 4);
    assert!(a.path().join("mse_det-root.svg").exists());
    assert!(a.path().join("mse_det-root.meta.json").exists());
}

#[test]
fn config_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(
        &cfg,
        r#"{"schema": 1, "simulation": {"m": 3, "n": 40, "nu_grid": [4.0], "trials": 5, "estimators": ["scm"], "svg": false}}"#,
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--scale", "all", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for scale in ["first-element", "normalized-trace", "det-root"] {
        let csv = std::fs::read_to_string(out.join(format!("mse_{scale}.csv"))).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("4,scm,"));
        assert!(!out.join(format!("mse_{scale}.svg")).exists());
    }
}
