use std::path::Path;
use std::process::{Command, Output};

fn primplan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_primplan")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn generate_index_inspect_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("low.pplib");
    let idx = dir.path().join("low.ppidx");

    let out = primplan(&["generate-library", "--preset", "low", "--out", s(&lib)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("paths: 25"));
    assert!(stdout(&out).contains("infeasible pairs: 0"));

    let out = primplan(&["build-index", "--library", s(&lib), "--out", s(&idx)]);
    assert!(out.status.success(), "{}", stderr(&out));

    let out = primplan(&["inspect", "--library", s(&lib), "--index", s(&idx)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("matches library: yes"));
}

#[test]
fn malformed_config_exits_2_naming_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[library]\nspeed_step = -0.1\n").unwrap();
    let out = primplan(&["generate-library", "--config", s(&cfg), "--out", s(&dir.path().join("x.pplib"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("library.speed_step"), "{}", stderr(&out));

    std::fs::write(&cfg, "[library\n").unwrap();
    let out = primplan(&["generate-library", "--config", s(&cfg), "--out", s(&dir.path().join("x.pplib"))]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(primplan(&["simulate", "--seed", "abc"]).status.code(), Some(2));
    assert_eq!(primplan(&["benchmark", "--seeds", "4..1", "--out", "x"]).status.code(), Some(2));
    assert_eq!(primplan(&["inspect"]).status.code(), Some(2));
}

#[test]
fn stale_index_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let low = dir.path().join("low.pplib");
    let medium = dir.path().join("medium.pplib");
    let idx = dir.path().join("low.ppidx");
    assert!(primplan(&["generate-library", "--preset", "low", "--out", s(&low)]).status.success());
    assert!(primplan(&["generate-library", "--preset", "medium", "--out", s(&medium)]).status.success());
    assert!(primplan(&["build-index", "--library", s(&low), "--out", s(&idx)]).status.success());

    let out = primplan(&["simulate", "--library", s(&medium), "--index", s(&idx), "--n-obs", "0"]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("rebuild the index"), "{err}");
}

#[test]
fn corrupt_library_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("junk.pplib");
    std::fs::write(&lib, "PPLIB v9\n").unwrap();
    let out = primplan(&["inspect", "--library", s(&lib)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("PPLIB v1"), "{}", stderr(&out));
}

#[test]
fn simulate_empty_map_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[library]\npreset = \"low\"\n").unwrap();
    let out = primplan(&["simulate", "--config", s(&cfg), "--n-obs", "0", "--out", s(dir.path())]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("outcome: Reached"));
    assert!(dir.path().join("speed.svg").exists());
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("t_s,x_m,y_m,z_m,speed_mps"));
}

#[test]
fn benchmark_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let lib = dir.path().join("low.pplib");
    assert!(primplan(&["generate-library", "--preset", "low", "--out", s(&lib)]).status.success());
    let out = primplan(&[
        "benchmark", "--library", s(&lib), "--n-obs", "0,50", "--seeds", "0..2", "--out", s(dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let episodes = std::fs::read_to_string(dir.path().join("episodes.csv")).unwrap();
    assert_eq!(episodes.lines().count(), 1 + 4);
    assert!(episodes.starts_with("seed,n_obs,n_paths,success,t_total_s,d_total_m,mean_check_us,p99_check_us,mean_select_us,emergency_stops"));
    let summary = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 1 + 2);
    for svg in ["timing.svg", "speed.svg"] {
        let text = std::fs::read_to_string(dir.path().join(svg)).unwrap();
        assert!(text.contains("<svg"), "{svg}");
    }
}

#[test]
fn benchmark_index_count_must_match() {
    let out = primplan(&["benchmark", "--library", "a.pplib", "--library", "b.pplib", "--index", "a.ppidx", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
}
