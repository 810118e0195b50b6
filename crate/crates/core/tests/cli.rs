use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_homoglab")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn homogenize_prints_effective_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "h.toml",
        "[coefficients]\na = \"two-phase-1d\"\na_params = [1.0, 4.0]\nb = \"constant\"\nb_params = [2.0]\n",
    );
    let out = run(&["homogenize", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let a0 = json["A0"][0][0][0].as_f64().unwrap();
    assert!((a0 - 1.6).abs() < 1e-9, "{json}");
}

#[test]
fn solve_writes_csv_to_output_path() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("u.csv");
    let cfg = write_config(
        dir.path(),
        "s.toml",
        &format!("[mesh]\nn = 64\n[output]\npath = {:?}\n", csv.to_string_lossy()),
    );
    let out = run(&["solve", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 64);
    assert!(text.lines().next().unwrap().contains(','));
}

#[test]
fn bad_config_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "bad.toml", "[mesh]\ndim = 3\n");
    let out = run(&["solve", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = write_config(dir.path(), "unknown.toml", "[mesh]\nsize = 3\n");
    assert_eq!(run(&["solve", &cfg]).status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_code_two() {
    let out = run(&["solve", "/nonexistent/config.toml"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[mesh]\nn = 256\n[coefficients]\na = \"two-phase-1d\"\na_params = [1.0, 4.0]\ncell_resolution = 128\n\
                [sweep]\nkind = \"energy-strong\"\neps = [4, 8, 16]\n";
    let cfg = write_config(dir.path(), "sweep.toml", body);
    let first = run(&["sweep", &cfg]);
    let second = run(&["sweep", &cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert!(text.starts_with("eps,"));
    assert!(text.lines().any(|l| l.starts_with("limit,")));
}

#[test]
fn measure_report_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let body = "[mesh]\nn = 128\n[coefficients]\na = \"two-phase-1d\"\na_params = [1.0, 4.0]\neps = 8\n\
                [measure]\nlambda = \"dirac(0.3, 1.0) + dirac(0.7, -0.5)\"\ntrials = 5\nseed = 7\n";
    let cfg = write_config(dir.path(), "m.toml", body);
    let first = run(&["measure", &cfg]);
    let second = run(&["measure", &cfg]);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert_eq!(first.stdout, second.stdout);
    let text = String::from_utf8(first.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("trial,left,right,gap"));
    assert_eq!(text.lines().count(), 6);
}
