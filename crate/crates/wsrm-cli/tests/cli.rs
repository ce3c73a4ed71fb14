use std::path::Path;
use std::process::{Command, Output};

fn wsrm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wsrm"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn text(out: &[u8]) -> String {
    String::from_utf8_lossy(out).into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("small.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "[network]\ncells = 2\nusers_per_cell = 1\nsubcarriers = 2\nantennas = 1\np_max_dbw = 10.0\n\n[experiment]\ntrials = 2\nseed = 3\n";

#[test]
fn run_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = wsrm(&["run", &config, "--trials", "3", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    for f in ["manifest.json", "aggregate.csv", "trials.csv", "trials/trial_0002.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["experiment"]["trials"], 3);

    let again = dir.path().join("again");
    let o = wsrm(&[
        "replay",
        out.join("manifest.json").to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    assert!(text(&o.stdout).starts_with("replay identical"));
}

#[test]
fn sweep_requires_a_sweep_section() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let o = wsrm(&["sweep", &config, "--out", dir.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(text(&o.stderr).contains("no [sweep] section"));

    let swept = write_config(dir.path(), &format!("{SMALL}\n[sweep]\nepsilon = [1e-4, 1e-3]\n"));
    let out = dir.path().join("s");
    let o = wsrm(&["sweep", &swept, "--sequential", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let agg = std::fs::read_to_string(out.join("aggregate.csv")).unwrap();
    assert_eq!(agg.lines().count(), 3);
    assert!(out.join("point_01/trials.csv").exists());
}

#[test]
fn bad_config_names_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[network]\ncells = 2\n");
    let o = wsrm(&["run", &config]);
    assert!(!o.status.success());
    let err = text(&o.stderr);
    assert!(err.starts_with("error:") && err.contains("small.toml"), "{err}");
}

#[test]
fn water_filling_from_the_command_line() {
    let o = wsrm(&["oracle", "wf", "--gains", "1,1,1,1", "--p-max", "4"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["rate"].as_f64().unwrap() - 4.0).abs() < 1e-9);
}

#[test]
fn grid_oracle_reports_both_sides() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        "[network]\ncells = 2\nusers_per_cell = 1\nsubcarriers = 1\nantennas = 1\np_max_dbw = 10.0\n",
    );
    let o = wsrm(&["oracle", "grid", &config, "--points", "21"]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let grid = v["grid"]["wsr"].as_f64().unwrap();
    let spca = v["spca_wsr"].as_f64().unwrap();
    assert!(grid > 0.0 && spca > 0.0);
}

#[test]
fn solve_a_program_file() {
    let dir = tempfile::tempdir().unwrap();
    // minimize t subject to ‖(3, 4)‖ ≤ t
    let mut p = conic::ConicProgram::new();
    let t = p.add_var();
    p.set_cost(t, 1.0);
    p.add_soc(
        conic::Affine::var(t),
        vec![conic::Affine::constant(3.0), conic::Affine::constant(4.0)],
    );
    let path = dir.path().join("p.txt");
    std::fs::write(&path, conic::text::write_program(&p)).unwrap();
    let o = wsrm(&["solve", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", text(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["status"], "optimal");
    assert!((v["x"][0].as_f64().unwrap() - 5.0).abs() < 1e-6);
}
