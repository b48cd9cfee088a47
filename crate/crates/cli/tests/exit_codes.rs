use std::process::{Command, Output};

fn pspin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pspin")).args(args).output().unwrap()
}

#[test]
fn success_and_usage() {
    let out = pspin(&["mogp", "tune", "--m", "4", "--gamma", "0.6"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["xi", "eta", "c", "p_star", "psi"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(pspin(&["no-such-command"]).status.code(), Some(1));
    assert_eq!(pspin(&["exponents", "--epsilon"]).status.code(), Some(1));
}

#[test]
fn validation_and_budget() {
    assert_eq!(pspin(&["exponents", "--epsilon", "0.9", "--p", "3"]).status.code(), Some(2));
    assert_eq!(pspin(&["mogp", "tune", "--m", "2", "--gamma", "0.5"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_pspin"))
        .args(["energy-table", "--n", "16", "--p", "2", "--mode", "rem-limit"])
        .env("PSPIN_MEMORY_BUDGET", "1024")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_names_field() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.toml");
    std::fs::write(
        &path,
        "n = 8\np = 2\nbeta = [1.0]\nepsilon = 0.3\nkappa = 0.12\nnu1 = 0.6\nnu2 = 0.45\n",
    )
    .unwrap();
    let out = pspin(&["scan", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("`nu2`"));
}

#[test]
fn table_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let bin = dir.path().join("t.bin");
    let bin = bin.to_str().unwrap();
    let out = pspin(&["energy-table", "--n", "8", "--p", "3", "--seed", "4", "--format", "bin", "--out", bin]);
    assert!(out.status.success());
    let from_file = pspin(&["level-set", "--table", bin, "--epsilon", "0.5"]);
    let rebuilt = pspin(&["level-set", "--n", "8", "--p", "3", "--seed", "4", "--epsilon", "0.5"]);
    assert!(from_file.status.success());
    assert_eq!(from_file.stdout, rebuilt.stdout);
}
