use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nonlocality"));
    cmd.env_remove("NONLOCALITY_OUT_DIR");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nonlocality-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(code(&run(&["frobnicate"])), 2);
    assert_eq!(code(&run(&["bounds", "ghz"])), 2);
    assert_eq!(code(&run(&["ghz", "prob", "--n", "3", "--l", "2", "--x", "0,0"])), 2);
    assert_eq!(code(&run(&["rect", "--problem", "missing.json"])), 2);
}

#[test]
fn budget_errors_exit_3() {
    assert_eq!(code(&run(&["rect", "--problem", "ghz:3,2", "--max-nodes", "1"])), 3);
    assert_eq!(
        code(&run(&["lhv", "solve", "--problem", "ghz:3,2", "--max-strategies", "5"])),
        3
    );
}

#[test]
fn version_names_schemas() {
    let out = run(&["--version"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("problem schema 1"), "{text}");
    assert!(text.contains("protocol schema 1"), "{text}");
}

fn flip_outputs(node: &mut Value) {
    if let Some(tables) = node.get_mut("output_tables") {
        for row in tables[0].as_array_mut().unwrap() {
            for v in row.as_array_mut().unwrap() {
                *v = Value::from(1 - v.as_u64().unwrap());
            }
        }
    } else if let Some(children) = node.get_mut("children") {
        for c in children.as_array_mut().unwrap() {
            flip_outputs(c);
        }
    }
}

#[test]
fn protocol_verify_pass_and_fail() {
    let dir = scratch("verify");
    let out = run(&[
        "--out-dir",
        path_str(&dir),
        "comm",
        "ghz-protocol",
        "--n",
        "3",
        "--l",
        "2",
        "--out",
        "p.json",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let good = dir.join("p.json");
    assert!(good.exists());
    assert_eq!(
        code(&run(&["comm", "verify", "--protocol", path_str(&good), "--exact"])),
        0
    );

    let mut json: Value = serde_json::from_str(&std::fs::read_to_string(&good).unwrap()).unwrap();
    flip_outputs(&mut json["root"]);
    let bad = dir.join("bad.json");
    std::fs::write(&bad, serde_json::to_string(&json).unwrap()).unwrap();
    let out = run(&["comm", "verify", "--protocol", path_str(&bad), "--problem", "ghz:3,2"]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = scratch("config");
    let cfg = dir.join("cfg.toml");
    std::fs::write(&cfg, "max-nodes = 1\n").unwrap();
    let c = path_str(&cfg);
    assert_eq!(code(&run(&["--config", c, "rect", "--problem", "ghz:2,2"])), 3);
    assert_eq!(
        code(&run(&[
            "--config",
            c,
            "--max-nodes",
            "1000",
            "rect",
            "--problem",
            "ghz:2,2"
        ])),
        0
    );
    std::fs::write(&cfg, "max-nodes = 10\nbogus = true\n").unwrap();
    assert_eq!(code(&run(&["--config", c, "rect", "--problem", "ghz:2,2"])), 2);
}

#[test]
fn sweep_csv_lands_in_env_out_dir() {
    let dir = scratch("sweep");
    let out = bin()
        .env("NONLOCALITY_OUT_DIR", &dir)
        .args(["sweep", "--n-min", "3", "--n-max", "6", "--out", "s.csv"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(dir.join("s.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,l_eta,eta_upper,l_rpub,rpub_lower_real,rpub_lower_bits,mode"
    );
    assert_eq!(lines.count(), 4);
}

#[test]
fn ghz_prob_matches_oracle_flag() {
    let out = run(&[
        "ghz", "prob", "--n", "3", "--l", "2", "--x", "0,0,0", "--a", "0,0,0", "--oracle",
    ]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("2.5000000000000000e-1"), "{text}");
}
