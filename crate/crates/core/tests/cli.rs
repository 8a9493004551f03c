use std::fs;
use std::path::Path;
use std::process::Command;

use stillwater::io::{read_branch_csv, read_swf1, BRANCH_CSV_HEADER};

const SMALL: &str = r#"
seed = 3

[grid]
periods = [1.0, 1.0]
n = [48, 48]

[nondimensional]
a = 1.0
g = 1.0

[bathymetry]
kind = "random"
seed = 9
decay = 3.0
amplitude = 0.3
max_mode = 4

[forcing]
kind = "gravity"
direction = [0.6, 0.8]
"#;

fn config(dir: &Path, schedule: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, format!("{SMALL}\n[schedule]\n{schedule}\n")).unwrap();
    path
}

fn stillwater(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_stillwater"))
        .args(args)
        .env_remove("STILLWATER_OUT")
        .env_remove("STILLWATER_JOBS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn solve_writes_state_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "kappa = [0.5]");
    let out = dir.path().join("out");
    let run = stillwater(&["solve", "--config", s(&cfg), "--out", s(&out), "--emit", "div_u,curl_u"]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let file = read_swf1(out.join("state.swf1")).unwrap();
    let names: Vec<_> = file.names().collect();
    assert_eq!(names, ["eta", "beta", "u1", "u2", "div_u", "curl_u"]);
    assert_eq!(file.n, [48, 48]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    let sol = &report["solutions"][0];
    assert_eq!(sol["kappa"], 0.5);
    assert!(sol["diagnostics"]["power"]["relerr"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn parallel_sweep_matches_serial_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "kappa = [0.25, 0.5, 1.0]");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(stillwater(&["solve", "--config", s(&cfg), "--out", s(&a)]).status.code(), Some(0));
    assert_eq!(
        stillwater(&["solve", "--config", s(&cfg), "--out", s(&b), "--jobs", "3"]).status.code(),
        Some(0)
    );
    for i in 0..3 {
        let name = format!("state_{i:03}.swf1");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }
    assert_eq!(fs::read(a.join("report.json")).unwrap(), fs::read(b.join("report.json")).unwrap());
}

#[test]
fn continue_writes_branch_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "kappa = { stop = 2.0, steps = 4 }");
    let out = dir.path().join("branch");
    let run = stillwater(&["continue", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let text = fs::read_to_string(out.join("branch.csv")).unwrap();
    assert_eq!(text.lines().next(), Some(BRANCH_CSV_HEADER));
    let rows = read_branch_csv(out.join("branch.csv")).unwrap();
    assert_eq!(rows.len(), 5);
    assert!(rows.windows(2).all(|w| w[1].kappa > w[0].kappa));
    assert!(rows.iter().all(|r| r.power_relerr <= 1e-8));
    for i in 0..rows.len() {
        let path = out.join(format!("point_{i:04}.swf1"));
        let f = read_swf1(&path).unwrap();
        assert_eq!(f.to_bytes().unwrap(), fs::read(&path).unwrap());
    }
    // a second run reproduces every byte
    let again = dir.path().join("again");
    stillwater(&["continue", "--config", s(&cfg), "--out", s(&again)]);
    for name in ["branch.csv", "report.json", "point_0004.swf1"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap());
    }
}

#[test]
fn verify_passes_on_resolved_problem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "kappa = [0.5, 1.0]");
    let out = dir.path().join("v");
    let run = stillwater(&["verify", "--config", s(&cfg), "--out", s(&out)]);
    let stdout = String::from_utf8_lossy(&run.stdout);
    assert_eq!(run.status.code(), Some(0), "{stdout}");
    assert!(stdout.lines().all(|l| l.starts_with("PASS")), "{stdout}");
    assert!(stdout.contains("power balance"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn both_parameter_blocks_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        format!("{SMALL}\n[dimensional]\nalpha = 1.0\ng = 1.0\nmu = 1.0\nsigma = 1.0\nh = 1.0\n[schedule]\nkappa = [1.0]\n"),
    )
    .unwrap();
    let run = stillwater(&["solve", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("[dimensional]") && err.contains("[nondimensional]"), "{err}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("unknown key", format!("{SMALL}\nbogus = 1\n[schedule]\nkappa = [1.0]\n")),
        ("empty schedule", format!("{SMALL}\n[schedule]\nkappa = []\n")),
        ("hat without dimensions", format!("{SMALL}\n[schedule]\nkappa_hat = [1.0]\n")),
        ("bad emit", format!("{SMALL}\nemit = [\"vorticity\"]\n[schedule]\nkappa = [1.0]\n")),
    ];
    for (what, text) in cases {
        let cfg = dir.path().join("c.toml");
        fs::write(&cfg, text).unwrap();
        let run = stillwater(&["continue", "--config", s(&cfg), "--out", s(dir.path())]);
        assert_eq!(run.status.code(), Some(2), "{what}");
    }
    let run = stillwater(&["solve", "--config", s(&dir.path().join("missing.toml"))]);
    assert_eq!(run.status.code(), Some(2));
    let run = stillwater(&["explode", "--config", "x"]);
    assert_eq!(run.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("hard.toml");
    fs::write(
        &cfg,
        format!("{SMALL}\n[solver]\nmax_newton = 1\n[schedule]\nkappa = [5.0]\n"),
    )
    .unwrap();
    let run = stillwater(&["solve", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(run.status.code(), Some(3), "{}", String::from_utf8_lossy(&run.stdout));
}

#[test]
fn environment_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "kappa = [0.1]");
    let out = dir.path().join("from-env");
    let run = Command::new(env!("CARGO_BIN_EXE_stillwater"))
        .args(["solve", "--config", s(&cfg)])
        .env("STILLWATER_OUT", &out)
        .env("STILLWATER_JOBS", "2")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(0));
    assert!(out.join("state.swf1").exists());
    let run = Command::new(env!("CARGO_BIN_EXE_stillwater"))
        .args(["solve", "--config", s(&cfg)])
        .env("STILLWATER_OUT", &out)
        .env("STILLWATER_JOBS", "many")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(2));
}
