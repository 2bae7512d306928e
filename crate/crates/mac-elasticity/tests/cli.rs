use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run_cli(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mac-elasticity"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

const CONFIG: &str = r#"
[[study]]
name = "study"
case = "example1"
lambda = 10.0
base_cells = 8
levels = 2
mesh = "perturbed"
seed = 7
"#;

#[test]
fn run_is_deterministic_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let out = run_cli(&["run", "--config", "run.toml", "--output-dir", "a"], dir.path());
    assert!(out.status.success(), "{out:?}");
    let out = run_cli(&["run", "--config", "run.toml", "--output-dir", "b"], dir.path());
    assert!(out.status.success(), "{out:?}");
    for name in ["study.csv", "study.md"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_cli(&["run", "--config", "nope.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn invalid_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.toml"), "[[study]]\ncase = \"example9\"\n").unwrap();
    let out = run_cli(&["run", "--config", "bad.toml"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solver_failure_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("run.toml"),
        format!("{CONFIG}backend = \"iterative\"\nmax_iterations = 1\n"),
    )
    .unwrap();
    let out = run_cli(&["run", "--config", "run.toml"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8(out.stderr).unwrap();
    assert!(stderr.contains("level 0"), "{stderr}");
}

#[test]
fn compare_table_against_itself_passes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    assert!(run_cli(&["run", "--config", "run.toml"], dir.path()).status.success());
    let out = run_cli(&["compare", "study.csv", "study.csv"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{out:?}");
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("pass"), "{stdout}");
}

#[test]
fn compare_failure_names_the_cell_and_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    assert!(run_cli(&["run", "--config", "run.toml"], dir.path()).status.success());
    let produced = fs::read_to_string(dir.path().join("study.csv")).unwrap();
    let perturbed = produced.replacen("e-2", "e-1", 1);
    assert_ne!(produced, perturbed);
    fs::write(dir.path().join("reference.csv"), perturbed).unwrap();
    let out = run_cli(&["compare", "study.csv", "reference.csv"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("n=8x8"), "{stdout}");
    assert!(stdout.contains("error:") || stdout.contains("error"), "{stdout}");
}

#[test]
fn compare_accepts_embedded_reference_tags() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    assert!(run_cli(&["run", "--config", "run.toml"], dir.path()).status.success());
    let out = run_cli(&["compare", "study.csv", "6.3"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let out = run_cli(&["compare", "study.csv", "9.9"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}
