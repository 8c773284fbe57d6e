use std::path::Path;
use std::process::{Command, Output};

fn relim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relim")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(&path, body).unwrap();
    path.display().to_string()
}

const SMALL: &str = r#"
horizon = 300
seeds = 2
[instance]
generator = "random_tabular"
num_contexts = 3
num_actions = 3
num_regressors = 5
[learner]
kind = "relim"
[diag]
num_samples = 2000
"#;

#[test]
fn run_then_plot_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("run");
    let o = relim(&["run", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "3", "--jobs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["seed_00000.csv", "seed_00001.csv", "seed_00002.csv", "summary.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let o = relim(&["plot-data", out.to_str().unwrap()]);
    assert!(o.status.success());
    let plot = std::fs::read_to_string(out.join("plot_data.csv")).unwrap();
    assert_eq!(plot.lines().count(), 301);
    assert!(plot.starts_with("t,mean_cum_regret,p10,p90\n1,"));
}

#[test]
fn gen_and_diag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("gen");
    let o = relim(&["gen", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(out.join("instance_00000.txt")).unwrap();
    assert!(text.starts_with("relim-instance v1"));
    let o = relim(&["diag", "--config", &cfg, "--out", out.to_str().unwrap(), "--seeds", "1"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let diag = std::fs::read_to_string(out.join("diag.csv")).unwrap();
    assert_eq!(diag.lines().count(), 5);
}

#[test]
fn input_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), &SMALL.replace("horizon", "horizn"));
    assert_eq!(relim(&["run", "--config", &bad]).status.code(), Some(1));
    assert_eq!(relim(&["run", "--config", "/nonexistent/exp.toml"]).status.code(), Some(1));
    assert_eq!(relim(&["frobnicate"]).status.code(), Some(1));
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(relim(&["plot-data", empty.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn convergence_failure_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // a zero iteration budget cannot reach feasibility on a nontrivial class
    let body = SMALL.replace("[diag]", "[solver]\nmax_iters = 0\nrel_tol = 1e-12\n[diag]")
        .replace("num_regressors = 5", "num_regressors = 40")
        .replace("num_contexts = 3", "num_contexts = 8");
    let cfg = write_config(dir.path(), &body);
    let o = relim(&["run", "--config", &cfg, "--out", dir.path().join("o").to_str().unwrap(), "--seeds", "1"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
