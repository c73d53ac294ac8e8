use std::path::PathBuf;
use std::process::{Command, Output};

use piw_core::GridMap;

fn piw() -> Command {
    Command::new(env!("CARGO_BIN_EXE_piw"))
}

fn run(args: &[&str]) -> Output {
    piw().args(args).output().expect("spawning piw")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "piw failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

/// Fresh per-test scratch directory.
fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join(format!("piw-cli-tests-{}", std::process::id()))
        .join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("creating scratch dir");
    dir
}

fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .expect("workspace root")
}

/// Drops the trailing wall-clock column, the one field allowed to differ
/// between reruns of the same seed.
fn strip_wall_ms(csv: &str) -> String {
    csv.lines()
        .map(|line| match line.rfind(',') {
            Some(pos) => &line[..pos],
            None => line,
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn maps_directory_matches_builtins() {
    let maps = workspace_root().join("maps");
    for name in GridMap::builtin_names() {
        let path = maps.join(format!("{name}.txt"));
        let text = std::fs::read_to_string(&path)
            .unwrap_or_else(|e| panic!("reading {}: {e}", path.display()));
        assert_eq!(
            text,
            GridMap::builtin(name).unwrap(),
            "maps/{name}.txt diverged from the builtin layout"
        );
    }
}

#[test]
fn plan_once_output_is_deterministic() {
    let args = [
        "plan-once",
        "--algo",
        "pi-iw-basic",
        "--map",
        "maze1",
        "--hidden",
        "8",
        "--seed",
        "3",
    ];
    let first = stdout(&run(&args));
    let second = stdout(&run(&args));
    assert_eq!(first, second);
    assert!(first.contains("algorithm: pi-iw-basic"));
    assert!(first.contains("root action returns:"));
}

#[test]
fn train_reruns_reproduce_everything_but_wall_clock() {
    let once = scratch("train-once");
    let twice = scratch("train-twice");
    for out in [&once, &twice] {
        let args = [
            "train",
            "--algo",
            "pi-iw-basic",
            "--map",
            "corridor",
            "--hidden",
            "8",
            "--max-interactions",
            "1500",
            "--seeds",
            "1",
            "--out",
            out.to_str().unwrap(),
        ];
        stdout(&run(&args));
    }
    for file in [
        "pi-iw-basic-corridor-seed0.csv",
        "pi-iw-basic-corridor-seed0.net.json",
        "pi-iw-basic-corridor-curve.csv",
        "pi-iw-basic-corridor-config.txt",
    ] {
        let a = std::fs::read_to_string(once.join(file)).unwrap();
        let b = std::fs::read_to_string(twice.join(file)).unwrap();
        if file.ends_with("seed0.csv") {
            assert_eq!(strip_wall_ms(&a), strip_wall_ms(&b), "{file} diverged");
            assert!(a.starts_with("run_seed,episode,interactions,"));
        } else {
            assert_eq!(a, b, "{file} diverged");
        }
    }
}

#[test]
fn seed_count_expands_to_the_first_n_seeds() {
    let out = scratch("seed-count");
    let args = [
        "train",
        "--algo",
        "rollout-iw",
        "--map",
        "corridor",
        "--max-interactions",
        "300",
        "--seeds",
        "2",
        "--out",
        out.to_str().unwrap(),
    ];
    stdout(&run(&args));
    assert!(out.join("rollout-iw-corridor-seed0.csv").exists());
    assert!(out.join("rollout-iw-corridor-seed1.csv").exists());
    assert!(out.join("rollout-iw-corridor-curve.csv").exists());
    let cfg = std::fs::read_to_string(out.join("rollout-iw-corridor-config.txt")).unwrap();
    assert!(cfg.contains("seeds=0,1"));
    // A planner that learns nothing leaves no checkpoint behind.
    assert!(!out.join("rollout-iw-corridor-seed0.net.json").exists());
}

#[test]
fn flags_override_config_file_entries() {
    let dir = scratch("overrides");
    let cfg_path = dir.join("base.cfg");
    std::fs::write(&cfg_path, "map=corridor\nhidden=8\ntree_budget=30\n").unwrap();
    let out = stdout(&run(&[
        "plan-once",
        "--config",
        cfg_path.to_str().unwrap(),
        "--algo",
        "rollout-iw",
        "--tree_budget",
        "7",
    ]));
    assert!(out.contains("(budget 7)"), "flag lost to the file: {out}");
}

#[test]
fn bad_flags_print_usage_and_exit_nonzero() {
    let out = run(&["train", "--definitely-not-a-flag"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "no usage text: {stderr}");
}

#[test]
fn eval_demands_a_network_when_the_sampler_needs_one() {
    let out = run(&["eval", "--algo", "pi-iw-basic", "--map", "corridor"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("--net"), "unhelpful error: {stderr}");
}
