use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/data").join(name)
}

fn alike(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alike")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn run_dir(o: &Output) -> PathBuf {
    let text = stdout(o);
    let line = text.lines().find(|l| l.starts_with("run directory: ")).expect("run directory line");
    PathBuf::from(line.trim_start_matches("run directory: "))
}

#[test]
fn run_with_config_and_overrides() {
    let out = tempfile::tempdir().unwrap();
    let conf = fixture("sample.conf");
    let o = alike(&[
        "run",
        "--config",
        conf.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
        "--strategy",
        "sma",
        "--k",
        "4",
        "--beta",
        "-0.5",
        "--set",
        "n_trees=10",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = run_dir(&o);
    assert!(dir.starts_with(out.path()));
    assert!(dir.join("manifest.json").is_file());
    assert!(stdout(&o).contains("fidelity:"));
    let proto = std::fs::read_to_string(dir.join("prototypes.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&proto).unwrap();
    assert_eq!(v["indices"].as_array().unwrap().len(), 4);
    assert_eq!(v["config"]["beta"], -0.5);
    let config = std::fs::read_to_string(dir.join("config.txt")).unwrap();
    assert!(config.contains("n_trees = 10"));
}

#[test]
fn flags_alone_are_enough() {
    let out = tempfile::tempdir().unwrap();
    let data = fixture("sample.csv");
    let o = alike(&[
        "select",
        "--data",
        data.to_str().unwrap(),
        "--label-column",
        "species",
        "--strategy",
        "gkm",
        "--k-per-class",
        "2",
        "--metric",
        "distance-only",
        "--out-dir",
        out.path().to_str().unwrap(),
        "--set",
        "n_trees=12",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let dir = run_dir(&o);
    assert!(dir.join("prototypes.json").is_file());
    assert!(!dir.join("explanations.jsonl").exists());
}

#[test]
fn staged_commands_reuse_artifacts() {
    let out = tempfile::tempdir().unwrap();
    let conf = fixture("sample.conf");
    let base = ["--config", conf.to_str().unwrap(), "--out-dir", out.path().to_str().unwrap()];
    let t = alike(&[&["train"][..], &base].concat());
    assert!(t.status.success(), "{}", stderr(&t));
    let forest = run_dir(&t).join("forest.json");
    let e = alike(&[&["explain", "--forest", forest.to_str().unwrap()][..], &base].concat());
    assert!(e.status.success(), "{}", stderr(&e));
    let dir = run_dir(&e);
    assert!(dir.join("explanations.jsonl").is_file());
    let protos = dir.join("prototypes.json");
    let v = alike(&[
        &["evaluate", "--forest", forest.to_str().unwrap(), "--prototypes", protos.to_str().unwrap()][..],
        &base,
    ]
    .concat());
    assert!(v.status.success(), "{}", stderr(&v));
    assert!(run_dir(&v).join("evaluation.json").is_file());
}

#[test]
fn sweep_prints_one_row_per_cell() {
    let out = tempfile::tempdir().unwrap();
    let conf = fixture("sample.conf");
    let o = alike(&[
        "sweep",
        "--config",
        conf.to_str().unwrap(),
        "--out-dir",
        out.path().to_str().unwrap(),
        "--set",
        "sweep_betas=0,1",
        "--set",
        "sweep_strategies=sma",
        "--set",
        "sweep_k=2,3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = stdout(&o);
    let rows = text.lines().filter(|l| l.contains("\tsma\t")).count();
    assert_eq!(rows, 4, "{text}");
}

#[test]
fn missing_data_names_the_stage_and_path() {
    let out = tempfile::tempdir().unwrap();
    let o = alike(&["run", "--data", "/no/such/file.csv", "--out-dir", out.path().to_str().unwrap()]);
    assert!(!o.status.success());
    let err = stderr(&o);
    assert!(err.contains("[load]") && err.contains("/no/such/file.csv"), "{err}");
}

#[test]
fn bad_values_are_config_errors() {
    let o = alike(&["run", "--strategy", "kmeans"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("[config]"), "{}", stderr(&o));
    let o = alike(&["run", "--set", "colour=red"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));
}
