use std::path::{Path, PathBuf};

use alike::alike::read_jsonl;
use alike::harness::pipeline::{EVALUATION_FILE, EXPLANATIONS_FILE, FOREST_FILE, MANIFEST_FILE, PROTOTYPES_FILE};
use alike::harness::sweep::read_sweep_log;
use alike::harness::{execute, run_pipeline, run_sweep, EvaluationReport, PipelineConfig, Reuse, Until};
use alike::{Forest, PrototypeSet};

fn fixture_config(out: &Path) -> PipelineConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/sample.conf");
    let mut cfg = PipelineConfig::from_file(path).unwrap();
    cfg.out_dir = out.to_path_buf();
    cfg
}

fn read(path: PathBuf) -> String {
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

#[test]
fn full_run_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    let out = run_pipeline(&cfg).unwrap();
    assert_eq!(out.run_dir, cfg.run_dir());
    for name in [FOREST_FILE, PROTOTYPES_FILE, EXPLANATIONS_FILE, "frequencies.csv", EVALUATION_FILE, MANIFEST_FILE] {
        assert!(out.run_dir.join(name).is_file(), "{name} missing");
    }
    let report: EvaluationReport = serde_json::from_str(&read(out.run_dir.join(EVALUATION_FILE))).unwrap();
    assert_eq!(report.n_test, 15);
    assert!(report.accuracy > 0.6, "fidelity {}", report.accuracy);
    let explanations = read_jsonl::<f64>(out.run_dir.join(EXPLANATIONS_FILE)).unwrap();
    assert_eq!(explanations.len(), 15);
    let prototypes = PrototypeSet::load(out.run_dir.join(PROTOTYPES_FILE)).unwrap();
    assert!(explanations.iter().all(|e| prototypes.indices.contains(&e.prototype_index)));
    let manifest: serde_json::Value = serde_json::from_str(&read(out.run_dir.join(MANIFEST_FILE))).unwrap();
    assert_eq!(manifest["test_indices"].as_array().unwrap().len(), 15);
    assert_eq!(manifest["config_hash"], cfg.hash());
}

#[test]
fn stopping_early_and_reusing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    let trained = execute(&cfg, Until::Train, &Reuse::default()).unwrap();
    assert!(!trained.run_dir.join(PROTOTYPES_FILE).exists());
    let forest_path = trained.run_dir.join(FOREST_FILE);
    let forest = Forest::load(&forest_path).unwrap();

    let other = tempfile::tempdir().unwrap();
    let mut cfg2 = fixture_config(other.path());
    cfg2.n_trees = 3; // ignored: the forest is reused
    let reuse = Reuse {
        forest: Some(forest_path.clone()),
        prototypes: None,
    };
    let selected = execute(&cfg2, Until::Select, &reuse).unwrap();
    assert_eq!(Forest::load(selected.run_dir.join(FOREST_FILE)).unwrap(), forest);
    let proto_path = selected.run_dir.join(PROTOTYPES_FILE);

    let reuse = Reuse {
        forest: Some(forest_path),
        prototypes: Some(proto_path.clone()),
    };
    let evaluated = execute(&cfg2, Until::Evaluate, &reuse).unwrap();
    assert_eq!(evaluated.prototypes.unwrap(), PrototypeSet::load(&proto_path).unwrap());
    assert!(evaluated.evaluation.is_some());
}

#[test]
fn missing_data_fails_in_the_load_stage() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.data = Some(dir.path().join("nowhere.csv"));
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage(), Some("load"));
    let msg = err.to_string();
    assert!(msg.starts_with("[load]") && msg.contains("nowhere.csv"), "{msg}");
}

#[test]
fn bad_selection_fails_in_the_select_stage_and_keeps_earlier_output() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.set("strategy", "gkm").unwrap();
    cfg.set("k_per_class", "1000").unwrap();
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.stage(), Some("select"), "{err}");
    assert!(cfg.run_dir().join(FOREST_FILE).is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&fixture_config(a.path())).unwrap();
    let rb = run_pipeline(&fixture_config(b.path())).unwrap();
    assert_eq!(ra.artifacts.len(), rb.artifacts.len());
    for (x, y) in ra.artifacts.iter().zip(&rb.artifacts) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap(), "{}", x.display());
    }
}

#[test]
fn exact_shapley_provider_runs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.set("attribution_provider", "exact-shapley").unwrap();
    cfg.set("background_size", "8").unwrap();
    cfg.set("n_trees", "8").unwrap();
    let out = run_pipeline(&cfg).unwrap();
    let manifest: serde_json::Value = serde_json::from_str(&read(out.run_dir.join(MANIFEST_FILE))).unwrap();
    assert_eq!(manifest["attribution_provider"], "exact-shapley");
}

#[test]
fn imported_attributions_are_used() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture_config(dir.path());
    let first = run_pipeline(&cfg).unwrap();
    let mut cfg2 = fixture_config(&dir.path().join("second"));
    cfg2.set("attribution_provider", "imported").unwrap();
    let train = first.run_dir.join("attributions_train_raw.csv");
    let test = first.run_dir.join("attributions_test_raw.csv");
    cfg2.set("attributions_train", train.to_str().unwrap()).unwrap();
    cfg2.set("attributions_test", test.to_str().unwrap()).unwrap();
    let second = run_pipeline(&cfg2).unwrap();
    assert_eq!(first.prototypes.unwrap().indices, second.prototypes.unwrap().indices);

    let mut cfg3 = fixture_config(&dir.path().join("third"));
    cfg3.set("attribution_provider", "imported").unwrap();
    assert_eq!(run_pipeline(&cfg3).unwrap_err().stage(), Some("attribute"));
}

#[test]
fn sweep_log_matches_cell_explanations() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = fixture_config(dir.path());
    cfg.set("sweep_betas", "0,1").unwrap();
    cfg.set("sweep_strategies", "gkm,apete").unwrap();
    cfg.set("sweep_k_per_class", "1,2").unwrap();
    cfg.set("sweep_epsilon", "0.01").unwrap();
    let (sweep_dir, records) = run_sweep(&cfg, &Reuse::default()).unwrap();
    assert_eq!(records.len(), 6);
    assert_eq!(read_sweep_log(sweep_dir.join("sweep.jsonl")).unwrap(), records);
    for r in &records {
        let cell = sweep_dir.join(alike::harness::sweep::cell_dir_name(r)).join(EXPLANATIONS_FILE);
        let e = read_jsonl::<f64>(cell).unwrap();
        let mean = e.iter().map(|x| x.mask_len() as f64).sum::<f64>() / e.len() as f64;
        assert_eq!(mean, r.mean_mask_length);
    }
}
