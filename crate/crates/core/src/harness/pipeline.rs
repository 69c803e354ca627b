//! End-to-end runs: load, split, train, attribute, distance, select, explain, evaluate.
//!
//! Every stage error is wrapped with the stage name. Artifacts are written as
//! soon as their stage finishes, so a failed run keeps what it produced.

use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;

use crate::attribution::{import_attributions, AttributionMatrix, Attributor, Provider};
use crate::dataset::{stratified_split_indices, Dataset};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::harness::config::PipelineConfig;
use crate::harness::evaluate::{EvaluationReport, Surrogate};
use crate::harness::sweep::{sweep_to_dir, SweepInputs, SweepRecord};
use crate::proximity::TreeDistances;
use crate::selection::{select, CostModel, FiCache, PrototypeSet};

pub const FOREST_FILE: &str = "forest.json";
pub const PROTOTYPES_FILE: &str = "prototypes.json";
pub const EXPLANATIONS_FILE: &str = "explanations.jsonl";
pub const FREQUENCIES_FILE: &str = "frequencies.csv";
pub const EVALUATION_FILE: &str = "evaluation.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Last stage to execute.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Until {
    Train,
    Select,
    Explain,
    Evaluate,
}

/// Previously written artifacts to load instead of recomputing.
#[derive(Debug, Clone, Default)]
pub struct Reuse {
    pub forest: Option<PathBuf>,
    pub prototypes: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub run_dir: PathBuf,
    pub artifacts: Vec<PathBuf>,
    pub prototypes: Option<PrototypeSet<f64>>,
    pub evaluation: Option<EvaluationReport>,
}

trait StageExt<V> {
    fn stage(self, name: &'static str) -> Result<V>;
}

impl<V> StageExt<V> for Result<V> {
    fn stage(self, name: &'static str) -> Result<V> {
        self.map_err(|e| e.at_stage(name))
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<V: Serialize>(path: &Path, value: &V) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

struct Prepared {
    run_dir: PathBuf,
    train: Dataset<f64>,
    test: Dataset<f64>,
    train_indices: Vec<usize>,
    test_indices: Vec<usize>,
    forest: Forest<f64>,
    artifacts: Vec<PathBuf>,
}

fn prepare(cfg: &PipelineConfig, reuse: &Reuse) -> Result<Prepared> {
    let data = cfg
        .data
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset path given (`data`)".into()))
        .stage("load")?;
    let ds: Dataset<f64> = Dataset::load_csv(data, &cfg.label_column, &cfg.missing_token).stage("load")?;

    let run_dir = cfg.run_dir();
    std::fs::create_dir_all(&run_dir)
        .map_err(|e| Error::io(&run_dir, e))
        .stage("write")?;
    write_text(&run_dir.join("config.txt"), &cfg.canonical_text()).stage("write")?;

    let split = stratified_split_indices(ds.labels(), ds.class_names(), cfg.test_fraction, cfg.seed).stage("split")?;
    let train = ds.subset(&split.train).stage("split")?;
    let test = ds.subset(&split.test).stage("split")?;

    let forest = match &reuse.forest {
        Some(path) => {
            let f = Forest::<f64>::load(path).stage("train")?;
            if f.n_features() != ds.n_features() || f.n_classes() != ds.n_classes() {
                return Err(Error::InvalidParameter(format!(
                    "forest {} expects {} features / {} classes, dataset has {} / {}",
                    path.display(),
                    f.n_features(),
                    f.n_classes(),
                    ds.n_features(),
                    ds.n_classes()
                )))
                .stage("train");
            }
            f
        }
        None => Forest::fit(&train, &cfg.training_params()).stage("train")?,
    };
    let forest_path = run_dir.join(FOREST_FILE);
    forest.save(&forest_path).stage("write")?;

    Ok(Prepared {
        run_dir,
        train,
        test,
        train_indices: split.train,
        test_indices: split.test,
        forest,
        artifacts: vec![forest_path],
    })
}

/// Replaces a class index in a selection error with the class name.
fn name_class(e: Error, names: &[String]) -> Error {
    match e {
        Error::ClassTooSmall { class, size, required } => Error::ClassTooSmall {
            class: class
                .parse::<usize>()
                .ok()
                .and_then(|c| names.get(c).cloned())
                .unwrap_or(class),
            size,
            required,
        },
        e => e,
    }
}

fn background_rows(n: usize, size: usize) -> Vec<usize> {
    let size = size.clamp(1, n);
    let step = n.div_ceil(size);
    (0..n).step_by(step).take(size).collect()
}

fn attribute(cfg: &PipelineConfig, p: &Prepared) -> Result<(AttributionMatrix<f64>, AttributionMatrix<f64>)> {
    let d = p.train.n_features();
    let (train, test) = match cfg.attribution_provider {
        Provider::Path => (
            AttributionMatrix::compute(&p.forest, &p.train, Attributor::Path, cfg.attribution_target)?,
            AttributionMatrix::compute(&p.forest, &p.test, Attributor::Path, cfg.attribution_target)?,
        ),
        Provider::ExactShapley => {
            let background = p.train.subset(&background_rows(p.train.n_rows(), cfg.background_size))?;
            let method = Attributor::ExactShapley {
                background: &background,
            };
            (
                AttributionMatrix::compute(&p.forest, &p.train, method, cfg.attribution_target)?,
                AttributionMatrix::compute(&p.forest, &p.test, method, cfg.attribution_target)?,
            )
        }
        Provider::Imported => {
            let need = |p: &Option<PathBuf>, key: &str| {
                p.clone()
                    .ok_or_else(|| Error::Config(format!("imported attributions need `{key}`")))
            };
            (
                import_attributions(need(&cfg.attributions_train, "attributions_train")?, p.train.n_rows(), d)?,
                import_attributions(need(&cfg.attributions_test, "attributions_test")?, p.test.n_rows(), d)?,
            )
        }
    };
    Ok((train, test))
}

/// Runs the pipeline up to `until`, writing artifacts into the config's run directory.
pub fn execute(cfg: &PipelineConfig, until: Until, reuse: &Reuse) -> Result<RunOutcome> {
    let mut p = prepare(cfg, reuse)?;
    let mut outcome = RunOutcome {
        run_dir: p.run_dir.clone(),
        artifacts: std::mem::take(&mut p.artifacts),
        prototypes: None,
        evaluation: None,
    };
    if until == Until::Train {
        return Ok(outcome);
    }

    let (a_train, a_test) = attribute(cfg, &p).stage("attribute")?;
    for (name, a) in [("train", &a_train), ("test", &a_test)] {
        let raw = p.run_dir.join(format!("attributions_{name}_raw.csv"));
        let norm = p.run_dir.join(format!("attributions_{name}_normalized.csv"));
        a.export(&raw, &norm).stage("write")?;
        outcome.artifacts.extend([raw, norm]);
    }

    let distances = TreeDistances::build(&p.forest, &p.train, cfg.distance_cap).stage("distance")?;
    let config = cfg.selection_config().stage("select")?;
    let prototypes = match &reuse.prototypes {
        Some(path) => {
            let set = PrototypeSet::<f64>::load(path).stage("select")?;
            if let Some(&bad) = set.indices.iter().find(|&&i| i >= p.train.n_rows()) {
                return Err(Error::IndexOutOfRange {
                    index: bad,
                    len: p.train.n_rows(),
                })
                .stage("select");
            }
            set
        }
        None => {
            let train_labels = p.forest.predict_labels(&p.train).stage("select")?;
            let fi = FiCache::new(&a_train);
            let model = CostModel::new(&distances, Some(&fi), cfg.beta).stage("select")?;
            select(&model, &train_labels, &config)
                .map_err(|e| name_class(e, p.train.class_names()))
                .stage("select")?
        }
    };
    let proto_path = p.run_dir.join(PROTOTYPES_FILE);
    prototypes.save(&proto_path).stage("write")?;
    outcome.artifacts.push(proto_path);
    if until == Until::Select {
        outcome.prototypes = Some(prototypes);
        return Ok(outcome);
    }

    let surrogate = Surrogate::new(&p.forest, &p.train, &p.test, Some(&a_train), Some(&a_test)).stage("explain")?;
    let batch = surrogate.explain(&prototypes, cfg.beta, cfg.metric).stage("explain")?;
    let expl_path = p.run_dir.join(EXPLANATIONS_FILE);
    let freq_path = p.run_dir.join(FREQUENCIES_FILE);
    batch.write_jsonl(&expl_path).stage("write")?;
    batch.write_frequencies(&freq_path, p.train.feature_names()).stage("write")?;
    outcome.artifacts.extend([expl_path, freq_path]);
    if until == Until::Explain {
        outcome.prototypes = Some(prototypes);
        return Ok(outcome);
    }

    let report = surrogate.evaluate(&prototypes, cfg.beta, cfg.metric).stage("evaluate")?;
    let eval_path = p.run_dir.join(EVALUATION_FILE);
    write_json(&eval_path, &report).stage("write")?;
    outcome.artifacts.push(eval_path);

    let manifest_path = p.run_dir.join(MANIFEST_FILE);
    let mut names: Vec<String> = outcome
        .artifacts
        .iter()
        .filter_map(|a| a.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    names.push(MANIFEST_FILE.to_owned());
    let manifest = json!({
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "config": cfg.canonical_text().lines().collect::<Vec<_>>(),
        "n_train": p.train.n_rows(),
        "n_test": p.test.n_rows(),
        "train_indices": p.train_indices,
        "test_indices": p.test_indices,
        "n_prototypes": prototypes.len(),
        "attribution_provider": a_train.provider(),
        "artifacts": names,
    });
    write_json(&manifest_path, &manifest).stage("write")?;
    outcome.artifacts.push(manifest_path);
    outcome.prototypes = Some(prototypes);
    outcome.evaluation = Some(report);
    Ok(outcome)
}

/// Full pipeline with every artifact.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<RunOutcome> {
    execute(cfg, Until::Evaluate, &Reuse::default())
}

/// Loads a config file and runs the full pipeline.
pub fn run_pipeline_file(path: impl AsRef<Path>) -> Result<RunOutcome> {
    let cfg = PipelineConfig::from_file(path).stage("config")?;
    run_pipeline(&cfg)
}

/// Sweeps the config's grid; results land in `<run_dir>/sweep`.
pub fn run_sweep(cfg: &PipelineConfig, reuse: &Reuse) -> Result<(PathBuf, Vec<SweepRecord>)> {
    let p = prepare(cfg, reuse)?;
    let (a_train, a_test) = attribute(cfg, &p).stage("attribute")?;
    let distances = TreeDistances::build(&p.forest, &p.train, cfg.distance_cap).stage("distance")?;
    let train_labels = p.forest.predict_labels(&p.train).stage("sweep")?;
    let surrogate = Surrogate::new(&p.forest, &p.train, &p.test, Some(&a_train), Some(&a_test)).stage("sweep")?;
    let inputs = SweepInputs {
        distances: &distances,
        train_attributions: &a_train,
        train_labels: &train_labels,
        surrogate: &surrogate,
        metric: cfg.metric,
    };
    let dir = p.run_dir.join("sweep");
    let records = sweep_to_dir(&inputs, &cfg.sweep_grid(), &dir).stage("sweep")?;
    Ok((dir, records))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn background_rows_are_strided() {
        assert_eq!(background_rows(10, 3), vec![0, 4, 8]);
        assert_eq!(background_rows(3, 10), vec![0, 1, 2]);
        assert_eq!(background_rows(5, 0), vec![0]);
    }
}
