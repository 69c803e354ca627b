//! Grid sweep over `beta` and strategy hyperparameters.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alike::ExplanationBatch;
use crate::attribution::AttributionMatrix;
use crate::error::{Error, Result};
use crate::harness::evaluate::Surrogate;
use crate::proximity::Dissimilarity;
use crate::scalar::Scalar;
use crate::selection::{select, AssignmentMetric, CostModel, FiCache, SelectionConfig, StrategyKind};

pub const DEFAULT_BETA_GRID: [f64; 5] = [0.0, 0.5, 1.0, 1.5, 2.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub betas: Vec<f64>,
    /// Each strategy with the hyperparameter values to try.
    pub strategies: Vec<(StrategyKind, Vec<f64>)>,
}

impl SweepGrid {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(Error::InvalidParameter("beta grid is empty".into()));
        }
        if self.strategies.is_empty() {
            return Err(Error::InvalidParameter("no strategies to sweep".into()));
        }
        for (kind, values) in &self.strategies {
            if values.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "no {} values given for {}",
                    kind.hyperparameter_name(),
                    kind.as_str()
                )));
            }
        }
        Ok(())
    }

    pub fn n_cells(&self) -> usize {
        self.betas.len() * self.strategies.iter().map(|(_, v)| v.len()).sum::<usize>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRecord {
    pub cell: usize,
    pub strategy: StrategyKind,
    pub hyperparameter_name: String,
    pub hyperparameter: f64,
    pub beta: f64,
    /// Surrogate fidelity to the black-box predictions.
    pub accuracy: f64,
    pub ground_truth_accuracy: f64,
    /// Mean over test explanations of the instance's normalized importance on highlighted features.
    pub mean_alike_importance: f64,
    /// Mean number of highlighted features per test explanation.
    pub mean_mask_length: f64,
    pub n_prototypes: usize,
    pub final_objective: f64,
}

/// Everything a sweep cell needs, computed once up front.
pub struct SweepInputs<'a, T, D> {
    /// Tree distances among training rows.
    pub distances: &'a D,
    pub train_attributions: &'a AttributionMatrix<T>,
    /// Black-box labels of the training rows.
    pub train_labels: &'a [usize],
    pub surrogate: &'a Surrogate<'a, T>,
    pub metric: AssignmentMetric,
}

fn mean_alike_importance<T: Scalar>(batch: &ExplanationBatch<T>, test: &AttributionMatrix<T>) -> f64 {
    if batch.explanations.is_empty() {
        return 0.0;
    }
    let total: f64 = batch
        .explanations
        .iter()
        .map(|e| e.highlighted_importance(test.normalized().row(e.instance_index)).as_f64())
        .sum();
    total / batch.explanations.len() as f64
}

/// Runs every (strategy, hyperparameter, beta) cell in grid order and hands
/// each finished record to `sink` before moving on.
pub fn sweep<T, D, F>(inputs: &SweepInputs<'_, T, D>, grid: &SweepGrid, mut sink: F) -> Result<Vec<SweepRecord>>
where
    T: Scalar,
    D: Dissimilarity<T>,
    F: FnMut(&SweepRecord, &ExplanationBatch<T>) -> Result<()>,
{
    grid.validate()?;
    let test_attributions = inputs
        .surrogate
        .test_attributions()
        .ok_or_else(|| Error::InvalidParameter("a sweep needs test attributions".into()))?;
    // one fi table serves every beta
    let fi = FiCache::new(inputs.train_attributions);
    let mut records = Vec::with_capacity(grid.n_cells());
    for (kind, values) in &grid.strategies {
        for &value in values {
            let strategy = kind.with_hyperparameter(value)?;
            for &beta in &grid.betas {
                let model = CostModel::new(inputs.distances, Some(&fi), beta)?;
                let config = SelectionConfig {
                    strategy,
                    beta,
                    assignment_metric: inputs.metric,
                };
                let prototypes = select(&model, inputs.train_labels, &config)?;
                let report = inputs.surrogate.evaluate(&prototypes, beta, inputs.metric)?;
                let batch = inputs.surrogate.explain(&prototypes, beta, inputs.metric)?;
                let record = SweepRecord {
                    cell: records.len(),
                    strategy: *kind,
                    hyperparameter_name: kind.hyperparameter_name().to_owned(),
                    hyperparameter: value,
                    beta,
                    accuracy: report.accuracy,
                    ground_truth_accuracy: report.ground_truth_accuracy,
                    mean_alike_importance: mean_alike_importance(&batch, test_attributions),
                    mean_mask_length: batch.mean_mask_len(),
                    n_prototypes: prototypes.len(),
                    final_objective: prototypes.final_objective().map_or(f64::NAN, Scalar::as_f64),
                };
                sink(&record, &batch)?;
                records.push(record);
            }
        }
    }
    Ok(records)
}

pub fn cell_dir_name(record: &SweepRecord) -> String {
    format!(
        "cell-{:03}-{}-{}-beta{}",
        record.cell,
        record.strategy.as_str(),
        record.hyperparameter,
        record.beta
    )
}

/// Sweep that appends each record to `out_dir/sweep.jsonl` as it finishes and
/// stores each cell's test explanations under its own directory.
pub fn sweep_to_dir<T: Scalar, D: Dissimilarity<T>>(
    inputs: &SweepInputs<'_, T, D>,
    grid: &SweepGrid,
    out_dir: &Path,
) -> Result<Vec<SweepRecord>> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let log_path = out_dir.join("sweep.jsonl");
    let file = std::fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut log = std::io::BufWriter::new(file);
    sweep(inputs, grid, |record, batch| {
        let cell_dir: PathBuf = out_dir.join(cell_dir_name(record));
        std::fs::create_dir_all(&cell_dir).map_err(|e| Error::io(&cell_dir, e))?;
        batch.write_jsonl(cell_dir.join("explanations.jsonl"))?;
        serde_json::to_writer(&mut log, record)?;
        log.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
        log.flush().map_err(|e| Error::io(&log_path, e))
    })
}

pub fn read_sweep_log(path: impl AsRef<Path>) -> Result<Vec<SweepRecord>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}
