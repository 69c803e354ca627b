//! 1-nearest-prototype surrogate evaluation on held-out data.

use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::alike::{assignment_cost, explain_against, Candidate, ExplanationBatch};
use crate::attribution::AttributionMatrix;
use crate::dataset::Dataset;
use crate::error::{check_len, Error, Result};
use crate::forest::Forest;
use crate::proximity::{leaf_disagreement, LeafProfiles};
use crate::scalar::Scalar;
use crate::selection::{AssignmentMetric, PrototypeSet, SelectionConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    /// Agreement between the surrogate and the black-box predictions.
    pub accuracy: f64,
    /// Agreement between the surrogate and the ground-truth labels.
    pub ground_truth_accuracy: f64,
    /// Fidelity per black-box class; `None` when the model never predicts that class.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Rows: black-box label, columns: surrogate label.
    pub confusion: Vec<Vec<usize>>,
    pub n_prototypes: usize,
    pub n_test: usize,
    pub config: SelectionConfig,
}

/// Precomputed held-out view shared by evaluation and explanation of one test set.
pub struct Surrogate<'a, T> {
    train_profiles: LeafProfiles,
    test_profiles: LeafProfiles,
    model_labels: Vec<usize>,
    true_labels: &'a [usize],
    train_attributions: Option<&'a AttributionMatrix<T>>,
    test_attributions: Option<&'a AttributionMatrix<T>>,
    n_classes: usize,
}

impl<'a, T: Scalar> Surrogate<'a, T> {
    pub fn new(
        forest: &Forest<T>,
        train: &Dataset<T>,
        test: &'a Dataset<T>,
        train_attributions: Option<&'a AttributionMatrix<T>>,
        test_attributions: Option<&'a AttributionMatrix<T>>,
    ) -> Result<Self> {
        if test.n_rows() == 0 {
            return Err(Error::InvalidDataset("test set is empty".into()));
        }
        if let Some(a) = train_attributions {
            check_len(train.n_rows(), a.n_rows())?;
        }
        if let Some(a) = test_attributions {
            check_len(test.n_rows(), a.n_rows())?;
        }
        Ok(Surrogate {
            train_profiles: LeafProfiles::compute(forest, train)?,
            test_profiles: LeafProfiles::compute(forest, test)?,
            model_labels: forest.predict_labels(test)?,
            true_labels: test.labels(),
            train_attributions,
            test_attributions,
            n_classes: forest.n_classes(),
        })
    }

    pub fn n_test(&self) -> usize {
        self.test_profiles.n_instances()
    }

    pub fn test_attributions(&self) -> Option<&'a AttributionMatrix<T>> {
        self.test_attributions
    }

    fn attributions_for(&self, metric: AssignmentMetric, beta: T) -> Result<Option<(&'a AttributionMatrix<T>, &'a AttributionMatrix<T>)>> {
        match (self.train_attributions, self.test_attributions) {
            (Some(tr), Some(te)) => Ok(Some((tr, te))),
            _ if metric == AssignmentMetric::Combined && beta != T::zero() => Err(Error::InvalidParameter(
                "the combined metric needs train and test attributions".into(),
            )),
            _ => Ok(None),
        }
    }

    /// Index of the nearest prototype (training index) for test row `t`.
    fn nearest(&self, t: usize, prototypes: &PrototypeSet<T>, beta: T, metric: AssignmentMetric) -> Result<(usize, T)> {
        let attrs = self.attributions_for(metric, beta)?;
        let test_leaves = self.test_profiles.profile(t);
        let mut best: Option<(usize, T)> = None;
        for &j in &prototypes.indices {
            if j >= self.train_profiles.n_instances() {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: self.train_profiles.n_instances(),
                });
            }
            let distance: T = leaf_disagreement(test_leaves, self.train_profiles.profile(j));
            let cost = match attrs {
                Some((tr, te)) => assignment_cost(distance, te.normalized().row(t), tr.normalized().row(j), beta, metric),
                None => distance,
            };
            if best.is_none_or(|(b, c)| cost < c || (cost == c && j < b)) {
                best = Some((j, cost));
            }
        }
        best.ok_or(Error::EmptyPrototypes)
    }

    pub fn evaluate(&self, prototypes: &PrototypeSet<T>, beta: f64, metric: AssignmentMetric) -> Result<EvaluationReport> {
        if prototypes.is_empty() {
            return Err(Error::EmptyPrototypes);
        }
        check_len(prototypes.indices.len(), prototypes.labels.len())?;
        let label_of: HashMap<usize, usize> = prototypes
            .indices
            .iter()
            .copied()
            .zip(prototypes.labels.iter().copied())
            .collect();
        let beta_t = T::lit(beta);
        let assigned: Vec<usize> = (0..self.n_test())
            .into_par_iter()
            .map(|t| self.nearest(t, prototypes, beta_t, metric).map(|(j, _)| label_of[&j]))
            .collect::<Result<_>>()?;

        let c = self.n_classes;
        let mut confusion = vec![vec![0usize; c]; c];
        let mut truth_hits = 0usize;
        for (t, &pred) in assigned.iter().enumerate() {
            if pred >= c {
                return Err(Error::InvalidClass { class: pred, n_classes: c });
            }
            confusion[self.model_labels[t]][pred] += 1;
            truth_hits += usize::from(pred == self.true_labels[t]);
        }
        let n = self.n_test();
        let hits: usize = (0..c).map(|k| confusion[k][k]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let total: usize = row.iter().sum();
                (total > 0).then(|| row[k] as f64 / total as f64)
            })
            .collect();
        let mut config = prototypes.config;
        config.assignment_metric = metric;
        config.beta = beta;
        Ok(EvaluationReport {
            accuracy: hits as f64 / n as f64,
            ground_truth_accuracy: truth_hits as f64 / n as f64,
            per_class_accuracy,
            confusion,
            n_prototypes: prototypes.len(),
            n_test: n,
            config,
        })
    }

    /// Alike-part explanations of every test row by its nearest prototype.
    pub fn explain(&self, prototypes: &PrototypeSet<T>, beta: f64, metric: AssignmentMetric) -> Result<ExplanationBatch<T>> {
        let (tr, te) = match (self.train_attributions, self.test_attributions) {
            (Some(tr), Some(te)) => (tr, te),
            _ => {
                return Err(Error::InvalidParameter(
                    "explanations need train and test attributions".into(),
                ))
            }
        };
        let beta = T::lit(beta);
        let explanations = (0..self.n_test())
            .into_par_iter()
            .map(|t| {
                let test_leaves = self.test_profiles.profile(t);
                let candidates = prototypes.indices.iter().map(|&j| Candidate {
                    index: j,
                    distance: leaf_disagreement(test_leaves, self.train_profiles.profile(j)),
                    normalized: tr.normalized().row(j),
                });
                explain_against(t, te.normalized().row(t), candidates, beta, metric, te.provider())
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ExplanationBatch::from_explanations(explanations, te.n_features()))
    }
}

/// Fidelity of the 1-NN-over-prototypes surrogate on `test`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_surrogate<T: Scalar>(
    prototypes: &PrototypeSet<T>,
    train: &Dataset<T>,
    test: &Dataset<T>,
    forest: &Forest<T>,
    train_attributions: Option<&AttributionMatrix<T>>,
    test_attributions: Option<&AttributionMatrix<T>>,
    beta: f64,
    metric: AssignmentMetric,
) -> Result<EvaluationReport> {
    if prototypes.is_empty() {
        return Err(Error::EmptyPrototypes);
    }
    Surrogate::new(forest, train, test, train_attributions, test_attributions)?.evaluate(prototypes, beta, metric)
}
