//! Alike parts: features whose normalized importance is high for both an
//! instance and its nearest prototype.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::{AttributionMatrix, Provider};
use crate::error::{check_len, Error, Result};
use crate::proximity::{check_index, Dissimilarity};
use crate::scalar::Scalar;
use crate::selection::{AssignmentMetric, CostModel, PrototypeSet};

/// Element-wise product of two normalized attribution vectors.
pub fn alike_weights<T: Scalar>(u_hat: &[T], v_hat: &[T]) -> Result<Vec<T>> {
    check_len(u_hat.len(), v_hat.len())?;
    Ok(u_hat.iter().zip(v_hat).map(|(a, b)| *a * *b).collect())
}

/// Marks the weights strictly above their mean.
pub fn alike_mask<T: Scalar>(w: &[T]) -> Vec<u8> {
    if w.is_empty() {
        return Vec::new();
    }
    let min = w.iter().copied().fold(T::infinity(), T::min);
    let max = w.iter().copied().fold(T::neg_infinity(), T::max);
    if min == max {
        return vec![0; w.len()];
    }
    let sum = w.iter().fold(T::zero(), |acc, v| acc + *v);
    // the true mean is never below the minimum; guard against rounding
    let mean = (sum / T::from_count(w.len())).max(min);
    w.iter().map(|v| u8::from(*v > mean)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlikeExplanation<T> {
    pub instance_index: usize,
    pub prototype_index: usize,
    pub weights: Vec<T>,
    pub mask: Vec<u8>,
    pub assignment_cost: T,
    pub metric_used: AssignmentMetric,
    pub provider: Provider,
}

impl<T: Scalar> AlikeExplanation<T> {
    pub fn mask_len(&self) -> usize {
        self.mask.iter().map(|&m| m as usize).sum()
    }

    /// Sum of the instance's normalized importance over the highlighted features.
    pub fn highlighted_importance(&self, u_hat: &[T]) -> T {
        self.mask
            .iter()
            .zip(u_hat)
            .filter(|(m, _)| **m == 1)
            .fold(T::zero(), |acc, (_, v)| acc + *v)
    }
}

/// A candidate prototype as seen from the instance being explained.
pub struct Candidate<'a, T> {
    pub index: usize,
    pub distance: T,
    pub normalized: &'a [T],
}

pub(crate) fn assignment_cost<T: Scalar>(distance: T, u_hat: &[T], v_hat: &[T], beta: T, metric: AssignmentMetric) -> T {
    match metric {
        AssignmentMetric::DistanceOnly => distance,
        AssignmentMetric::Combined if beta == T::zero() => distance,
        AssignmentMetric::Combined => {
            distance + beta * u_hat.iter().zip(v_hat).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
        }
    }
}

/// Picks the cheapest candidate (lowest prototype index on ties) and builds the explanation.
pub fn explain_against<'a, T: Scalar>(
    instance_index: usize,
    u_hat: &[T],
    candidates: impl IntoIterator<Item = Candidate<'a, T>>,
    beta: T,
    metric: AssignmentMetric,
    provider: Provider,
) -> Result<AlikeExplanation<T>> {
    let mut best: Option<(T, Candidate<'a, T>)> = None;
    for cand in candidates {
        check_len(u_hat.len(), cand.normalized.len())?;
        let cost = assignment_cost(cand.distance, u_hat, cand.normalized, beta, metric);
        let better = match &best {
            None => true,
            Some((c, b)) => cost < *c || (cost == *c && cand.index < b.index),
        };
        if better {
            best = Some((cost, cand));
        }
    }
    let (cost, proto) = best.ok_or(Error::EmptyPrototypes)?;
    let weights = alike_weights(u_hat, proto.normalized)?;
    let mask = alike_mask(&weights);
    Ok(AlikeExplanation {
        instance_index,
        prototype_index: proto.index,
        weights,
        mask,
        assignment_cost: cost,
        metric_used: metric,
        provider,
    })
}

/// Explains training instance `i` by its nearest prototype under `metric`.
pub fn explain_instance<T: Scalar, D: Dissimilarity<T>>(
    i: usize,
    prototypes: &PrototypeSet<T>,
    model: &CostModel<'_, T, D>,
    metric: AssignmentMetric,
) -> Result<AlikeExplanation<T>> {
    if prototypes.is_empty() {
        return Err(Error::EmptyPrototypes);
    }
    let a = model
        .attributions()
        .ok_or_else(|| Error::InvalidParameter("explanations need attribution rows".into()))?;
    check_index(i, model.len())?;
    let u_hat = a.normalized_row(i)?;
    let candidates = prototypes
        .indices
        .iter()
        .map(|&j| {
            check_index(j, model.len())?;
            Ok(Candidate {
                index: j,
                distance: model.distances().distance(i, j),
                normalized: a.normalized_row(j)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    explain_against(i, u_hat, candidates, model.beta(), metric, a.provider())
}

/// Highlight fraction of each feature over a batch of explanations.
pub fn highlight_frequencies<T: Scalar>(explanations: &[AlikeExplanation<T>], d: usize) -> Vec<T> {
    let mut counts = vec![0usize; d];
    for e in explanations {
        for (c, &m) in counts.iter_mut().zip(&e.mask) {
            *c += m as usize;
        }
    }
    if explanations.is_empty() {
        return vec![T::zero(); d];
    }
    let n = T::from_count(explanations.len());
    counts.into_iter().map(|c| T::from_count(c) / n).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationBatch<T> {
    pub explanations: Vec<AlikeExplanation<T>>,
    pub frequencies: Vec<T>,
}

impl<T: Scalar> ExplanationBatch<T> {
    pub fn from_explanations(explanations: Vec<AlikeExplanation<T>>, d: usize) -> Self {
        let frequencies = highlight_frequencies(&explanations, d);
        ExplanationBatch {
            explanations,
            frequencies,
        }
    }

    pub fn mean_mask_len(&self) -> f64 {
        if self.explanations.is_empty() {
            return 0.0;
        }
        let total: usize = self.explanations.iter().map(AlikeExplanation::mask_len).sum();
        total as f64 / self.explanations.len() as f64
    }

    pub fn write_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        write_jsonl(path.as_ref(), &self.explanations)
    }

    pub fn write_frequencies(&self, path: impl AsRef<Path>, feature_names: &[String]) -> Result<()> {
        let path = path.as_ref();
        check_len(self.frequencies.len(), feature_names.len())?;
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        writer.write_record(["feature_name", "highlight_fraction"]).map_err(csv_err)?;
        for (name, f) in feature_names.iter().zip(&self.frequencies) {
            writer.write_record([name.as_str(), &f.to_string()]).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))
    }
}

pub fn write_jsonl<T: Scalar>(path: &Path, explanations: &[AlikeExplanation<T>]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = std::io::BufWriter::new(file);
    for e in explanations {
        serde_json::to_writer(&mut out, e)?;
        out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn read_jsonl<T: Scalar>(path: impl AsRef<Path>) -> Result<Vec<AlikeExplanation<T>>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

/// Explains every training instance and tallies highlight frequencies.
pub fn explain_all<T: Scalar, D: Dissimilarity<T>>(
    prototypes: &PrototypeSet<T>,
    model: &CostModel<'_, T, D>,
    metric: AssignmentMetric,
) -> Result<ExplanationBatch<T>> {
    let a: &AttributionMatrix<T> = model
        .attributions()
        .ok_or_else(|| Error::InvalidParameter("explanations need attribution rows".into()))?;
    let explanations = (0..model.len())
        .into_par_iter()
        .map(|i| explain_instance(i, prototypes, model, metric))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExplanationBatch::from_explanations(explanations, a.n_features()))
}
