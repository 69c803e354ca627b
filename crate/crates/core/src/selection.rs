//! Greedy tree-space medoid selection with an optional feature-importance term.
//!
//! The assignment cost of instance `i` to prototype `j` is
//! `d(i, j) + beta * fi(i, j)`, where `fi` is the inner product of the two
//! normalized attribution rows. The objective of a prototype set sums, over
//! every instance, the cheapest assignment cost. With `beta = 0` this is the
//! plain tree-distance k-medoids objective.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attribution::AttributionMatrix;
use crate::error::{check_len, Error, Result};
use crate::proximity::{check_index, Dissimilarity};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Strategy {
    /// Equal budget per class, medoids computed within each class.
    Gkm { k_per_class: usize },
    /// Fixed total budget, best global improvement per step.
    Sma { k: usize },
    /// One seed per class, then additions until the relative improvement drops below `epsilon`.
    Apete { epsilon: f64 },
}

impl Strategy {
    pub fn kind(&self) -> StrategyKind {
        match self {
            Strategy::Gkm { .. } => StrategyKind::Gkm,
            Strategy::Sma { .. } => StrategyKind::Sma,
            Strategy::Apete { .. } => StrategyKind::Apete,
        }
    }

    /// The strategy-specific hyperparameter as a real number.
    pub fn hyperparameter(&self) -> f64 {
        match *self {
            Strategy::Gkm { k_per_class } => k_per_class as f64,
            Strategy::Sma { k } => k as f64,
            Strategy::Apete { epsilon } => epsilon,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StrategyKind {
    Gkm,
    Sma,
    Apete,
}

impl StrategyKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyKind::Gkm => "gkm",
            StrategyKind::Sma => "sma",
            StrategyKind::Apete => "apete",
        }
    }

    pub fn hyperparameter_name(self) -> &'static str {
        match self {
            StrategyKind::Gkm => "k_per_class",
            StrategyKind::Sma => "k",
            StrategyKind::Apete => "epsilon",
        }
    }

    /// Builds the strategy from a hyperparameter value; integer budgets must be whole numbers.
    pub fn with_hyperparameter(self, value: f64) -> Result<Strategy> {
        let count = || {
            if value >= 0.0 && value.fract() == 0.0 {
                Ok(value as usize)
            } else {
                Err(Error::InvalidParameter(format!(
                    "{} must be a non-negative integer, got {value}",
                    self.hyperparameter_name()
                )))
            }
        };
        Ok(match self {
            StrategyKind::Gkm => Strategy::Gkm { k_per_class: count()? },
            StrategyKind::Sma => Strategy::Sma { k: count()? },
            StrategyKind::Apete => Strategy::Apete { epsilon: value },
        })
    }
}

impl std::str::FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "gkm" => Ok(StrategyKind::Gkm),
            "sma" => Ok(StrategyKind::Sma),
            "apete" => Ok(StrategyKind::Apete),
            _ => Err(Error::InvalidParameter(format!("unknown strategy `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AssignmentMetric {
    /// `d + beta * fi`
    #[default]
    Combined,
    DistanceOnly,
}

impl AssignmentMetric {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignmentMetric::Combined => "combined",
            AssignmentMetric::DistanceOnly => "distance-only",
        }
    }
}

impl std::str::FromStr for AssignmentMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "combined" => Ok(AssignmentMetric::Combined),
            "distance-only" | "distance" => Ok(AssignmentMetric::DistanceOnly),
            other => Err(Error::InvalidParameter(format!("unknown assignment metric `{other}`"))),
        }
    }
}

pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub strategy: Strategy,
    pub beta: f64,
    pub assignment_metric: AssignmentMetric,
}

impl SelectionConfig {
    pub fn new(strategy: Strategy, beta: f64) -> Self {
        SelectionConfig {
            strategy,
            beta,
            assignment_metric: AssignmentMetric::Combined,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be finite, got {}", self.beta)));
        }
        if let Strategy::Apete { epsilon } = self.strategy {
            if !(epsilon >= 0.0 && epsilon.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "epsilon must be a finite non-negative number, got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet<T> {
    pub indices: Vec<usize>,
    pub labels: Vec<usize>,
    pub objective_trace: Vec<T>,
    pub config: SelectionConfig,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn final_objective(&self) -> Option<T> {
        self.objective_trace.last().copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let set: Self = serde_json::from_str(text)?;
        check_len(set.indices.len(), set.labels.len())?;
        Ok(set)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn dot<T: Scalar>(u: &[T], v: &[T]) -> T {
    u.iter().zip(v).fold(T::zero(), |acc, (a, b)| acc + *a * *b)
}

fn check_simplex<T: Scalar>(v: &[T]) -> Result<()> {
    let sum: T = v.iter().copied().sum();
    let tol = T::lit(1e-9).max(T::epsilon() * T::from_count(4 * v.len().max(1)));
    if v.iter().any(|x| !x.is_finite() || *x < T::zero()) || (sum - T::one()).abs() > tol {
        return Err(Error::NotSimplex(sum.as_f64()));
    }
    Ok(())
}

/// Alignment of two normalized attribution vectors, `sum_l u_l * v_l`.
pub fn fi_score<T: Scalar>(u_hat: &[T], v_hat: &[T]) -> Result<T> {
    check_len(u_hat.len(), v_hat.len())?;
    check_simplex(u_hat)?;
    check_simplex(v_hat)?;
    Ok(dot(u_hat, v_hat))
}

/// Lazily filled fi table: column `j` holds `fi(i, j)` for every instance `i`
/// and is computed once, on first use.
pub struct FiCache<'a, T> {
    attributions: &'a AttributionMatrix<T>,
    columns: Vec<OnceLock<Vec<T>>>,
}

impl<'a, T: Scalar> FiCache<'a, T> {
    pub fn new(attributions: &'a AttributionMatrix<T>) -> Self {
        FiCache {
            attributions,
            columns: (0..attributions.n_rows()).map(|_| OnceLock::new()).collect(),
        }
    }

    pub fn attributions(&self) -> &'a AttributionMatrix<T> {
        self.attributions
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    fn column(&self, j: usize) -> &[T] {
        self.columns[j].get_or_init(|| {
            let rows = self.attributions.normalized();
            let proto = rows.row(j);
            rows.iter_rows().map(|row| dot(row, proto)).collect()
        })
    }

    pub fn get(&self, i: usize, j: usize) -> Result<T> {
        check_index(i, self.len())?;
        check_index(j, self.len())?;
        Ok(self.column(j)[i])
    }

    /// Number of columns computed so far.
    pub fn filled_columns(&self) -> usize {
        self.columns.iter().filter(|c| c.get().is_some()).count()
    }
}

/// Assignment costs `d(i, j) + beta * fi(i, j)` over a fixed instance set.
pub struct CostModel<'a, T, D> {
    distances: &'a D,
    fi: Option<&'a FiCache<'a, T>>,
    beta: T,
}

impl<'a, T: Scalar, D: Dissimilarity<T>> CostModel<'a, T, D> {
    /// `fi` may be omitted only when `beta` is zero.
    pub fn new(distances: &'a D, fi: Option<&'a FiCache<'a, T>>, beta: f64) -> Result<Self> {
        if !beta.is_finite() {
            return Err(Error::InvalidParameter(format!("beta must be finite, got {beta}")));
        }
        if let Some(cache) = fi {
            check_len(distances.len(), cache.len())?;
        } else if beta != 0.0 {
            return Err(Error::InvalidParameter(
                "a non-zero beta requires attributions".into(),
            ));
        }
        Ok(CostModel {
            distances,
            fi,
            beta: T::lit(beta),
        })
    }

    /// Distance-only model: the objective reduces to summed tree distances.
    pub fn distance_only(distances: &'a D) -> Self {
        Self::new(distances, None, 0.0).expect("zero beta needs no attributions")
    }

    pub fn len(&self) -> usize {
        self.distances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    pub fn distances(&self) -> &'a D {
        self.distances
    }

    pub fn attributions(&self) -> Option<&'a AttributionMatrix<T>> {
        self.fi.map(FiCache::attributions)
    }

    /// Cached fi score between instance `i` and prototype `j`.
    pub fn fi(&self, i: usize, j: usize) -> Result<T> {
        self.fi
            .ok_or_else(|| Error::InvalidParameter("no attributions available for fi".into()))?
            .get(i, j)
    }

    pub(crate) fn cost(&self, i: usize, j: usize) -> T {
        let d = self.distances.distance(i, j);
        if self.beta == T::zero() {
            d
        } else {
            let fi = self.fi.expect("non-zero beta implies an fi cache");
            d + self.beta * fi.column(j)[i]
        }
    }

    pub fn pair_cost(&self, i: usize, j: usize) -> Result<T> {
        check_index(i, self.len())?;
        check_index(j, self.len())?;
        Ok(self.cost(i, j))
    }

    /// Sum over all instances of the cheapest assignment cost to `prototypes`.
    pub fn objective(&self, prototypes: &[usize]) -> Result<T> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.objective_over(&all, prototypes)
    }

    /// Objective restricted to the listed instances.
    pub fn objective_over(&self, instances: &[usize], prototypes: &[usize]) -> Result<T> {
        if prototypes.is_empty() {
            return Err(Error::EmptyPrototypes);
        }
        for &p in prototypes.iter().chain(instances) {
            check_index(p, self.len())?;
        }
        Ok(instances
            .iter()
            .map(|&i| {
                prototypes
                    .iter()
                    .map(|&j| self.cost(i, j))
                    .fold(T::infinity(), T::min)
            })
            .fold(T::zero(), |acc, c| acc + c))
    }
}

/// Running best assignment cost for a fixed list of instances.
struct Coverage<T> {
    members: Vec<usize>,
    best: Vec<T>,
}

impl<T: Scalar> Coverage<T> {
    fn new(members: Vec<usize>) -> Self {
        let best = vec![T::infinity(); members.len()];
        Coverage { members, best }
    }

    fn trial<D: Dissimilarity<T>>(&self, model: &CostModel<'_, T, D>, candidate: usize) -> T {
        self.members
            .iter()
            .zip(&self.best)
            .fold(T::zero(), |acc, (&i, &b)| acc + b.min(model.cost(i, candidate)))
    }

    fn total(&self) -> T {
        self.best.iter().fold(T::zero(), |acc, &b| acc + b)
    }

    fn add<D: Dissimilarity<T>>(&mut self, model: &CostModel<'_, T, D>, prototype: usize) {
        for (&i, b) in self.members.iter().zip(self.best.iter_mut()) {
            *b = b.min(model.cost(i, prototype));
        }
    }

    /// Candidate with the lowest trial objective; ties go to the earliest entry of `candidates`.
    fn best_candidate<D: Dissimilarity<T>>(
        &self,
        model: &CostModel<'_, T, D>,
        candidates: &[usize],
    ) -> Option<(usize, T)> {
        let trials: Vec<T> = candidates
            .par_iter()
            .map(|&c| self.trial(model, c))
            .collect();
        let mut best: Option<(usize, T)> = None;
        for (&c, &value) in candidates.iter().zip(&trials) {
            if best.is_none_or(|(_, v)| value < v) {
                best = Some((c, value));
            }
        }
        best
    }
}

struct Greedy<'m, 'a, T, D> {
    model: &'m CostModel<'a, T, D>,
    global: Coverage<T>,
    selected: Vec<usize>,
    taken: Vec<bool>,
    trace: Vec<T>,
}

impl<'m, 'a, T: Scalar, D: Dissimilarity<T>> Greedy<'m, 'a, T, D> {
    fn new(model: &'m CostModel<'a, T, D>) -> Self {
        let n = model.len();
        Greedy {
            model,
            global: Coverage::new((0..n).collect()),
            selected: Vec::new(),
            taken: vec![false; n],
            trace: Vec::new(),
        }
    }

    fn available(&self, pool: &[usize]) -> Vec<usize> {
        pool.iter().copied().filter(|&c| !self.taken[c]).collect()
    }

    fn commit(&mut self, prototype: usize) {
        self.taken[prototype] = true;
        self.selected.push(prototype);
        self.global.add(self.model, prototype);
        self.trace.push(self.global.total());
    }

    fn finish(self, labels: &[usize], config: SelectionConfig) -> PrototypeSet<T> {
        PrototypeSet {
            labels: self.selected.iter().map(|&i| labels[i]).collect(),
            indices: self.selected,
            objective_trace: self.trace,
            config,
        }
    }
}

fn check_inputs<T: Scalar, D: Dissimilarity<T>>(model: &CostModel<'_, T, D>, labels: &[usize]) -> Result<()> {
    check_len(model.len(), labels.len())?;
    if model.is_empty() {
        return Err(Error::InvalidDataset("no instances to select from".into()));
    }
    Ok(())
}

fn classes(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    by_class
}

fn config_for<T: Scalar, D>(model: &CostModel<'_, T, D>, strategy: Strategy) -> SelectionConfig {
    SelectionConfig::new(strategy, model.beta.as_f64())
}

/// Global greedy: `k` additions, each minimizing the full objective.
pub fn select_sma<T: Scalar, D: Dissimilarity<T>>(
    model: &CostModel<'_, T, D>,
    labels: &[usize],
    k: usize,
) -> Result<PrototypeSet<T>> {
    check_inputs(model, labels)?;
    let n = model.len();
    if k == 0 || k > n {
        return Err(Error::InvalidParameter(format!("k = {k} must lie in 1..={n}")));
    }
    let all: Vec<usize> = (0..n).collect();
    let mut greedy = Greedy::new(model);
    for _ in 0..k {
        let candidates = greedy.available(&all);
        let (c, _) = greedy
            .global
            .best_candidate(model, &candidates)
            .expect("k <= n leaves a candidate");
        greedy.commit(c);
    }
    Ok(greedy.finish(labels, config_for(model, Strategy::Sma { k })))
}

/// Per-class greedy: each class picks `k_per_class` medoids for its own instances.
///
/// Classes are taken from `labels`; a class that never occurs there is skipped.
pub fn select_gkm<T: Scalar, D: Dissimilarity<T>>(
    model: &CostModel<'_, T, D>,
    labels: &[usize],
    k_per_class: usize,
) -> Result<PrototypeSet<T>> {
    check_inputs(model, labels)?;
    if k_per_class == 0 {
        return Err(Error::InvalidParameter("k_per_class must be at least 1".into()));
    }
    let by_class = classes(labels);
    for (&class, members) in &by_class {
        if members.len() < k_per_class {
            return Err(Error::ClassTooSmall {
                class: class.to_string(),
                size: members.len(),
                required: k_per_class,
            });
        }
    }
    let mut greedy = Greedy::new(model);
    for members in by_class.into_values() {
        let mut local = Coverage::new(members.clone());
        for _ in 0..k_per_class {
            let candidates = greedy.available(&members);
            let (c, _) = local
                .best_candidate(model, &candidates)
                .expect("class size checked");
            local.add(model, c);
            greedy.commit(c);
        }
    }
    Ok(greedy.finish(labels, config_for(model, Strategy::Gkm { k_per_class })))
}

/// Automatic stopping: seed one prototype per class, then keep adding the best
/// global candidate while `(f_prev - f_new) / |f_prev| >= epsilon` and the
/// objective strictly decreases.
pub fn select_apete<T: Scalar, D: Dissimilarity<T>>(
    model: &CostModel<'_, T, D>,
    labels: &[usize],
    epsilon: f64,
) -> Result<PrototypeSet<T>> {
    check_inputs(model, labels)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must be a finite non-negative number, got {epsilon}"
        )));
    }
    let eps = T::lit(epsilon);
    let mut greedy = Greedy::new(model);
    for members in classes(labels).into_values() {
        let candidates = greedy.available(&members);
        let (c, _) = greedy
            .global
            .best_candidate(model, &candidates)
            .expect("non-empty class");
        greedy.commit(c);
    }
    let all: Vec<usize> = (0..model.len()).collect();
    loop {
        let candidates = greedy.available(&all);
        let Some((c, f_new)) = greedy.global.best_candidate(model, &candidates) else {
            break;
        };
        let f_prev = greedy.global.total();
        if f_prev == T::zero() || f_new.partial_cmp(&f_prev) != Some(std::cmp::Ordering::Less) {
            break;
        }
        let relative = (f_prev - f_new) / f_prev.abs();
        if relative < eps {
            break;
        }
        greedy.commit(c);
    }
    Ok(greedy.finish(labels, config_for(model, Strategy::Apete { epsilon })))
}

/// Runs the configured strategy; `labels` should be the black-box predictions.
pub fn select<T: Scalar, D: Dissimilarity<T>>(
    model: &CostModel<'_, T, D>,
    labels: &[usize],
    config: &SelectionConfig,
) -> Result<PrototypeSet<T>> {
    config.validate()?;
    let mut set = match config.strategy {
        Strategy::Gkm { k_per_class } => select_gkm(model, labels, k_per_class)?,
        Strategy::Sma { k } => select_sma(model, labels, k)?,
        Strategy::Apete { epsilon } => select_apete(model, labels, epsilon)?,
    };
    set.config = *config;
    Ok(set)
}
