//! Random forest of binary CART trees.
//!
//! Trees are stored as flat node arrays with the root at index 0. A split sends an
//! observed value `v` left when `v <= threshold`; a missing value follows
//! `missing_goes_left`, which training sets to the child that received more of
//! the observed training rows.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, Dataset};
use crate::error::{check_len, Error, Result};
use crate::scalar::{argmax_lowest, Scalar};

pub const FOREST_FORMAT: &str = "alike-forest";
pub const FOREST_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node<T> {
    Split {
        feature: usize,
        threshold: T,
        missing_goes_left: bool,
        left: usize,
        right: usize,
        train_count: usize,
        distribution: Vec<T>,
    },
    Leaf {
        leaf_id: usize,
        train_count: usize,
        distribution: Vec<T>,
    },
}

impl<T> Node<T> {
    pub fn distribution(&self) -> &[T] {
        match self {
            Node::Split { distribution, .. } | Node::Leaf { distribution, .. } => distribution,
        }
    }

    pub fn train_count(&self) -> usize {
        match self {
            Node::Split { train_count, .. } | Node::Leaf { train_count, .. } => *train_count,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree<T> {
    nodes: Vec<Node<T>>,
}

fn simplex_tolerance<T: Scalar>(len: usize) -> T {
    T::lit(1e-9).max(T::epsilon() * T::from_count(4 * len.max(1)))
}

impl<T: Scalar> Tree<T> {
    /// Validates structure, distributions and train counts.
    pub fn new(nodes: Vec<Node<T>>) -> Result<Self> {
        let tree = Tree { nodes };
        tree.validate()?;
        Ok(tree)
    }

    pub fn single_leaf(distribution: Vec<T>, train_count: usize) -> Result<Self> {
        Self::new(vec![Node::Leaf {
            leaf_id: 0,
            train_count,
            distribution,
        }])
    }

    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::MalformedTree(m));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let c = self.nodes[0].distribution().len();
        if c == 0 {
            return bad("empty class distribution".into());
        }
        let mut visited = vec![false; self.nodes.len()];
        let mut leaf_ids = std::collections::HashSet::new();
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if visited[i] {
                return bad(format!("node {i} is reachable twice"));
            }
            visited[i] = true;
            let node = &self.nodes[i];
            let dist = node.distribution();
            if dist.len() != c {
                return bad(format!("node {i} has {} classes, expected {c}", dist.len()));
            }
            if dist.iter().any(|p| !p.is_finite() || *p < T::zero()) {
                return bad(format!("node {i} has an invalid probability"));
            }
            let sum: T = dist.iter().copied().sum();
            if (sum - T::one()).abs() > simplex_tolerance(c) {
                return bad(format!("node {i} distribution sums to {sum}"));
            }
            match node {
                Node::Leaf { leaf_id, .. } => {
                    if !leaf_ids.insert(*leaf_id) {
                        return bad(format!("duplicate leaf id {leaf_id}"));
                    }
                }
                Node::Split {
                    threshold,
                    left,
                    right,
                    train_count,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return bad(format!("node {i} has a non-finite threshold"));
                    }
                    for &child in [left, right] {
                        if child >= self.nodes.len() || child == 0 {
                            return bad(format!("node {i} has invalid child {child}"));
                        }
                    }
                    let children =
                        self.nodes[*left].train_count() + self.nodes[*right].train_count();
                    if children != *train_count {
                        return bad(format!(
                            "node {i} has train_count {train_count} but children sum to {children}"
                        ));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        if let Some(orphan) = visited.iter().position(|v| !v) {
            return bad(format!("node {orphan} is unreachable from the root"));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node<T>] {
        &self.nodes
    }

    pub fn root(&self) -> &Node<T> {
        &self.nodes[0]
    }

    pub fn n_classes(&self) -> usize {
        self.nodes[0].distribution().len()
    }

    /// Node indices from the root to the reached leaf, inclusive.
    pub fn path(&self, x: &[Cell<T>]) -> Vec<usize> {
        let mut path = vec![0];
        let mut i = 0;
        while let Node::Split { .. } = self.nodes[i] {
            i = self.step(i, x);
            path.push(i);
        }
        path
    }

    fn step(&self, i: usize, x: &[Cell<T>]) -> usize {
        match &self.nodes[i] {
            Node::Split {
                feature,
                threshold,
                missing_goes_left,
                left,
                right,
                ..
            } => {
                let go_left = match x[*feature] {
                    Some(v) => v <= *threshold,
                    None => *missing_goes_left,
                };
                if go_left {
                    *left
                } else {
                    *right
                }
            }
            Node::Leaf { .. } => i,
        }
    }

    /// Index of the leaf node reached by `x`.
    pub fn leaf_node(&self, x: &[Cell<T>]) -> usize {
        let mut i = 0;
        while let Node::Split { .. } = self.nodes[i] {
            i = self.step(i, x);
        }
        i
    }

    pub fn leaf_id(&self, x: &[Cell<T>]) -> usize {
        match &self.nodes[self.leaf_node(x)] {
            Node::Leaf { leaf_id, .. } => *leaf_id,
            Node::Split { .. } => unreachable!("leaf_node returns a leaf"),
        }
    }

    pub fn leaf_distribution(&self, x: &[Cell<T>]) -> &[T] {
        self.nodes[self.leaf_node(x)].distribution()
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features sampled per split; `None` means `ceil(sqrt(d))`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            n_trees: 100,
            max_depth: 8,
            min_leaf: 2,
            mtry: None,
            seed: 0,
        }
    }
}

impl TrainingParams {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        self.mtry
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub label: usize,
    pub probabilities: Vec<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest<T> {
    trees: Vec<Tree<T>>,
    n_classes: usize,
    n_features: usize,
    training_params: Option<TrainingParams>,
}

#[derive(Serialize, Deserialize)]
struct ForestDocument<T> {
    format: String,
    version: u32,
    #[serde(flatten)]
    forest: Forest<T>,
}

impl<T: Scalar> Forest<T> {
    /// Assembles a forest from prebuilt trees.
    pub fn from_trees(trees: Vec<Tree<T>>, n_features: usize) -> Result<Self> {
        let first = trees
            .first()
            .ok_or_else(|| Error::InvalidParameter("a forest needs at least one tree".into()))?;
        let n_classes = first.n_classes();
        let forest = Forest {
            trees,
            n_classes,
            n_features,
            training_params: None,
        };
        forest.validate()?;
        Ok(forest)
    }

    fn validate(&self) -> Result<()> {
        if self.trees.is_empty() {
            return Err(Error::MalformedTree("forest has no trees".into()));
        }
        for (t, tree) in self.trees.iter().enumerate() {
            tree.validate()?;
            if tree.n_classes() != self.n_classes {
                return Err(Error::MalformedTree(format!(
                    "tree {t} has {} classes, forest has {}",
                    tree.n_classes(),
                    self.n_classes
                )));
            }
            if let Some(f) = tree.max_feature() {
                if f >= self.n_features {
                    return Err(Error::MalformedTree(format!(
                        "tree {t} splits on feature {f} but the forest has {} features",
                        self.n_features
                    )));
                }
            }
        }
        Ok(())
    }

    /// Fits one tree per bootstrap sample. Tree `t` draws from a ChaCha stream
    /// keyed by `(seed, t)`, so results do not depend on thread scheduling.
    pub fn fit(ds: &Dataset<T>, params: &TrainingParams) -> Result<Self> {
        let n = ds.n_rows();
        let d = ds.n_features();
        let mtry = params.resolved_mtry(d);
        if params.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        if params.min_leaf == 0 {
            return Err(Error::InvalidParameter("min_leaf must be at least 1".into()));
        }
        if mtry > d {
            return Err(Error::InvalidParameter(format!(
                "mtry {mtry} exceeds the {d} available features"
            )));
        }
        if n == 1 && params.min_leaf > 1 {
            return Err(Error::InvalidParameter(format!(
                "a single-row dataset cannot satisfy min_leaf = {}",
                params.min_leaf
            )));
        }
        let trees = (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
                rng.set_stream(t as u64);
                let sample: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                let mut builder = TreeBuilder {
                    ds,
                    params,
                    mtry,
                    rng,
                    nodes: Vec::new(),
                    next_leaf: 0,
                };
                builder.grow(sample, 0);
                Tree {
                    nodes: builder.nodes,
                }
            })
            .collect();
        Ok(Forest {
            trees,
            n_classes: ds.n_classes(),
            n_features: d,
            training_params: Some(*params),
        })
    }

    pub fn trees(&self) -> &[Tree<T>] {
        &self.trees
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn training_params(&self) -> Option<&TrainingParams> {
        self.training_params.as_ref()
    }

    pub fn predict(&self, x: &[Cell<T>]) -> Result<Prediction<T>> {
        check_len(self.n_features, x.len())?;
        let mut probabilities = vec![T::zero(); self.n_classes];
        for tree in &self.trees {
            for (p, q) in probabilities.iter_mut().zip(tree.leaf_distribution(x)) {
                *p += *q;
            }
        }
        let t = T::from_count(self.trees.len());
        probabilities.iter_mut().for_each(|p| *p /= t);
        Ok(Prediction {
            label: argmax_lowest(&probabilities),
            probabilities,
        })
    }

    /// Predicted label of every row.
    pub fn predict_labels(&self, ds: &Dataset<T>) -> Result<Vec<usize>> {
        check_len(self.n_features, ds.n_features())?;
        (0..ds.n_rows())
            .into_par_iter()
            .map(|i| self.predict(ds.row(i)).map(|p| p.label))
            .collect()
    }

    /// Leaf reached in each tree.
    pub fn leaf_ids(&self, x: &[Cell<T>]) -> Result<Vec<usize>> {
        check_len(self.n_features, x.len())?;
        Ok(self.trees.iter().map(|t| t.leaf_id(x)).collect())
    }

    /// Mean over trees of the root class distribution.
    pub fn root_prior(&self) -> Vec<T> {
        let mut prior = vec![T::zero(); self.n_classes];
        for tree in &self.trees {
            for (p, q) in prior.iter_mut().zip(tree.root().distribution()) {
                *p += *q;
            }
        }
        let t = T::from_count(self.trees.len());
        prior.iter_mut().for_each(|p| *p /= t);
        prior
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ForestDocument {
            format: FOREST_FORMAT.to_owned(),
            version: FOREST_FORMAT_VERSION,
            forest: self.clone(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ForestDocument<T> = serde_json::from_str(text)?;
        if doc.format != FOREST_FORMAT {
            return Err(Error::MalformedTree(format!(
                "unexpected document format `{}`",
                doc.format
            )));
        }
        if doc.version != FOREST_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.version));
        }
        doc.forest.validate()?;
        Ok(doc.forest)
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

struct TreeBuilder<'a, T> {
    ds: &'a Dataset<T>,
    params: &'a TrainingParams,
    mtry: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node<T>>,
    next_leaf: usize,
}

struct SplitChoice<T> {
    feature: usize,
    threshold: T,
    missing_goes_left: bool,
}

fn gini_mass(counts: &[usize], total: usize) -> f64 {
    // n * gini = n - sum(c^2) / n
    if total == 0 {
        return 0.0;
    }
    let sq: f64 = counts.iter().map(|&c| (c as f64) * (c as f64)).sum();
    total as f64 - sq / total as f64
}

impl<T: Scalar> TreeBuilder<'_, T> {
    fn class_counts(&self, sample: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.ds.n_classes()];
        for &i in sample {
            counts[self.ds.labels()[i]] += 1;
        }
        counts
    }

    fn grow(&mut self, sample: Vec<usize>, depth: usize) -> usize {
        let counts = self.class_counts(&sample);
        let total = sample.len();
        let distribution: Vec<T> = counts
            .iter()
            .map(|&c| T::from_count(c) / T::from_count(total))
            .collect();
        let idx = self.nodes.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let split = if depth >= self.params.max_depth
            || pure
            || total < 2 * self.params.min_leaf
        {
            None
        } else {
            self.best_split(&sample)
        };
        let Some(split) = split else {
            self.nodes.push(Node::Leaf {
                leaf_id: self.next_leaf,
                train_count: total,
                distribution,
            });
            self.next_leaf += 1;
            return idx;
        };

        self.nodes.push(Node::Leaf {
            leaf_id: usize::MAX,
            train_count: total,
            distribution: Vec::new(),
        });
        let (left, right): (Vec<usize>, Vec<usize>) =
            sample.into_iter().partition(|&i| match self.ds.row(i)[split.feature] {
                Some(v) => v <= split.threshold,
                None => split.missing_goes_left,
            });
        let left = self.grow(left, depth + 1);
        let right = self.grow(right, depth + 1);
        self.nodes[idx] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            missing_goes_left: split.missing_goes_left,
            left,
            right,
            train_count: total,
            distribution,
        };
        idx
    }

    /// Lowest weighted Gini over the sampled features; ties keep the earlier
    /// candidate, which is the lower feature index and then the lower threshold.
    fn best_split(&mut self, sample: &[usize]) -> Option<SplitChoice<T>> {
        let d = self.ds.n_features();
        let c = self.ds.n_classes();
        let mut features = index::sample(&mut self.rng, d, self.mtry).into_vec();
        features.sort_unstable();

        let mut best: Option<(f64, SplitChoice<T>)> = None;
        let mut observed: Vec<(T, usize)> = Vec::with_capacity(sample.len());
        for feature in features {
            observed.clear();
            let mut missing = vec![0usize; c];
            for &i in sample {
                let label = self.ds.labels()[i];
                match self.ds.row(i)[feature] {
                    Some(v) => observed.push((v, label)),
                    None => missing[label] += 1,
                }
            }
            let n_missing: usize = missing.iter().sum();
            if observed.len() < 2 {
                continue;
            }
            observed.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite feature values"));
            let n_obs = observed.len();
            let mut left = vec![0usize; c];
            let mut right = vec![0usize; c];
            for &(_, l) in &observed {
                right[l] += 1;
            }
            for pos in 0..n_obs - 1 {
                let (v, l) = observed[pos];
                left[l] += 1;
                right[l] -= 1;
                let next = observed[pos + 1].0;
                if next <= v {
                    continue;
                }
                let n_left = pos + 1;
                let n_right = n_obs - n_left;
                let missing_goes_left = n_left >= n_right;
                let (score, total_left, total_right) = if missing_goes_left {
                    let merged: Vec<usize> = left.iter().zip(&missing).map(|(a, b)| a + b).collect();
                    (
                        gini_mass(&merged, n_left + n_missing) + gini_mass(&right, n_right),
                        n_left + n_missing,
                        n_right,
                    )
                } else {
                    let merged: Vec<usize> = right.iter().zip(&missing).map(|(a, b)| a + b).collect();
                    (
                        gini_mass(&left, n_left) + gini_mass(&merged, n_right + n_missing),
                        n_left,
                        n_right + n_missing,
                    )
                };
                if total_left < self.params.min_leaf || total_right < self.params.min_leaf {
                    continue;
                }
                if best.as_ref().is_none_or(|(s, _)| score < *s) {
                    let mid = (v + next) / T::lit(2.0);
                    let threshold = if mid < next { mid } else { v };
                    best = Some((
                        score,
                        SplitChoice {
                            feature,
                            threshold,
                            missing_goes_left,
                        },
                    ));
                }
            }
        }
        best.map(|(_, s)| s)
    }
}
