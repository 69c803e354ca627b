//! Test-only data generators and brute-force references.
//!
//! The references here are written from the objective definitions alone and
//! never call into the selection module.
#![allow(dead_code)]

use std::collections::BTreeMap;

use alike::dataset::{Cell, Dataset};
use alike::forest::{Forest, Node, Tree};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Three noisy classes in four features; the last feature is pure noise.
pub fn synthetic(n: usize, seed: u64) -> Dataset<f64> {
    let mut r = rng(seed);
    let noise = Normal::new(0.0, 0.7).unwrap();
    let centers = [[0.0, 0.0, 0.0], [2.0, 0.5, -1.0], [0.5, 2.5, 1.0]];
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 3;
        let mut row: Vec<f64> = centers[c].iter().map(|m| m + noise.sample(&mut r)).collect();
        row.push(noise.sample(&mut r));
        rows.push(row);
        labels.push(c);
    }
    Dataset::from_dense(&rows, labels, 3).unwrap()
}

/// Two isotropic Gaussian blobs in `d` dimensions with centers `separation` apart.
pub fn two_blobs(n: usize, d: usize, separation: f64, seed: u64) -> Dataset<f64> {
    let mut r = rng(seed);
    let unit = Normal::new(0.0, 1.0).unwrap();
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % 2;
        let shift = if c == 0 { -separation / 2.0 } else { separation / 2.0 };
        rows.push((0..d).map(|_| shift + unit.sample(&mut r)).collect());
        labels.push(c);
    }
    Dataset::from_dense(&rows, labels, 2).unwrap()
}

pub fn random_simplex(r: &mut ChaCha8Rng, c: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..c).map(|_| r.random::<f64>() + 1e-3).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

/// Full binary tree of the given depth with random splits on features in `0..d`
/// and thresholds in (-1, 1).
pub fn random_tree(r: &mut ChaCha8Rng, d: usize, depth: usize, n_classes: usize) -> Tree<f64> {
    fn grow(
        r: &mut ChaCha8Rng,
        nodes: &mut Vec<Node<f64>>,
        next_leaf: &mut usize,
        d: usize,
        depth: usize,
        c: usize,
    ) -> usize {
        let me = nodes.len();
        if depth == 0 {
            nodes.push(Node::Leaf {
                leaf_id: *next_leaf,
                train_count: r.random_range(1..6),
                distribution: random_simplex(r, c),
            });
            *next_leaf += 1;
            return me;
        }
        nodes.push(Node::Leaf {
            leaf_id: usize::MAX,
            train_count: 0,
            distribution: vec![],
        });
        let feature = r.random_range(0..d);
        let threshold = r.random_range(-1.0..1.0);
        let missing_goes_left = r.random::<bool>();
        let left = grow(r, nodes, next_leaf, d, depth - 1, c);
        let right = grow(r, nodes, next_leaf, d, depth - 1, c);
        let (nl, nr) = (nodes[left].train_count(), nodes[right].train_count());
        let distribution = nodes[left]
            .distribution()
            .iter()
            .zip(nodes[right].distribution())
            .map(|(a, b)| (a * nl as f64 + b * nr as f64) / (nl + nr) as f64)
            .collect();
        nodes[me] = Node::Split {
            feature,
            threshold,
            missing_goes_left,
            left,
            right,
            train_count: nl + nr,
            distribution,
        };
        me
    }
    let mut nodes = Vec::new();
    let mut next_leaf = 0;
    grow(r, &mut nodes, &mut next_leaf, d, depth, n_classes);
    Tree::new(nodes).unwrap()
}

/// Copy of `tree` with every split on `a` moved to `b` and vice versa.
pub fn mirror_tree(tree: &Tree<f64>, a: usize, b: usize) -> Tree<f64> {
    let nodes = tree
        .nodes()
        .iter()
        .cloned()
        .map(|mut n| {
            if let Node::Split { feature, .. } = &mut n {
                if *feature == a {
                    *feature = b;
                } else if *feature == b {
                    *feature = a;
                }
            }
            n
        })
        .collect();
    Tree::new(nodes).unwrap()
}

pub fn random_forest(r: &mut ChaCha8Rng, d: usize, n_trees: usize, n_classes: usize) -> Forest<f64> {
    let trees = (0..n_trees)
        .map(|_| {
            let depth = r.random_range(1..5);
            random_tree(r, d, depth, n_classes)
        })
        .collect();
    Forest::from_trees(trees, d).unwrap()
}

/// Random point in (-1.5, 1.5)^d with roughly `missing` of its cells absent.
pub fn random_point(r: &mut ChaCha8Rng, d: usize, missing: f64) -> Vec<Cell<f64>> {
    (0..d)
        .map(|_| {
            if r.random::<f64>() < missing {
                None
            } else {
                Some(r.random_range(-1.5..1.5))
            }
        })
        .collect()
}

/// Fraction of trees in which `a` and `b` land in different leaves.
pub fn reference_tree_distance(f: &Forest<f64>, a: &[Cell<f64>], b: &[Cell<f64>]) -> f64 {
    let differ = f.trees().iter().filter(|t| t.leaf_id(a) != t.leaf_id(b)).count();
    differ as f64 / f.n_trees() as f64
}

pub fn reference_distances(f: &Forest<f64>, ds: &Dataset<f64>) -> Vec<Vec<f64>> {
    let leaves: Vec<Vec<usize>> = ds
        .rows()
        .map(|x| f.trees().iter().map(|t| t.leaf_id(x)).collect())
        .collect();
    let t = f.n_trees() as f64;
    leaves
        .iter()
        .map(|a| {
            leaves
                .iter()
                .map(|b| a.iter().zip(b).filter(|(x, y)| x != y).count() as f64 / t)
                .collect()
        })
        .collect()
}

/// Sum over `instances` of the cheapest cost to any member of `set`.
fn objective(cost: &[Vec<f64>], instances: &[usize], set: &[usize]) -> f64 {
    let mut total = 0.0;
    for &i in instances {
        let mut best = f64::INFINITY;
        for &j in set {
            best = best.min(cost[i][j]);
        }
        total += best;
    }
    total
}

/// Lowest-objective candidate not already in `set`; lower index wins ties.
fn best_addition(cost: &[Vec<f64>], instances: &[usize], set: &[usize], pool: &[usize]) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for &c in pool {
        if set.contains(&c) {
            continue;
        }
        let mut trial = set.to_vec();
        trial.push(c);
        let value = objective(cost, instances, &trial);
        if best.is_none_or(|(_, v)| value < v) {
            best = Some((c, value));
        }
    }
    best
}

fn by_class(labels: &[usize]) -> BTreeMap<usize, Vec<usize>> {
    let mut m: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        m.entry(l).or_default().push(i);
    }
    m
}

pub fn reference_sma(cost: &[Vec<f64>], k: usize) -> Vec<usize> {
    let all: Vec<usize> = (0..cost.len()).collect();
    let mut set = Vec::new();
    for _ in 0..k {
        let (c, _) = best_addition(cost, &all, &set, &all).unwrap();
        set.push(c);
    }
    set
}

pub fn reference_gkm(cost: &[Vec<f64>], labels: &[usize], k_per_class: usize) -> Vec<usize> {
    let mut out = Vec::new();
    for members in by_class(labels).into_values() {
        let mut local = Vec::new();
        for _ in 0..k_per_class {
            let (c, _) = best_addition(cost, &members, &local, &members).unwrap();
            local.push(c);
        }
        out.extend(local);
    }
    out
}

pub fn reference_apete(cost: &[Vec<f64>], labels: &[usize], epsilon: f64) -> Vec<usize> {
    let all: Vec<usize> = (0..cost.len()).collect();
    let mut set = Vec::new();
    for members in by_class(labels).into_values() {
        let (c, _) = best_addition(cost, &all, &set, &members).unwrap();
        set.push(c);
    }
    while let Some((c, f_new)) = best_addition(cost, &all, &set, &all) {
        let f_prev = objective(cost, &all, &set);
        if f_prev == 0.0 || f_new >= f_prev || (f_prev - f_new) / f_prev.abs() < epsilon {
            break;
        }
        set.push(c);
    }
    set
}

/// Exhaustive single medoid: the column with the smallest total cost.
pub fn brute_force_medoid(cost: &[Vec<f64>]) -> usize {
    let all: Vec<usize> = (0..cost.len()).collect();
    let mut best = (0, f64::INFINITY);
    for j in 0..cost.len() {
        let total = objective(cost, &all, &[j]);
        if total < best.1 {
            best = (j, total);
        }
    }
    best.0
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `d + beta * <u_i, u_j>` for every ordered pair.
pub fn combined_costs(distances: &[Vec<f64>], normalized: &[Vec<f64>], beta: f64) -> Vec<Vec<f64>> {
    distances
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &d)| if beta == 0.0 { d } else { d + beta * dot(&normalized[i], &normalized[j]) })
                .collect()
        })
        .collect()
}
