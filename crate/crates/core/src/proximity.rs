//! Tree-space distance: the fraction of trees in which two instances land in different leaves.

use std::path::Path;

use rayon::prelude::*;

use crate::attribution::write_headerless;
use crate::dataset::{Cell, Dataset};
use crate::error::{Error, Result};
use crate::forest::Forest;
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Instance count above which distances are computed on demand instead of materialized.
pub const DEFAULT_MATERIALIZE_CAP: usize = 5000;

/// Source of pairwise dissimilarities over `len()` instances.
pub trait Dissimilarity<T>: Sync {
    fn len(&self) -> usize;

    fn distance(&self, i: usize, j: usize) -> T;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Leaf vectors of a set of instances, one row of `n_trees` leaf ids per instance.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LeafProfiles {
    ids: Matrix<usize>,
}

impl LeafProfiles {
    pub fn compute<T: Scalar>(f: &Forest<T>, ds: &Dataset<T>) -> Result<Self> {
        let rows: Vec<Vec<usize>> = (0..ds.n_rows())
            .into_par_iter()
            .map(|i| f.leaf_ids(ds.row(i)))
            .collect::<Result<_>>()?;
        let ids = Matrix::from_rows(rows)
            .filter(|m| m.rows() > 0)
            .unwrap_or_else(|| Matrix::from_vec(0, f.n_trees(), Vec::new()).expect("empty"));
        Ok(LeafProfiles { ids })
    }

    pub fn profile(&self, i: usize) -> &[usize] {
        self.ids.row(i)
    }

    pub fn n_instances(&self) -> usize {
        self.ids.rows()
    }

    pub fn n_trees(&self) -> usize {
        self.ids.cols()
    }
}

impl<T: Scalar> Dissimilarity<T> for LeafProfiles {
    fn len(&self) -> usize {
        self.ids.rows()
    }

    fn distance(&self, i: usize, j: usize) -> T {
        leaf_disagreement(self.profile(i), self.profile(j))
    }
}

/// Fraction of positions where the two leaf vectors differ.
pub fn leaf_disagreement<T: Scalar>(a: &[usize], b: &[usize]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let differing = a.iter().zip(b).filter(|(x, y)| x != y).count();
    T::from_count(differing) / T::from_count(a.len())
}

pub fn tree_distance<T: Scalar>(f: &Forest<T>, a: &[Cell<T>], b: &[Cell<T>]) -> Result<T> {
    let la = f.leaf_ids(a)?;
    let lb = f.leaf_ids(b)?;
    Ok(leaf_disagreement(&la, &lb))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix<T> {
    values: Matrix<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn from_profiles(profiles: &LeafProfiles) -> Self {
        let n = profiles.n_instances();
        let mut values = Matrix::filled(n, n, T::zero());
        let rows: Vec<Vec<T>> = (0..n)
            .into_par_iter()
            .map(|i| {
                (0..n)
                    .map(|j| leaf_disagreement(profiles.profile(i), profiles.profile(j)))
                    .collect()
            })
            .collect();
        for (i, row) in rows.iter().enumerate() {
            values.row_mut(i).copy_from_slice(row);
        }
        DistanceMatrix { values }
    }

    pub fn instance_count(&self) -> usize {
        self.values.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        *self.values.get(i, j)
    }

    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }

    pub fn export(&self, path: impl AsRef<Path>) -> Result<()> {
        write_headerless(path.as_ref(), &self.values)
    }
}

impl<T: Scalar> Dissimilarity<T> for DistanceMatrix<T> {
    fn len(&self) -> usize {
        self.values.rows()
    }

    fn distance(&self, i: usize, j: usize) -> T {
        self.get(i, j)
    }
}

pub fn distance_matrix<T: Scalar>(f: &Forest<T>, ds: &Dataset<T>) -> Result<DistanceMatrix<T>> {
    Ok(DistanceMatrix::from_profiles(&LeafProfiles::compute(f, ds)?))
}

/// Pairwise tree distances, materialized when the instance count is within the cap.
#[derive(Debug, Clone)]
pub enum TreeDistances<T> {
    Dense(DistanceMatrix<T>),
    OnDemand(LeafProfiles),
}

impl<T: Scalar> TreeDistances<T> {
    pub fn build(f: &Forest<T>, ds: &Dataset<T>, cap: usize) -> Result<Self> {
        let profiles = LeafProfiles::compute(f, ds)?;
        Ok(if profiles.n_instances() <= cap {
            TreeDistances::Dense(DistanceMatrix::from_profiles(&profiles))
        } else {
            TreeDistances::OnDemand(profiles)
        })
    }

    pub fn as_dense(&self) -> Option<&DistanceMatrix<T>> {
        match self {
            TreeDistances::Dense(m) => Some(m),
            TreeDistances::OnDemand(_) => None,
        }
    }
}

impl<T: Scalar> Dissimilarity<T> for TreeDistances<T> {
    fn len(&self) -> usize {
        match self {
            TreeDistances::Dense(m) => Dissimilarity::<T>::len(m),
            TreeDistances::OnDemand(p) => Dissimilarity::<T>::len(p),
        }
    }

    fn distance(&self, i: usize, j: usize) -> T {
        match self {
            TreeDistances::Dense(m) => m.get(i, j),
            TreeDistances::OnDemand(p) => p.distance(i, j),
        }
    }
}

pub(crate) fn check_index(index: usize, len: usize) -> Result<()> {
    if index < len {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index, len })
    }
}
