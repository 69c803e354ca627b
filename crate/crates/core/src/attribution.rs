//! Per-instance feature attributions and their squared-share normalization.
//!
//! Three providers fill an [`AttributionMatrix`]: tree-path contributions (the
//! default), exact interventional Shapley values by coalition enumeration, and
//! headerless CSV import.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{Cell, Dataset};
use crate::error::{check_len, Error, Result};
use crate::forest::{Forest, Node};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// Largest feature count accepted by [`exact_shapley`].
pub const MAX_EXACT_FEATURES: usize = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provider {
    Path,
    ExactShapley,
    Imported,
}

impl Provider {
    pub fn as_str(self) -> &'static str {
        match self {
            Provider::Path => "path",
            Provider::ExactShapley => "exact-shapley",
            Provider::Imported => "imported",
        }
    }
}

impl std::str::FromStr for Provider {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(Provider::Path),
            "exact-shapley" | "shapley" => Ok(Provider::ExactShapley),
            "imported" => Ok(Provider::Imported),
            other => Err(Error::InvalidParameter(format!(
                "unknown attribution provider `{other}`"
            ))),
        }
    }
}

/// Which class probability the attributions explain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetClass {
    /// The model's predicted class for each instance.
    #[default]
    Predicted,
    Fixed(usize),
}

/// Squared-share normalization: `phi_l^2 / sum_k phi_k^2`, uniform when `phi` is all zeros.
pub fn normalize<T: Scalar>(phi: &[T]) -> Result<Vec<T>> {
    if let Some(pos) = phi.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(pos));
    }
    let d = phi.len();
    if d == 0 {
        return Ok(Vec::new());
    }
    let scale = phi.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let uniform = || vec![T::one() / T::from_count(d); d];
    if scale == T::zero() {
        return Ok(uniform());
    }
    // rescaling first keeps tiny or huge scores from under/overflowing when squared
    let squared: Vec<T> = phi
        .iter()
        .map(|v| {
            let s = *v / scale;
            s * s
        })
        .collect();
    let total: T = squared.iter().copied().sum();
    Ok(squared.into_iter().map(|s| s / total).collect())
}

fn check_target<T: Scalar>(f: &Forest<T>, target: usize) -> Result<()> {
    if target < f.n_classes() {
        Ok(())
    } else {
        Err(Error::InvalidClass {
            class: target,
            n_classes: f.n_classes(),
        })
    }
}

/// Tree-path decomposition of the target-class probability.
///
/// Every traversed split credits its feature with the change in the target
/// probability between parent and child; credits are averaged over trees so the
/// vector sums to the forest prediction minus the mean root prior.
pub fn path_contributions<T: Scalar>(f: &Forest<T>, x: &[Cell<T>], target: usize) -> Result<Vec<T>> {
    check_len(f.n_features(), x.len())?;
    check_target(f, target)?;
    let mut phi = vec![T::zero(); f.n_features()];
    for tree in f.trees() {
        let nodes = tree.nodes();
        let path = tree.path(x);
        for pair in path.windows(2) {
            let (parent, child) = (&nodes[pair[0]], &nodes[pair[1]]);
            if let Node::Split { feature, .. } = parent {
                phi[*feature] += child.distribution()[target] - parent.distribution()[target];
            }
        }
    }
    let t = T::from_count(f.n_trees());
    phi.iter_mut().for_each(|v| *v /= t);
    Ok(phi)
}

/// Mean target probability over `background` rows after overwriting the
/// features in `coalition` (bit mask) with the values of `x`.
pub fn coalition_value<T: Scalar>(
    f: &Forest<T>,
    x: &[Cell<T>],
    background: &Dataset<T>,
    coalition: u64,
    target: usize,
) -> Result<T> {
    let mut hybrid: Vec<Cell<T>> = vec![None; x.len()];
    let mut total = T::zero();
    for b in background.rows() {
        for (l, slot) in hybrid.iter_mut().enumerate() {
            *slot = if coalition >> l & 1 == 1 { x[l] } else { b[l] };
        }
        total += f.predict(&hybrid)?.probabilities[target];
    }
    Ok(total / T::from_count(background.n_rows()))
}

/// Interventional Shapley values by enumerating all `2^d` coalitions.
///
/// Off-coalition features take the background row's value, missing markers included.
pub fn exact_shapley<T: Scalar>(
    f: &Forest<T>,
    x: &[Cell<T>],
    background: &Dataset<T>,
    target: usize,
) -> Result<Vec<T>> {
    let d = f.n_features();
    check_len(d, x.len())?;
    check_target(f, target)?;
    if d > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            d,
            max: MAX_EXACT_FEATURES,
        });
    }
    if background.n_rows() == 0 {
        return Err(Error::EmptyBackground);
    }
    check_len(d, background.n_features())?;

    let n_coalitions = 1u64 << d;
    let values: Vec<T> = (0..n_coalitions)
        .into_par_iter()
        .map(|s| coalition_value(f, x, background, s, target))
        .collect::<Result<_>>()?;

    let mut factorial = vec![1.0f64; d + 1];
    for k in 1..=d {
        factorial[k] = factorial[k - 1] * k as f64;
    }
    // kernel[s] = s! (d - s - 1)! / d!
    let kernel: Vec<T> = (0..d)
        .map(|s| T::lit(factorial[s] * factorial[d - s - 1] / factorial[d]))
        .collect();

    let mut phi = vec![T::zero(); d];
    for (l, out) in phi.iter_mut().enumerate() {
        let bit = 1u64 << l;
        let mut acc = T::zero();
        for s in (0..n_coalitions).filter(|s| s & bit == 0) {
            let size = s.count_ones() as usize;
            acc += kernel[size] * (values[(s | bit) as usize] - values[s as usize]);
        }
        *out = acc;
    }
    Ok(phi)
}

/// How to compute attributions for a dataset.
#[derive(Debug, Clone, Copy)]
pub enum Attributor<'a, T> {
    Path,
    ExactShapley { background: &'a Dataset<T> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionMatrix<T> {
    raw: Matrix<T>,
    normalized: Matrix<T>,
    provider: Provider,
    /// Explained class per row; absent for imported scores.
    targets: Option<Vec<usize>>,
}

impl<T: Scalar> AttributionMatrix<T> {
    pub fn from_raw(raw: Matrix<T>, provider: Provider, targets: Option<Vec<usize>>) -> Result<Self> {
        if let Some(t) = &targets {
            check_len(raw.rows(), t.len())?;
        }
        let mut normalized = Matrix::filled(raw.rows(), raw.cols(), T::zero());
        for i in 0..raw.rows() {
            let row = normalize(raw.row(i)).map_err(|e| match e {
                Error::NonFinite(col) => Error::NonFinite(i * raw.cols() + col),
                e => e,
            })?;
            normalized.row_mut(i).copy_from_slice(&row);
        }
        Ok(AttributionMatrix {
            raw,
            normalized,
            provider,
            targets,
        })
    }

    /// Attributions for every row of `ds`, computed in parallel.
    pub fn compute(f: &Forest<T>, ds: &Dataset<T>, method: Attributor<'_, T>, target: TargetClass) -> Result<Self> {
        check_len(f.n_features(), ds.n_features())?;
        let rows: Vec<(usize, Vec<T>)> = (0..ds.n_rows())
            .into_par_iter()
            .map(|i| {
                let x = ds.row(i);
                let class = match target {
                    TargetClass::Predicted => f.predict(x)?.label,
                    TargetClass::Fixed(c) => c,
                };
                let phi = match method {
                    Attributor::Path => path_contributions(f, x, class)?,
                    Attributor::ExactShapley { background } => exact_shapley(f, x, background, class)?,
                };
                Ok((class, phi))
            })
            .collect::<Result<_>>()?;
        let provider = match method {
            Attributor::Path => Provider::Path,
            Attributor::ExactShapley { .. } => Provider::ExactShapley,
        };
        let (targets, raw): (Vec<usize>, Vec<Vec<T>>) = rows.into_iter().unzip();
        let raw = Matrix::from_rows(raw).expect("rectangular attributions");
        let raw = if raw.rows() == 0 {
            Matrix::from_vec(0, f.n_features(), Vec::new()).expect("empty")
        } else {
            raw
        };
        Self::from_raw(raw, provider, Some(targets))
    }

    pub fn raw(&self) -> &Matrix<T> {
        &self.raw
    }

    pub fn normalized(&self) -> &Matrix<T> {
        &self.normalized
    }

    pub fn normalized_row(&self, i: usize) -> Result<&[T]> {
        if i < self.normalized.rows() {
            Ok(self.normalized.row(i))
        } else {
            Err(Error::IndexOutOfRange {
                index: i,
                len: self.normalized.rows(),
            })
        }
    }

    pub fn provider(&self) -> Provider {
        self.provider
    }

    pub fn targets(&self) -> Option<&[usize]> {
        self.targets.as_deref()
    }

    pub fn n_rows(&self) -> usize {
        self.raw.rows()
    }

    pub fn n_features(&self) -> usize {
        self.raw.cols()
    }

    /// Writes raw and normalized scores as headerless CSV files.
    pub fn export(&self, raw_path: impl AsRef<Path>, normalized_path: impl AsRef<Path>) -> Result<()> {
        write_headerless(raw_path.as_ref(), &self.raw)?;
        write_headerless(normalized_path.as_ref(), &self.normalized)
    }
}

pub(crate) fn write_headerless<T: Scalar>(path: &Path, m: &Matrix<T>) -> Result<()> {
    let mut out = String::new();
    for row in m.iter_rows() {
        let line: Vec<String> = row.iter().map(T::to_string).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Loads externally computed attributions (headerless CSV, one row per instance).
pub fn import_attributions<T: Scalar>(
    path: impl AsRef<Path>,
    expected_n: usize,
    expected_d: usize,
) -> Result<AttributionMatrix<T>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<T>> = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, tok)| {
                tok.parse::<T>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Schema {
                        column: format!("column {}", c + 1),
                        row: r + 1,
                        message: format!("`{tok}` is not a finite number"),
                    })
            })
            .collect::<Result<Vec<T>>>()?;
        rows.push(row);
    }
    let cols = rows.first().map_or(0, Vec::len);
    if rows.len() != expected_n || rows.iter().any(|r| r.len() != expected_d) {
        let found_cols = rows
            .iter()
            .map(Vec::len)
            .find(|&l| l != expected_d)
            .unwrap_or(cols);
        return Err(Error::ShapeMismatch {
            expected_rows: expected_n,
            expected_cols: expected_d,
            rows: rows.len(),
            cols: found_cols,
        });
    }
    let raw = if rows.is_empty() {
        Matrix::from_vec(0, expected_d, Vec::new()).expect("empty")
    } else {
        Matrix::from_rows(rows).expect("validated shape")
    };
    AttributionMatrix::from_raw(raw, Provider::Imported, None)
}
