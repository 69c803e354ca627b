//! Tabular datasets with explicit missing cells.
//!
//! Cells are `Option<T>`: `None` is the missing marker, `Some(v)` always holds a
//! finite value. Categorical columns are ordinally encoded in order of first
//! appearance and their levels are kept so the data can be written back.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Scalar;

/// One feature cell; `None` marks a missing value.
pub type Cell<T> = Option<T>;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Matrix<Cell<T>>,
    labels: Vec<usize>,
    feature_names: Vec<String>,
    class_names: Vec<String>,
    label_name: String,
    /// Per column: `Some(levels)` for ordinally encoded categorical columns.
    categories: Vec<Option<Vec<String>>>,
}

impl<T: Scalar> Dataset<T> {
    /// Builds a dataset from numeric rows, validating every invariant.
    pub fn new(
        rows: Vec<Vec<Cell<T>>>,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        let d = feature_names.len();
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidDataset(format!(
                "every row must have {d} cells"
            )));
        }
        let features = Matrix::from_rows(rows)
            .ok_or_else(|| Error::InvalidDataset("ragged feature rows".into()))?;
        let features = if features.rows() == 0 {
            Matrix::from_vec(0, d, Vec::new()).expect("empty matrix")
        } else {
            features
        };
        let ds = Dataset {
            features,
            labels,
            feature_names,
            class_names,
            label_name: "label".into(),
            categories: vec![None; d],
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Convenience constructor for fully observed data with generated names.
    pub fn from_dense(rows: &[Vec<T>], labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        let cells = rows
            .iter()
            .map(|r| r.iter().copied().map(Some).collect())
            .collect();
        Self::new(
            cells,
            labels,
            (0..d).map(|j| format!("x{j}")).collect(),
            (0..n_classes).map(|c| format!("class{c}")).collect(),
        )
    }

    pub fn with_label_name(mut self, name: impl Into<String>) -> Self {
        self.label_name = name.into();
        self
    }

    fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no rows".into()));
        }
        if self.feature_names.is_empty() {
            return Err(Error::InvalidDataset("dataset has no feature columns".into()));
        }
        if self.class_names.is_empty() {
            return Err(Error::InvalidDataset("dataset has no classes".into()));
        }
        if self.labels.len() != n {
            return Err(Error::InvalidDataset(format!(
                "{} labels for {n} rows",
                self.labels.len()
            )));
        }
        let c = self.class_names.len();
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= c) {
            return Err(Error::InvalidClass {
                class: bad,
                n_classes: c,
            });
        }
        let mut seen = HashMap::new();
        for (j, name) in self.feature_names.iter().enumerate() {
            if let Some(prev) = seen.insert(name.as_str(), j) {
                return Err(Error::InvalidDataset(format!(
                    "duplicate feature name `{name}` (columns {prev} and {j})"
                )));
            }
        }
        if let Some(pos) = self
            .features
            .as_slice()
            .iter()
            .position(|c| matches!(c, Some(v) if !v.is_finite()))
        {
            return Err(Error::NonFinite(pos));
        }
        Ok(())
    }

    pub fn n_rows(&self) -> usize {
        self.features.rows()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn row(&self, i: usize) -> &[Cell<T>] {
        self.features.row(i)
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[Cell<T>]> + '_ {
        self.features.iter_rows()
    }

    pub fn features(&self) -> &Matrix<Cell<T>> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn label_name(&self) -> &str {
        &self.label_name
    }

    /// Levels of an ordinally encoded column, `None` for numeric columns.
    pub fn categories(&self, column: usize) -> Option<&[String]> {
        self.categories[column].as_deref()
    }

    pub fn is_categorical(&self, column: usize) -> bool {
        self.categories[column].is_some()
    }

    /// Dataset restricted to `indices`, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let n = self.n_rows();
        let mut cells = Vec::with_capacity(indices.len() * self.n_features());
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= n {
                return Err(Error::IndexOutOfRange { index: i, len: n });
            }
            cells.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        let ds = Dataset {
            features: Matrix::from_vec(indices.len(), self.n_features(), cells)
                .expect("subset shape"),
            labels,
            feature_names: self.feature_names.clone(),
            class_names: self.class_names.clone(),
            label_name: self.label_name.clone(),
            categories: self.categories.clone(),
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Reads a CSV file with a header row.
    ///
    /// Cells equal to `missing_token` (after trimming) or empty become missing.
    /// A column whose observed tokens are all numeric is numeric; one whose
    /// tokens are all non-numeric is ordinally encoded. Anything else is a
    /// schema error naming the first offending row.
    pub fn load_csv(path: impl AsRef<Path>, label_column: &str, missing_token: &str) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(file);
        let header: Vec<String> = reader
            .headers()
            .map_err(csv_err)?
            .iter()
            .map(str::to_owned)
            .collect();
        let label_idx = header
            .iter()
            .position(|h| h == label_column)
            .ok_or_else(|| Error::MissingLabelColumn(label_column.to_owned()))?;

        let mut raw: Vec<Vec<String>> = Vec::new();
        for record in reader.records() {
            let record = record.map_err(csv_err)?;
            raw.push(record.iter().map(str::to_owned).collect());
        }
        if raw.is_empty() {
            return Err(Error::InvalidDataset(format!(
                "{} has a header but no data rows",
                path.display()
            )));
        }

        let missing_token = missing_token.trim();
        let is_missing = |tok: &str| tok.is_empty() || tok == missing_token;

        let mut class_index: HashMap<String, usize> = HashMap::new();
        let mut class_names = Vec::new();
        let mut labels = Vec::with_capacity(raw.len());
        for (r, row) in raw.iter().enumerate() {
            let tok = row[label_idx].as_str();
            if is_missing(tok) {
                return Err(Error::Schema {
                    column: label_column.to_owned(),
                    row: r + 1,
                    message: "label is missing".into(),
                });
            }
            let next = class_names.len();
            let idx = *class_index.entry(tok.to_owned()).or_insert_with(|| {
                class_names.push(tok.to_owned());
                next
            });
            labels.push(idx);
        }

        let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != label_idx).collect();
        let n = raw.len();
        let d = feature_cols.len();
        let mut cells: Vec<Cell<T>> = vec![None; n * d];
        let mut categories = Vec::with_capacity(d);
        for (out_j, &j) in feature_cols.iter().enumerate() {
            let name = &header[j];
            let mut numeric: Option<bool> = None;
            let mut levels: Vec<String> = Vec::new();
            let mut level_index: HashMap<&str, usize> = HashMap::new();
            for (r, row) in raw.iter().enumerate() {
                let tok = row[j].as_str();
                if is_missing(tok) {
                    continue;
                }
                let parsed = tok.parse::<T>().ok();
                let this_numeric = parsed.is_some();
                match numeric {
                    None => numeric = Some(this_numeric),
                    Some(kind) if kind != this_numeric => {
                        return Err(Error::Schema {
                            column: name.clone(),
                            row: r + 1,
                            message: format!(
                                "token `{tok}` is {} but the column is {}",
                                if this_numeric { "numeric" } else { "non-numeric" },
                                if kind { "numeric" } else { "non-numeric" }
                            ),
                        });
                    }
                    Some(_) => {}
                }
                let value = match parsed {
                    Some(v) if !v.is_finite() => {
                        return Err(Error::Schema {
                            column: name.clone(),
                            row: r + 1,
                            message: format!("token `{tok}` is not a finite number"),
                        });
                    }
                    Some(v) => v,
                    None => {
                        let next = levels.len();
                        let code = *level_index.entry(tok).or_insert_with(|| {
                            levels.push(tok.to_owned());
                            next
                        });
                        T::from_count(code)
                    }
                };
                cells[r * d + out_j] = Some(value);
            }
            categories.push((numeric == Some(false)).then_some(levels));
        }

        let ds = Dataset {
            features: Matrix::from_vec(n, d, cells).expect("csv shape"),
            labels,
            feature_names: feature_cols.iter().map(|&j| header[j].clone()).collect(),
            class_names,
            label_name: label_column.to_owned(),
            categories,
        };
        ds.validate()?;
        Ok(ds)
    }

    /// Writes features followed by the label column; missing cells are written as `missing_token`.
    pub fn write_csv(&self, path: impl AsRef<Path>, missing_token: &str) -> Result<()> {
        let path = path.as_ref();
        let csv_err = |e: csv::Error| Error::Csv {
            path: path.to_path_buf(),
            message: e.to_string(),
        };
        let mut writer = csv::Writer::from_path(path).map_err(csv_err)?;
        let mut header: Vec<&str> = self.feature_names.iter().map(String::as_str).collect();
        header.push(&self.label_name);
        writer.write_record(&header).map_err(csv_err)?;
        for (i, row) in self.rows().enumerate() {
            let mut record: Vec<String> = row
                .iter()
                .enumerate()
                .map(|(j, cell)| match (cell, &self.categories[j]) {
                    (None, _) => missing_token.to_owned(),
                    (Some(v), Some(levels)) => levels[v.to_usize().expect("category code")].clone(),
                    (Some(v), None) => v.to_string(),
                })
                .collect();
            record.push(self.class_names[self.labels[i]].clone());
            writer.write_record(&record).map_err(csv_err)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }
}

/// Row indices of a stratified train/test partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Stratified partition of `labels`; each class contributes `round(test_fraction * n_c)`
/// rows to the test part and must keep at least one row on each side.
pub fn stratified_split_indices(
    labels: &[usize],
    class_names: &[String],
    test_fraction: f64,
    seed: u64,
) -> Result<SplitIndices> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::Split(format!(
            "test fraction {test_fraction} must lie strictly between 0 and 1"
        )));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        by_class.entry(l).or_default().push(i);
    }
    let class_name = |c: usize| class_names.get(c).cloned().unwrap_or_else(|| c.to_string());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (&class, members) in &by_class {
        let n_c = members.len();
        if n_c < 2 {
            return Err(Error::Split(format!(
                "class `{}` has {n_c} member(s); at least 2 are needed to stratify",
                class_name(class)
            )));
        }
        let n_test = (test_fraction * n_c as f64).round() as usize;
        if n_test == 0 || n_test == n_c {
            return Err(Error::Split(format!(
                "test fraction {test_fraction} leaves class `{}` ({n_c} members) absent from the {} part",
                class_name(class),
                if n_test == 0 { "test" } else { "train" }
            )));
        }
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng);
        test.extend_from_slice(&shuffled[..n_test]);
        train.extend_from_slice(&shuffled[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(SplitIndices { train, test })
}

/// Stratified, seeded split into `(train, test)`; rows keep their original relative order.
pub fn split<T: Scalar>(ds: &Dataset<T>, test_fraction: f64, seed: u64) -> Result<(Dataset<T>, Dataset<T>)> {
    let idx = stratified_split_indices(ds.labels(), ds.class_names(), test_fraction, seed)?;
    Ok((ds.subset(&idx.train)?, ds.subset(&idx.test)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    #[test]
    fn loads_numeric_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,2,0\n3,4.5,1\n-1,0,0\n");
        let ds: Dataset<f64> = Dataset::load_csv(&p, "y", "").unwrap();
        assert_eq!(ds.n_rows(), 3);
        assert_eq!(ds.n_features(), 2);
        assert_eq!(ds.feature_names(), ["a", "b"]);
        assert_eq!(ds.row(1), [Some(3.0), Some(4.5)]);
        assert!(!ds.is_categorical(0));
    }

    #[test]
    fn empty_cell_is_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,,0\n3,4,1\n5,6,0\n");
        let ds: Dataset<f64> = Dataset::load_csv(&p, "y", "").unwrap();
        assert_eq!(ds.row(0)[1], None);
        let observed = ds.features().as_slice().iter().filter(|c| c.is_some()).count();
        assert_eq!(observed, 5);
    }

    #[test]
    fn custom_missing_token() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,y\nNA,x\n2,z\n");
        let ds: Dataset<f32> = Dataset::load_csv(&p, "y", "NA").unwrap();
        assert_eq!(ds.row(0), [None]);
        assert_eq!(ds.row(1), [Some(2.0)]);
    }

    #[test]
    fn labels_encoded_by_first_appearance() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "x,label\n1,yes\n2,no\n3,yes\n");
        let ds: Dataset<f64> = Dataset::load_csv(&p, "label", "").unwrap();
        assert_eq!(ds.class_names(), ["yes", "no"]);
        assert_eq!(ds.labels(), [0, 1, 0]);
    }

    #[test]
    fn categorical_feature_is_ordinal() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "color,y\nred,a\nblue,b\nred,a\n,b\n");
        let ds: Dataset<f64> = Dataset::load_csv(&p, "y", "").unwrap();
        assert_eq!(ds.categories(0).unwrap(), ["red", "blue"]);
        let col: Vec<_> = ds.rows().map(|r| r[0]).collect();
        assert_eq!(col, [Some(0.0), Some(1.0), Some(0.0), None]);
    }

    #[test]
    fn mixed_column_names_column_and_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b,y\n1,2,0\n3,oops,1\n");
        let err = Dataset::<f64>::load_csv(&p, "y", "").unwrap_err();
        match err {
            Error::Schema { column, row, .. } => {
                assert_eq!(column, "b");
                assert_eq!(row, 2);
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn missing_label_column_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "a,b\n1,2\n");
        assert!(matches!(
            Dataset::<f64>::load_csv(&p, "y", ""),
            Err(Error::MissingLabelColumn(_))
        ));
        assert!(matches!(
            Dataset::<f64>::load_csv(dir.path().join("nope.csv"), "y", ""),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn quoted_fields_are_supported() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "a.csv", "\"size, cm\",y\n\"1.5\",\"a, b\"\n2,c\n");
        let ds: Dataset<f64> = Dataset::load_csv(&p, "y", "").unwrap();
        assert_eq!(ds.feature_names(), ["size, cm"]);
        assert_eq!(ds.class_names(), ["a, b", "c"]);
    }

    fn balanced(n: usize) -> Dataset<f64> {
        let rows: Vec<Vec<f64>> = (0..n).map(|i| vec![i as f64]).collect();
        let labels = (0..n).map(|i| i % 2).collect();
        Dataset::from_dense(&rows, labels, 2).unwrap()
    }

    #[test]
    fn split_is_stratified() {
        let ds = balanced(10);
        let (train, test) = split(&ds, 0.2, 7).unwrap();
        assert_eq!(train.n_rows(), 8);
        assert_eq!(test.n_rows(), 2);
        let mut test_labels = test.labels().to_vec();
        test_labels.sort();
        assert_eq!(test_labels, [0, 1]);
    }

    #[test]
    fn split_is_deterministic_and_a_partition() {
        let ds = balanced(30);
        let a = stratified_split_indices(ds.labels(), ds.class_names(), 0.3, 7).unwrap();
        let b = stratified_split_indices(ds.labels(), ds.class_names(), 0.3, 7).unwrap();
        assert_eq!(a, b);
        let mut all: Vec<usize> = a.train.iter().chain(&a.test).copied().collect();
        all.sort();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_degenerate_fractions() {
        let ds = balanced(10);
        assert!(matches!(split(&ds, 0.99, 7), Err(Error::Split(_))));
        assert!(matches!(split(&ds, 0.0, 7), Err(Error::Split(_))));
        assert!(matches!(split(&ds, 1.0, 7), Err(Error::Split(_))));
    }

    #[test]
    fn split_rejects_singleton_class() {
        let rows: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64]).collect();
        let ds = Dataset::from_dense(&rows, vec![0, 0, 0, 0, 1], 2).unwrap();
        let err = split(&ds, 0.4, 1).unwrap_err().to_string();
        assert!(err.contains("class1"), "{err}");
    }

    #[test]
    fn constructor_rejects_bad_inputs() {
        let bad_label = Dataset::<f64>::from_dense(&[vec![1.0]], vec![3], 2);
        assert!(matches!(bad_label, Err(Error::InvalidClass { .. })));
        let nan = Dataset::<f64>::from_dense(&[vec![f64::NAN]], vec![0], 1);
        assert!(matches!(nan, Err(Error::NonFinite(0))));
        let dup = Dataset::<f64>::new(
            vec![vec![Some(1.0), Some(2.0)]],
            vec![0],
            vec!["a".into(), "a".into()],
            vec!["c".into()],
        );
        assert!(dup.is_err());
    }
}
