mod common;

use alike::dataset::{split, stratified_split_indices, Dataset};
use proptest::prelude::*;

fn fixture() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/sample.csv")
}

#[test]
fn loads_fixture_with_categories_and_gaps() {
    let ds: Dataset<f64> = Dataset::load_csv(fixture(), "species", "").unwrap();
    assert_eq!(ds.n_rows(), 60);
    assert_eq!(ds.feature_names(), ["length", "width", "height", "color"]);
    assert_eq!(ds.class_names(), ["setosa", "versicolor", "virginica"]);
    assert!(ds.is_categorical(3));
    assert!(!ds.is_categorical(0));
    assert_eq!(ds.categories(3).unwrap().len(), 3);
    let missing_width = ds.rows().filter(|r| r[1].is_none()).count();
    assert_eq!(missing_width, (0..60).filter(|i| i % 11 == 5).count());
    assert!(ds.rows().any(|r| r[3].is_none()));
}

#[test]
fn missing_label_column_is_reported() {
    let err = Dataset::<f64>::load_csv(fixture(), "kind", "").unwrap_err();
    assert!(err.to_string().contains("kind"), "{err}");
}

#[test]
fn fixture_split_is_stratified() {
    let ds: Dataset<f64> = Dataset::load_csv(fixture(), "species", "").unwrap();
    let (train, test) = split(&ds, 0.25, 11).unwrap();
    assert_eq!(train.n_rows() + test.n_rows(), 60);
    for c in 0..3 {
        assert_eq!(test.labels().iter().filter(|&&l| l == c).count(), 5);
    }
}

#[test]
fn csv_write_then_load_is_lossless() {
    let ds: Dataset<f64> = Dataset::load_csv(fixture(), "species", "").unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("copy.csv");
    ds.write_csv(&path, "NA").unwrap();
    let back: Dataset<f64> = Dataset::load_csv(&path, "species", "NA").unwrap();
    assert_eq!(back, ds);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn numeric_csv_round_trip(
        rows in prop::collection::vec(prop::collection::vec(prop::option::weighted(0.9, -1e6f64..1e6), 3), 2..30),
        seed in any::<u64>(),
    ) {
        let labels: Vec<usize> = (0..rows.len()).map(|i| (i + seed as usize) % 2).collect();
        let names = vec!["a".to_string(), "b".to_string(), "c".to_string()];
        let ds = Dataset::new(rows, labels, names, vec!["no".into(), "yes".into()]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.csv");
        ds.write_csv(&path, "").unwrap();
        let back: Dataset<f64> = Dataset::load_csv(&path, "label", "").unwrap();
        prop_assert_eq!(back.features(), ds.features());
        for (a, b) in back.labels().iter().zip(ds.labels()) {
            prop_assert_eq!(&back.class_names()[*a], &ds.class_names()[*b]);
        }
    }

    #[test]
    fn split_keeps_every_row_once(n_per_class in 2usize..20, frac in 0.2f64..0.8, seed in any::<u64>()) {
        let labels: Vec<usize> = (0..3 * n_per_class).map(|i| i % 3).collect();
        let names = vec!["a".to_string(), "b".into(), "c".into()];
        match stratified_split_indices(&labels, &names, frac, seed) {
            Ok(s) => {
                let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
                let expect = (frac * n_per_class as f64).round() as usize;
                for c in 0..3 {
                    prop_assert_eq!(s.test.iter().filter(|&&i| labels[i] == c).count(), expect);
                }
            }
            Err(_) => {
                let n_test = (frac * n_per_class as f64).round() as usize;
                prop_assert!(n_test == 0 || n_test == n_per_class);
            }
        }
    }
}
