use std::fs;

use jpltd::dataset::{
    apply_missing, load_dataset, make_synthetic, save_dataset, MissingMask, MultiViewDataset, SyntheticSpec,
    MANIFEST_FILE,
};
use jpltd::Error;
use nalgebra::DMatrix;

fn spec(classes: usize, per_class: usize, dims: &[usize]) -> SyntheticSpec {
    SyntheticSpec {
        classes,
        per_class,
        dims: dims.to_vec(),
        noise: 0.2,
    }
}

#[test]
fn save_then_load_is_bitwise_identical() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(&spec(3, 7, &[5, 4, 6]), 9).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    assert_eq!(load_dataset(dir.path()).unwrap(), ds);
}

#[test]
fn orl_shaped_dataset_loads() {
    // 40 subjects × 10 images, three feature views
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(&spec(40, 10, &[32, 24, 16]), 1).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!((back.n(), back.m(), back.c()), (400, 3, 40));
    assert_eq!(back.dims(), vec![32, 24, 16]);
    let mask = apply_missing(&back, 0.5, 4).unwrap();
    assert_eq!(mask.incomplete_count(), 200);
}

#[test]
fn row_count_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(&spec(2, 3, &[2, 2]), 0).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let path = dir.path().join("view1.csv");
    let text = fs::read_to_string(&path).unwrap();
    let truncated: String = text.lines().skip(1).map(|l| format!("{l}\n")).collect();
    fs::write(&path, truncated).unwrap();
    let err = load_dataset(dir.path()).unwrap_err();
    assert!(matches!(err, Error::Data(_)), "{err}");
    assert!(err.is_data_error());
}

#[test]
fn class_count_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(&spec(2, 3, &[2, 2]), 0).unwrap();
    save_dataset(&ds, dir.path()).unwrap();
    let path = dir.path().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).unwrap().replace("\"c\": 2", "\"c\": 3");
    fs::write(&path, text).unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Data(_))));
}

#[test]
fn missing_directory_is_an_io_error() {
    let err = load_dataset("/nonexistent/jpltd-data").unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
}

#[test]
fn mask_csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let ds = make_synthetic(&spec(3, 10, &[3, 3, 3]), 2).unwrap();
    let mask = apply_missing(&ds, 0.3, 8).unwrap();
    let path = dir.path().join("mask.csv");
    mask.save_csv(&path).unwrap();
    assert_eq!(MissingMask::load_csv(&path).unwrap(), mask);
}

#[test]
fn dataset_constructor_validates_shapes() {
    let views = vec![DMatrix::zeros(2, 4), DMatrix::zeros(3, 5)];
    assert!(MultiViewDataset::new("bad", views, vec![0, 1, 0, 1]).is_err());
}
