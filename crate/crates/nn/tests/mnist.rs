//! Runs against the real MNIST files when they are present under
//! `PLR_DATA_ROOT` or the workspace `data/` directory; otherwise each test
//! prints a note and returns.

use std::path::PathBuf;

use plr_core::config::DatasetId;
use plr_nn::data::{dataset_available, load_dataset, Split};
use tch::Kind;

fn root() -> Option<PathBuf> {
    let candidates = [
        std::env::var_os("PLR_DATA_ROOT").map(PathBuf::from),
        Some(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")),
    ];
    candidates
        .into_iter()
        .flatten()
        .find(|r| dataset_available(r, DatasetId::Mnist, Split::Test))
}

#[test]
fn mnist_test_split_loads() {
    let Some(root) = root() else {
        eprintln!("MNIST not found; skipping");
        return;
    };
    let data = load_dataset(&root, DatasetId::Mnist, Split::Test, 1).unwrap();
    assert_eq!(data.len(), 10_000);
    assert_eq!(data.images.size(), vec![10_000, 1, 32, 32]);
    assert!(data.images.min().double_value(&[]) >= -1.0);
    assert!(data.images.max().double_value(&[]) <= 1.0);
    // MNIST digits are white strokes on a black background
    let mean = data.images.mean(Kind::Float).double_value(&[]);
    assert!(mean < -0.6, "mean {mean}");
    let mut counts = [0usize; 10];
    for &l in &data.labels {
        counts[l] += 1;
    }
    assert_eq!(counts, [980, 1135, 1032, 1010, 982, 892, 958, 1028, 974, 1009]);
    // first test digit is a 7
    assert_eq!(data.labels[0], 7);
}

#[test]
fn mnist_as_three_channels() {
    let Some(root) = root() else {
        eprintln!("MNIST not found; skipping");
        return;
    };
    let data = load_dataset(&root, DatasetId::Mnist, Split::Test, 3).unwrap();
    assert_eq!(data.images.size(), vec![10_000, 3, 32, 32]);
}
