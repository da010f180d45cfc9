#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use srosr::harness::SweepConfig;
use srosr_core::sparse::SolverConfig;
use srosr_core::LabeledDataset;

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture(name: &str) -> PathBuf {
    manifest_dir().join("tests/data").join(name)
}

pub fn desk_config() -> SweepConfig {
    SweepConfig::from_file(&manifest_dir().join("configs/mnist_desk.toml")).expect("desk config parses")
}

/// The desk solver settings.
pub fn solver() -> SolverConfig {
    desk_config().solver
}

/// Full fixture at desk resolution, unit-norm samples.
pub fn mnist() -> &'static LabeledDataset {
    static DATA: OnceLock<LabeledDataset> = OnceLock::new();
    DATA.get_or_init(|| desk_config().dataset.load().expect("fixture loads"))
}

/// Six digits with `train` training and `test` test samples each, drawn
/// with a fixed seed. Returns `(train, test)`.
pub fn six_class_subset(train: usize, test: usize) -> (LabeledDataset, LabeledDataset) {
    let data = mnist();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let by_class = data.class_columns();
    let mut classes: Vec<_> = by_class.keys().cloned().collect();
    classes.shuffle(&mut rng);
    let (mut tr, mut te) = (Vec::new(), Vec::new());
    for c in classes.iter().take(6) {
        let mut cols = by_class[c].clone();
        cols.shuffle(&mut rng);
        tr.extend_from_slice(&cols[..train]);
        te.extend_from_slice(&cols[train..train + test]);
    }
    (data.select(&tr), data.select(&te))
}

pub fn exists(p: &Path) -> bool {
    p.exists()
}
