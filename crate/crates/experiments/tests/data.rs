use std::fs;
use std::path::{Path, PathBuf};

use efkd_core::distill::train_teacher;
use efkd_core::nn;
use efkd_experiments::config::ModelConfig;
use efkd_experiments::data::{blob_split, load_mnist_dir, load_mnist_idx, IMAGE_MAGIC, LABEL_MAGIC};
use efkd_experiments::ExperimentConfig;
use efkd_experiments::ExperimentKind;

fn mnist_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist")
}

fn header(words: &[u32]) -> Vec<u8> {
    words.iter().flat_map(|w| w.to_be_bytes()).collect()
}

#[test]
fn one_image_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("images");
    let lab = dir.path().join("labels");
    let mut bytes = header(&[IMAGE_MAGIC, 1, 28, 28]);
    bytes.extend([255u8; 28 * 28]);
    fs::write(&img, bytes).unwrap();
    let mut bytes = header(&[LABEL_MAGIC, 1]);
    bytes.push(7);
    fs::write(&lab, bytes).unwrap();

    let d = load_mnist_idx(&img, &lab).unwrap();
    assert_eq!(d.inputs().shape(), (1, 784));
    assert!(d.inputs().row(0).iter().all(|&v| v == 1.0));
    assert_eq!(d.labels(), &[7]);

    let mut bytes = header(&[IMAGE_MAGIC, 1]);
    bytes.push(7);
    fs::write(&lab, bytes).unwrap();
    let err = load_mnist_idx(&img, &lab).unwrap_err();
    assert!(err.to_string().contains("magic"));
}

#[test]
fn bundled_mnist_subset_loads() {
    let split = load_mnist_dir(&mnist_dir(), 0, 0).unwrap();
    assert_eq!(split.train.len(), 8000);
    assert_eq!(split.test.len(), 2000);
    assert_eq!(split.train.feature_dim(), 28 * 28);
    assert_eq!(split.train.classes(), 10);
    let mut seen = [false; 10];
    for &y in split.train.labels() {
        seen[y] = true;
    }
    assert!(seen.iter().all(|&s| s));
    assert!(split.train.inputs().data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    let head = load_mnist_dir(&mnist_dir(), 100, 10).unwrap();
    assert_eq!((head.train.len(), head.test.len()), (100, 10));
    assert_eq!(head.train.inputs().row(99), split.train.inputs().row(99));
}

#[test]
fn two_blobs_are_learned_by_a_small_mlp() {
    let split = blob_split(200, 200, 2, 2, 0.1, 3).unwrap();
    let model = ModelConfig {
        hidden: vec![50, 50],
        ..ExperimentConfig::defaults(ExperimentKind::Vote).model
    };
    let spec = model.spec(2, 2).unwrap();
    let all: Vec<usize> = (0..split.train.len()).collect();
    let params = train_teacher(&spec, &all, &split.train, &model.train, 5).unwrap();
    let acc = nn::accuracy(&nn::predict_proba(&params, split.test.inputs()).unwrap(), split.test.labels());
    assert!(acc > 0.95, "accuracy {acc}");
}

#[test]
fn reference_protocol_teacher_is_a_weak_learner() {
    // 2x50 MLP, 100 Adam steps of 100 examples: well above chance, well below convergence
    let split = load_mnist_dir(&mnist_dir(), 0, 0).unwrap();
    let model = ExperimentConfig::defaults(ExperimentKind::Vote).model;
    let spec = model.spec(784, 10).unwrap();
    let all: Vec<usize> = (0..split.train.len()).collect();
    let params = train_teacher(&spec, &all, &split.train, &model.train, 0).unwrap();
    let acc = nn::accuracy(&nn::predict_proba(&params, split.test.inputs()).unwrap(), split.test.labels());
    assert!((0.80..0.95).contains(&acc), "accuracy {acc}");
}
