//! MNIST IDX files and synthetic Gaussian blobs.

use std::f64::consts::PI;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use efkd_core::distill::Dataset;
use efkd_core::{rng, Matrix};
use flate2::read::GzDecoder;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CliError, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const MNIST_CLASSES: usize = 10;

/// Train and test halves of one dataset.
#[derive(Clone, Debug)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
}

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(|e| CliError::Data(format!("{}: bad gzip stream: {e}", path.display())))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| CliError::Data(format!("{}: truncated header", path.display())))
}

fn check_magic(found: u32, expected: u32, path: &Path) -> Result<()> {
    if found == expected {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "{}: magic {found:#010x}, expected {expected:#010x}",
            path.display()
        )))
    }
}

fn payload<'a>(bytes: &'a [u8], header: usize, expected: usize, path: &Path) -> Result<&'a [u8]> {
    let body = &bytes[header..];
    if body.len() < expected {
        return Err(CliError::Data(format!(
            "{}: truncated, {} of {expected} payload bytes",
            path.display(),
            body.len()
        )));
    }
    if body.len() > expected {
        return Err(CliError::Data(format!(
            "{}: {} trailing bytes",
            path.display(),
            body.len() - expected
        )));
    }
    Ok(body)
}

/// Parse an IDX image/label pair (optionally gzipped). Pixels map to `v / 255`.
pub fn load_mnist_idx(images: &Path, labels: &Path) -> Result<Dataset> {
    let img = read_maybe_gz(images)?;
    check_magic(be_u32(&img, 0, images)?, IMAGE_MAGIC, images)?;
    let count = be_u32(&img, 4, images)? as usize;
    let rows = be_u32(&img, 8, images)? as usize;
    let cols = be_u32(&img, 12, images)? as usize;
    let pixels = payload(&img, 16, count * rows * cols, images)?;

    let lab = read_maybe_gz(labels)?;
    check_magic(be_u32(&lab, 0, labels)?, LABEL_MAGIC, labels)?;
    let label_count = be_u32(&lab, 4, labels)? as usize;
    if label_count != count {
        return Err(CliError::Data(format!(
            "{count} images in {} but {label_count} labels in {}",
            images.display(),
            labels.display()
        )));
    }
    let raw_labels = payload(&lab, 8, count, labels)?;
    if let Some(bad) = raw_labels.iter().find(|&&l| l as usize >= MNIST_CLASSES) {
        return Err(CliError::Data(format!("{}: label {bad} is not a digit", labels.display())));
    }

    let inputs = pixels.iter().map(|&v| v as f64 / 255.0).collect();
    let inputs = Matrix::new(count, rows * cols, inputs)?;
    let labels = raw_labels.iter().map(|&l| l as usize).collect();
    Ok(Dataset::new(inputs, labels, MNIST_CLASSES)?)
}

fn locate(dir: &Path, stem: &str) -> Result<PathBuf> {
    [stem.to_string(), format!("{stem}.gz")]
        .iter()
        .map(|name| dir.join(name))
        .find(|p| p.is_file())
        .ok_or_else(|| CliError::Data(format!("{} has no {stem}[.gz]", dir.display())))
}

fn head(data: Dataset, limit: usize) -> Dataset {
    if limit == 0 || limit >= data.len() {
        data
    } else {
        data.subset(&(0..limit).collect::<Vec<_>>())
    }
}

/// The four standard MNIST files in `dir`, keeping the first `train_limit` / `test_limit`
/// examples (0 keeps everything).
pub fn load_mnist_dir(dir: &Path, train_limit: usize, test_limit: usize) -> Result<Split> {
    let train = load_mnist_idx(
        &locate(dir, "train-images-idx3-ubyte")?,
        &locate(dir, "train-labels-idx1-ubyte")?,
    )?;
    let test = load_mnist_idx(
        &locate(dir, "t10k-images-idx3-ubyte")?,
        &locate(dir, "t10k-labels-idx1-ubyte")?,
    )?;
    Ok(Split {
        train: head(train, train_limit),
        test: head(test, test_limit),
    })
}

/// Cluster centres: a circle in the first two coordinates with neighbours at least 2
/// apart, or the points `0, 2, 4, …` on a line when `dims == 1`.
pub fn blob_centers(classes: usize, dims: usize) -> Vec<Vec<f64>> {
    (0..classes)
        .map(|k| {
            let mut c = vec![0.0; dims];
            if dims == 1 {
                c[0] = 2.0 * k as f64;
            } else {
                let radius = (1.0 / (PI / classes as f64).sin()).max(1.0);
                let angle = 2.0 * PI * k as f64 / classes as f64;
                c[0] = radius * angle.cos();
                c[1] = radius * angle.sin();
            }
            c
        })
        .collect()
}

/// `n_per_class` isotropic Gaussian points around each centre; example `i` has class `i % K`.
pub fn synth_blobs(n_per_class: usize, classes: usize, dims: usize, spread: f64, seed: u64) -> Result<Dataset> {
    if classes < 2 || dims == 0 || n_per_class == 0 {
        return Err(CliError::Config(format!(
            "blobs need >= 2 classes, >= 1 dimension and >= 1 point per class (got {classes}, {dims}, {n_per_class})"
        )));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(CliError::Config(format!("blob spread {spread} must be finite and >= 0")));
    }
    let centers = blob_centers(classes, dims);
    let n = n_per_class * classes;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let mut r = rng::stream(seed, 0);
    let inputs = Matrix::from_fn(n, dims, |i, j| {
        centers[labels[i]][j] + spread * r.sample::<f64, _>(StandardNormal)
    });
    Ok(Dataset::new(inputs, labels, classes)?)
}

/// Blobs with independent train and test draws from `seed` and `seed + 1`.
pub fn blob_split(
    train_per_class: usize,
    test_per_class: usize,
    classes: usize,
    dims: usize,
    spread: f64,
    seed: u64,
) -> Result<Split> {
    Ok(Split {
        train: synth_blobs(train_per_class, classes, dims, spread, seed)?,
        test: synth_blobs(test_per_class, classes, dims, spread, seed.wrapping_add(1))?,
    })
}
