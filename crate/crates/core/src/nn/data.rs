//! Datasets: seeded synthetic blobs and IDX (MNIST-style) files.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    pub train_size: usize,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetKind {
    /// Gaussian clusters around per-class centres, laid out on a
    /// `height x width` raster and clamped to `[0, 1]`.
    Blobs {
        num_classes: usize,
        height: usize,
        width: usize,
        spread: f64,
        seed: u64,
    },
    /// Image/label pair in IDX format; bytes are scaled by 1/255.
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub x: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub height: usize,
    pub width: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn dim(&self) -> usize {
        self.height * self.width
    }
}

impl DatasetSpec {
    pub fn load(&self) -> Result<Dataset> {
        match &self.kind {
            DatasetKind::Blobs {
                num_classes,
                height,
                width,
                spread,
                seed,
            } => Ok(blobs(
                *num_classes,
                *height,
                *width,
                *spread,
                *seed,
                self.train_size,
                self.test_size,
            )),
            DatasetKind::Idx { images, labels } => {
                let (height, width, pixels) = read_idx_images(images)?;
                let targets = read_idx_labels(labels)?;
                if pixels.len() != targets.len() {
                    return Err(Error::Idx {
                        path: labels.clone(),
                        reason: format!("{} labels for {} images", targets.len(), pixels.len()),
                    });
                }
                let needed = self.train_size + self.test_size;
                if pixels.len() < needed {
                    return Err(Error::Idx {
                        path: images.clone(),
                        reason: format!("{} images, need {needed}", pixels.len()),
                    });
                }
                let num_classes = targets.iter().copied().max().map_or(0, |m| m as usize + 1);
                let mut samples = pixels.into_iter().zip(targets).map(|(x, l)| Sample {
                    x,
                    label: l as usize,
                });
                let train = samples.by_ref().take(self.train_size).collect();
                let test = samples.take(self.test_size).collect();
                Ok(Dataset {
                    train,
                    test,
                    height,
                    width,
                    num_classes,
                })
            }
        }
    }
}

fn blobs(
    num_classes: usize,
    height: usize,
    width: usize,
    spread: f64,
    seed: u64,
    train: usize,
    test: usize,
) -> Dataset {
    let dim = height * width;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..num_classes)
        .map(|_| (0..dim).map(|_| rng.random_range(0.2..0.8)).collect())
        .collect();
    let draw = |count: usize, rng: &mut ChaCha8Rng| -> Vec<Sample> {
        (0..count)
            .map(|i| {
                let label = i % num_classes;
                let x = centres[label]
                    .iter()
                    .map(|c| {
                        let z: f64 = StandardNormal.sample(rng);
                        (c + spread * z).clamp(0.0, 1.0)
                    })
                    .collect();
                Sample { x, label }
            })
            .collect()
    };
    let train = draw(train, &mut rng);
    let test = draw(test, &mut rng);
    Dataset {
        train,
        test,
        height,
        width,
        num_classes,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn idx_header(path: &Path, bytes: &[u8], magic: u32, rank: usize) -> Result<Vec<usize>> {
    let idx_err = |reason: String| Error::Idx {
        path: path.to_path_buf(),
        reason,
    };
    if bytes.len() < 4 + 4 * rank {
        return Err(idx_err("truncated header".into()));
    }
    let found = u32::from_be_bytes(bytes[0..4].try_into().unwrap());
    if found != magic {
        return Err(idx_err(format!(
            "magic {found:#010x}, expected {magic:#010x}"
        )));
    }
    let dims: Vec<usize> = (0..rank)
        .map(|k| u32::from_be_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().unwrap()) as usize)
        .collect();
    let body: usize = dims.iter().product();
    if bytes.len() != 4 + 4 * rank + body {
        return Err(idx_err(format!(
            "body has {} bytes, header promises {body}",
            bytes.len() - 4 - 4 * rank
        )));
    }
    Ok(dims)
}

/// Returns `(rows, cols, images)` with pixels scaled to `[0, 1]`.
pub(crate) fn read_idx_images(path: &Path) -> Result<(usize, usize, Vec<Vec<f64>>)> {
    let bytes = read_file(path)?;
    let dims = idx_header(path, &bytes, IDX_IMAGES_MAGIC, 3)?;
    let (rows, cols) = (dims[1], dims[2]);
    let images = bytes[16..]
        .chunks_exact(rows * cols)
        .map(|img| img.iter().map(|&b| f64::from(b) / 255.0).collect())
        .collect();
    Ok((rows, cols, images))
}

pub(crate) fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_file(path)?;
    idx_header(path, &bytes, IDX_LABELS_MAGIC, 1)?;
    Ok(bytes[8..].to_vec())
}
