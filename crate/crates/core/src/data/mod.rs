//! Dataset ingestion: IDX image sets, EVT0 event tensors, seeded batching
//! and a small synthetic two-class set.

mod batch;
mod events;
mod idx;

pub use batch::{make_batches, Batch};
pub use events::{load_events, read_evt0, write_evt0, EventDataset, EventSample, EventShape, EVENT_CLASSES, MANIFEST};
pub use idx::{load_idx, parse_idx, write_idx, IdxTensor};

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad magic: {0}")]
    BadMagic(String),
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("unsupported IDX dtype 0x{0:02x}")]
    UnsupportedDtype(u8),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid label {label} (must be < {classes})")]
    InvalidLabel { label: usize, classes: usize },
    #[error("missing label for {0}")]
    MissingLabel(String),
    #[error("malformed manifest line {line}: `{text}`")]
    Manifest { line: usize, text: String },
    #[error("empty dataset")]
    Empty,
}

pub type Result<T> = std::result::Result<T, DataError>;

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Greyscale images with intensities in `[0, 1]`, flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDataset {
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub rows: usize,
    pub cols: usize,
}

impl ImageDataset {
    pub fn new(images: Vec<Vec<f64>>, labels: Vec<usize>, rows: usize, cols: usize) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(DataError::ShapeMismatch(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if let Some(bad) = images.iter().find(|im| im.len() != rows * cols) {
            return Err(DataError::ShapeMismatch(format!(
                "image of {} values, expected {rows}x{cols}",
                bad.len()
            )));
        }
        if images.iter().flatten().any(|&p| !(0.0..=1.0).contains(&p)) {
            return Err(DataError::ShapeMismatch("intensity outside [0, 1]".into()));
        }
        Ok(Self {
            images,
            labels,
            rows,
            cols,
        })
    }

    /// Pair an IDX image file (rank 3) with an IDX label file (rank 1).
    pub fn from_idx(images: &IdxTensor, labels: &IdxTensor) -> Result<Self> {
        let [n, rows, cols] = images.dims[..] else {
            return Err(DataError::ShapeMismatch(format!(
                "image file has rank {}, expected 3",
                images.dims.len()
            )));
        };
        if labels.dims.len() != 1 {
            return Err(DataError::ShapeMismatch(format!(
                "label file has rank {}, expected 1",
                labels.dims.len()
            )));
        }
        let size = rows * cols;
        let imgs = (0..n)
            .map(|k| images.scaled(k * size..(k + 1) * size))
            .collect();
        let labs = labels.data.iter().map(|&b| usize::from(b)).collect();
        Self::new(imgs, labs, rows, cols)
    }

    /// `<dir>/<prefix>-images-idx3-ubyte` and `<dir>/<prefix>-labels-idx1-ubyte`.
    pub fn load(dir: &Path, prefix: &str) -> Result<Self> {
        let images = load_idx(&dir.join(format!("{prefix}-images-idx3-ubyte")))?;
        let labels = load_idx(&dir.join(format!("{prefix}-labels-idx1-ubyte")))?;
        Self::from_idx(&images, &labels)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> usize {
        self.rows * self.cols
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            rows: self.rows,
            cols: self.cols,
        }
    }

    /// Seeded split into `(rest, held_out)` with `round(fraction * N)`
    /// samples held out.
    pub fn split(&self, fraction: f64, seed: u64) -> (Self, Self) {
        let n = self.len();
        let held = ((fraction * n as f64).round() as usize).min(n);
        let order: Vec<usize> = make_batches(n, n.max(1), seed, true)
            .into_iter()
            .flat_map(|b| b.indices)
            .collect();
        let (a, b) = order.split_at(n - held);
        let mut a = a.to_vec();
        let mut b = b.to_vec();
        a.sort_unstable();
        b.sort_unstable();
        (self.subset(&a), self.subset(&b))
    }
}

/// `n` images of `side x side`; class 0 is bright on the left half, class 1
/// on the right half. Pixel values get seeded jitter in `[0, 0.2]` on the
/// dark half and `[0.8, 1]` on the bright half.
pub fn toy_two_class(n: usize, side: usize, seed: u64) -> ImageDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n {
        let label = k % 2;
        let img = (0..side * side)
            .map(|p| {
                let left = (p % side) < side / 2;
                let bright = left == (label == 0);
                let jitter: f64 = rng.gen_range(0.0..=0.2);
                if bright {
                    1.0 - jitter
                } else {
                    jitter
                }
            })
            .collect();
        images.push(img);
        labels.push(label);
    }
    ImageDataset {
        images,
        labels,
        rows: side,
        cols: side,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_set_is_balanced_and_separable_by_halves() {
        let d = toy_two_class(40, 8, 1);
        assert_eq!(d.len(), 40);
        assert_eq!(d.labels.iter().filter(|&&l| l == 1).count(), 20);
        for (img, &l) in d.images.iter().zip(&d.labels) {
            let left: f64 = (0..64).filter(|p| p % 8 < 4).map(|p| img[p]).sum();
            let right: f64 = (0..64).filter(|p| p % 8 >= 4).map(|p| img[p]).sum();
            assert_eq!(left > right, l == 0);
        }
        assert_eq!(d, toy_two_class(40, 8, 1));
        assert_ne!(d, toy_two_class(40, 8, 2));
    }

    #[test]
    fn split_partitions_samples() {
        let d = toy_two_class(40, 4, 0);
        let (a, b) = d.split(0.1, 3);
        assert_eq!((a.len(), b.len()), (36, 4));
        let mut all: Vec<_> = a.images.iter().chain(&b.images).cloned().collect();
        let mut orig = d.images.clone();
        let key = |v: &Vec<f64>| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        all.sort_by_key(key);
        orig.sort_by_key(key);
        assert_eq!(all, orig);
    }

    #[test]
    fn dataset_invariants_checked() {
        assert!(ImageDataset::new(vec![vec![0.0; 4]], vec![], 2, 2).is_err());
        assert!(ImageDataset::new(vec![vec![0.0; 3]], vec![0], 2, 2).is_err());
        assert!(ImageDataset::new(vec![vec![1.5; 4]], vec![0], 2, 2).is_err());
    }
}
