//! Handwritten-digit image sets: IDX ingest, train/validation splitting,
//! labeled-subset sampling, and a synthetic stand-in for offline tests.
//!
//! Images are stored flattened row-major, one image per row, with pixel bytes
//! scaled to `[0, 1]` by dividing by 255.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{stream_rng, streams};

pub const MNIST_SIDE: usize = 28;
pub const MNIST_DIM: usize = MNIST_SIDE * MNIST_SIDE;
pub const NUM_CLASSES: usize = 10;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "MNIST_DIR";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    BadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("{path}: truncated file, expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },
    #[error("requested {requested} training rows but the set has only {available}")]
    SplitTooLarge { requested: usize, available: usize },
    #[error("class {class} has {available} members, fewer than the {requested} requested")]
    ClassTooSmall {
        class: u8,
        available: usize,
        requested: usize,
    },
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// A labeled collection of flattened square grayscale images.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageSet {
    pixels: Array2<f32>,
    labels: Vec<u8>,
    side: usize,
    split: Split,
}

impl ImageSet {
    /// Build a set from a `count × side²` pixel matrix. Pixels must lie in `[0, 1]`.
    pub fn new(
        pixels: Array2<f32>,
        labels: Vec<u8>,
        side: usize,
        split: Split,
    ) -> Result<Self, DatasetError> {
        if pixels.nrows() != labels.len() {
            return Err(DatasetError::DimensionMismatch(format!(
                "{} images but {} labels",
                pixels.nrows(),
                labels.len()
            )));
        }
        if pixels.ncols() != side * side {
            return Err(DatasetError::DimensionMismatch(format!(
                "rows have {} pixels, expected {side}x{side}",
                pixels.ncols()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(DatasetError::DimensionMismatch(format!(
                "pixel value {bad} outside [0, 1]"
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(DatasetError::DimensionMismatch(format!(
                "label {bad} outside 0..{NUM_CLASSES}"
            )));
        }
        Ok(Self {
            pixels,
            labels,
            side,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Pixels per image.
    pub fn dim(&self) -> usize {
        self.side * self.side
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn split(&self) -> Split {
        self.split
    }

    pub fn pixels(&self) -> ArrayView2<'_, f32> {
        self.pixels.view()
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn image(&self, index: usize) -> ArrayView1<'_, f32> {
        self.pixels.row(index)
    }

    /// Image `index` widened to double precision.
    pub fn image_f64(&self, index: usize) -> ndarray::Array1<f64> {
        self.pixels.row(index).mapv(f64::from)
    }

    /// Rows selected by `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> ImageSet {
        ImageSet {
            pixels: self.pixels.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            side: self.side,
            split: self.split,
        }
    }

    /// The first `count` rows (or all of them if the set is smaller).
    pub fn head(&self, count: usize) -> ImageSet {
        let count = count.min(self.len());
        ImageSet {
            pixels: self.pixels.slice(s![..count, ..]).to_owned(),
            labels: self.labels[..count].to_vec(),
            side: self.side,
            split: self.split,
        }
    }

    pub fn with_split(mut self, split: Split) -> ImageSet {
        self.split = split;
        self
    }

    /// Indices of the members of each class.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); NUM_CLASSES];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l as usize].push(i);
        }
        by_class
    }

    /// Write the set as an IDX image/label file pair, quantizing pixels to bytes.
    pub fn write_idx(&self, image_path: &Path, label_path: &Path) -> Result<(), DatasetError> {
        let mut img = Vec::with_capacity(16 + self.pixels.len());
        img.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
        img.extend_from_slice(&(self.len() as u32).to_be_bytes());
        img.extend_from_slice(&(self.side as u32).to_be_bytes());
        img.extend_from_slice(&(self.side as u32).to_be_bytes());
        img.extend(
            self.pixels
                .iter()
                .map(|&p| (p * 255.0).round().clamp(0.0, 255.0) as u8),
        );
        let mut lab = Vec::with_capacity(8 + self.len());
        lab.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
        lab.extend_from_slice(&(self.len() as u32).to_be_bytes());
        lab.extend_from_slice(&self.labels);
        write_file(image_path, &img)?;
        write_file(label_path, &lab)
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DatasetError> {
    let io = |source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

fn read_file(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32, DatasetError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DatasetError::Truncated {
            path: path.to_path_buf(),
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Parse an IDX3 image file and an IDX1 label file.
pub fn load_idx(
    image_path: &Path,
    label_path: &Path,
    split: Split,
) -> Result<ImageSet, DatasetError> {
    let img = read_file(image_path)?;
    let lab = read_file(label_path)?;

    let magic = be_u32(&img, 0, image_path)?;
    if magic != IMAGE_MAGIC {
        return Err(DatasetError::BadMagic {
            path: image_path.to_path_buf(),
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let magic = be_u32(&lab, 0, label_path)?;
    if magic != LABEL_MAGIC {
        return Err(DatasetError::BadMagic {
            path: label_path.to_path_buf(),
            found: magic,
            expected: LABEL_MAGIC,
        });
    }

    let count = be_u32(&img, 4, image_path)? as usize;
    let rows = be_u32(&img, 8, image_path)? as usize;
    let cols = be_u32(&img, 12, image_path)? as usize;
    let label_count = be_u32(&lab, 4, label_path)? as usize;
    if rows != cols {
        return Err(DatasetError::DimensionMismatch(format!(
            "non-square images {rows}x{cols}"
        )));
    }
    if count != label_count {
        return Err(DatasetError::DimensionMismatch(format!(
            "{count} images in {} but {label_count} labels in {}",
            image_path.display(),
            label_path.display()
        )));
    }

    let dim = rows * cols;
    let expected = 16 + count * dim;
    if img.len() < expected {
        return Err(DatasetError::Truncated {
            path: image_path.to_path_buf(),
            expected,
            found: img.len(),
        });
    }
    if lab.len() < 8 + count {
        return Err(DatasetError::Truncated {
            path: label_path.to_path_buf(),
            expected: 8 + count,
            found: lab.len(),
        });
    }

    let pixels = Array2::from_shape_vec(
        (count, dim),
        img[16..expected]
            .iter()
            .map(|&b| f32::from(b) / 255.0)
            .collect(),
    )
    .expect("shape checked above");
    let labels = lab[8..8 + count].to_vec();
    ImageSet::new(pixels, labels, rows, split)
}

/// The MNIST data directory: `explicit` if given, else `$MNIST_DIR`, else `data/mnist`.
pub fn resolve_data_dir(explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

/// The 60,000-image MNIST training split from `dir`.
pub fn load_mnist_train(dir: &Path) -> Result<ImageSet, DatasetError> {
    load_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        Split::Train,
    )
}

/// The 10,000-image MNIST test split from `dir`.
pub fn load_mnist_test(dir: &Path) -> Result<ImageSet, DatasetError> {
    load_idx(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )
}

/// First `n_train` rows become the training split, the rest validation.
pub fn split_train_val(
    set: &ImageSet,
    n_train: usize,
) -> Result<(ImageSet, ImageSet), DatasetError> {
    if n_train > set.len() {
        return Err(DatasetError::SplitTooLarge {
            requested: n_train,
            available: set.len(),
        });
    }
    let train = ImageSet {
        pixels: set.pixels.slice(s![..n_train, ..]).to_owned(),
        labels: set.labels[..n_train].to_vec(),
        side: set.side,
        split: Split::Train,
    };
    let val = ImageSet {
        pixels: set.pixels.slice(s![n_train.., ..]).to_owned(),
        labels: set.labels[n_train..].to_vec(),
        side: set.side,
        split: Split::Validation,
    };
    Ok((train, val))
}

/// `k` labeled examples per class, drawn without replacement.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledSubset {
    /// Sorted ascending.
    pub indices: Vec<usize>,
    pub per_class: usize,
    pub seed: u64,
}

pub fn sample_labeled_subset(
    set: &ImageSet,
    k: usize,
    seed: u64,
) -> Result<LabeledSubset, DatasetError> {
    let mut rng = stream_rng(seed, streams::SUBSET);
    let mut indices = Vec::with_capacity(k * NUM_CLASSES);
    for (class, mut members) in set.class_indices().into_iter().enumerate() {
        if members.len() < k {
            return Err(DatasetError::ClassTooSmall {
                class: class as u8,
                available: members.len(),
                requested: k,
            });
        }
        let (chosen, _) = members.partial_shuffle(&mut rng, k);
        indices.extend_from_slice(chosen);
    }
    indices.sort_unstable();
    Ok(LabeledSubset {
        indices,
        per_class: k,
        seed,
    })
}

/// Stroke templates for the ten pseudo-classes, as segments in unit coordinates
/// `(row, col)`.
fn glyph(class: usize) -> &'static [[f64; 4]] {
    const G: [&[[f64; 4]]; 10] = [
        &[
            [0.2, 0.5, 0.35, 0.3],
            [0.35, 0.3, 0.65, 0.3],
            [0.65, 0.3, 0.8, 0.5],
            [0.8, 0.5, 0.65, 0.7],
            [0.65, 0.7, 0.35, 0.7],
            [0.35, 0.7, 0.2, 0.5],
        ],
        &[[0.2, 0.5, 0.8, 0.5]],
        &[
            [0.25, 0.3, 0.2, 0.65],
            [0.2, 0.65, 0.45, 0.65],
            [0.45, 0.65, 0.8, 0.3],
            [0.8, 0.3, 0.8, 0.7],
        ],
        &[
            [0.2, 0.3, 0.2, 0.7],
            [0.2, 0.7, 0.5, 0.45],
            [0.5, 0.45, 0.8, 0.7],
            [0.8, 0.7, 0.8, 0.3],
        ],
        &[
            [0.2, 0.35, 0.55, 0.3],
            [0.55, 0.3, 0.55, 0.75],
            [0.2, 0.6, 0.8, 0.6],
        ],
        &[
            [0.2, 0.7, 0.2, 0.3],
            [0.2, 0.3, 0.5, 0.3],
            [0.5, 0.3, 0.6, 0.7],
            [0.6, 0.7, 0.8, 0.3],
        ],
        &[
            [0.2, 0.6, 0.55, 0.3],
            [0.55, 0.3, 0.8, 0.5],
            [0.8, 0.5, 0.55, 0.7],
            [0.55, 0.7, 0.55, 0.3],
        ],
        &[[0.2, 0.3, 0.2, 0.7], [0.2, 0.7, 0.8, 0.4]],
        &[
            [0.2, 0.5, 0.5, 0.3],
            [0.5, 0.3, 0.8, 0.5],
            [0.8, 0.5, 0.5, 0.7],
            [0.5, 0.7, 0.2, 0.5],
        ],
        &[
            [0.45, 0.7, 0.2, 0.5],
            [0.2, 0.5, 0.45, 0.3],
            [0.45, 0.3, 0.45, 0.7],
            [0.45, 0.7, 0.8, 0.6],
        ],
    ];
    G[class % 10]
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + t * dx, a.1 + t * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

/// Deterministic stroke renderings with ten pseudo-classes (label `i % 10`),
/// jittered in position, scale, rotation and stroke width.
pub fn synthetic_digits(count: usize, side: usize, seed: u64) -> ImageSet {
    assert!(side >= 8, "synthetic digits need side >= 8");
    let mut rng = stream_rng(seed, streams::SYNTHETIC);
    let dim = side * side;
    let mut pixels = Array2::<f32>::zeros((count, dim));
    let mut labels = Vec::with_capacity(count);
    for (i, mut row) in pixels.outer_iter_mut().enumerate() {
        let class = i % NUM_CLASSES;
        labels.push(class as u8);
        let shift = (rng.random_range(-0.08..0.08), rng.random_range(-0.08..0.08));
        let scale = rng.random_range(0.85..1.1);
        let angle: f64 = rng.random_range(-0.15..0.15);
        let width = rng.random_range(0.035..0.06);
        let (sin, cos) = angle.sin_cos();
        let place = |r: f64, c: f64| {
            let (r, c) = ((r - 0.5) * scale, (c - 0.5) * scale);
            (
                0.5 + cos * r - sin * c + shift.0,
                0.5 + sin * r + cos * c + shift.1,
            )
        };
        let segments: Vec<_> = glyph(class)
            .iter()
            .map(|s| (place(s[0], s[1]), place(s[2], s[3])))
            .collect();
        for r in 0..side {
            for c in 0..side {
                let p = (
                    (r as f64 + 0.5) / side as f64,
                    (c as f64 + 0.5) / side as f64,
                );
                let d = segments
                    .iter()
                    .map(|&(a, b)| segment_distance(p, a, b))
                    .fold(f64::INFINITY, f64::min);
                let v = (-(d * d) / (2.0 * width * width)).exp();
                row[r * side + c] = (v as f32).clamp(0.0, 1.0);
            }
        }
    }
    ImageSet {
        pixels,
        labels,
        side,
        split: Split::Train,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_pair(
        dir: &Path,
        count: u32,
        label_count: u32,
        side: u32,
        payload: &[u8],
    ) -> (PathBuf, PathBuf) {
        let ip = dir.join("img");
        let lp = dir.join("lab");
        let mut img = IMAGE_MAGIC.to_be_bytes().to_vec();
        img.extend_from_slice(&count.to_be_bytes());
        img.extend_from_slice(&side.to_be_bytes());
        img.extend_from_slice(&side.to_be_bytes());
        img.extend_from_slice(payload);
        let mut lab = LABEL_MAGIC.to_be_bytes().to_vec();
        lab.extend_from_slice(&label_count.to_be_bytes());
        lab.extend((0..label_count).map(|i| (i % 10) as u8));
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lab).unwrap();
        (ip, lp)
    }

    #[test]
    fn byte_endpoints_scale_to_unit_interval() {
        let dir = tempfile::tempdir().unwrap();
        let mut payload = vec![0u8; 2 * 4];
        payload[0] = 255;
        payload[5] = 51;
        let (ip, lp) = idx_pair(dir.path(), 2, 2, 2, &payload);
        let set = load_idx(&ip, &lp, Split::Train).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.image(0)[0], 1.0);
        assert_eq!(set.image(0)[1], 0.0);
        assert_eq!(set.image(1)[1], 0.2);
    }

    #[test]
    fn count_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_pair(dir.path(), 2, 3, 2, &[0u8; 8]);
        assert!(matches!(
            load_idx(&ip, &lp, Split::Train),
            Err(DatasetError::DimensionMismatch(_))
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_pair(dir.path(), 2, 2, 2, &[0u8; 5]);
        assert!(matches!(
            load_idx(&ip, &lp, Split::Train),
            Err(DatasetError::Truncated { .. })
        ));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = idx_pair(dir.path(), 1, 1, 2, &[0u8; 4]);
        // swap the roles: label file where an image file is expected
        assert!(matches!(
            load_idx(&lp, &ip, Split::Train),
            Err(DatasetError::BadMagic { .. })
        ));
    }

    #[test]
    fn split_boundaries() {
        let set = synthetic_digits(30, 8, 1);
        let (tr, va) = split_train_val(&set, 30).unwrap();
        assert_eq!((tr.len(), va.len()), (30, 0));
        let (tr, va) = split_train_val(&set, 0).unwrap();
        assert_eq!((tr.len(), va.len()), (0, 30));
        assert_eq!(va.split(), Split::Validation);
        assert!(matches!(
            split_train_val(&set, 31),
            Err(DatasetError::SplitTooLarge { .. })
        ));
    }

    #[test]
    fn subset_counts_and_determinism() {
        let set = synthetic_digits(200, 8, 3);
        let one = sample_labeled_subset(&set, 1, 9).unwrap();
        assert_eq!(one.indices.len(), 10);
        let a = sample_labeled_subset(&set, 7, 42).unwrap();
        let b = sample_labeled_subset(&set, 7, 42).unwrap();
        assert_eq!(a, b);
        let mut hist = [0usize; 10];
        for &i in &a.indices {
            hist[set.labels()[i] as usize] += 1;
        }
        assert!(hist.iter().all(|&h| h == 7));
        assert!(matches!(
            sample_labeled_subset(&set, 21, 0),
            Err(DatasetError::ClassTooSmall { .. })
        ));
    }

    #[test]
    fn synthetic_shapes_and_determinism() {
        let a = synthetic_digits(100, 28, 5);
        assert_eq!(a.pixels().dim(), (100, 784));
        assert_eq!(a, synthetic_digits(100, 28, 5));
        assert_ne!(a.pixels(), synthetic_digits(100, 28, 6).pixels());
        assert!(a.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
        assert!(synthetic_digits(0, 28, 5).is_empty());
        assert!(a.image(0).sum() > 5.0);
    }
}
