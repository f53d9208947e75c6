//! MNIST (IDX) and CIFAR-10 (binary batch) ingestion and two-class task construction.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::{norm, Matrix};

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Bytes per CIFAR-10 record: one label byte followed by 3 × 32 × 32 pixel bytes.
pub const CIFAR_RECORD: usize = 3073;
pub const CIFAR_PIXELS: usize = 3072;

const ROW_NORM_TOL: f64 = 1e-12;

/// Undecoded images as stored on disk: `count` records of `record_len` bytes each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImageSet {
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
    pub record_len: usize,
}

impl RawImageSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn record(&self, i: usize) -> &[u8] {
        &self.pixels[i * self.record_len..(i + 1) * self.record_len]
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Length(format!("{what}: header truncated at byte {offset}")))
}

/// Parses an IDX3 image file held in memory. Returns `(count, rows*cols, pixel bytes)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, Vec<u8>)> {
    let magic = be_u32(bytes, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "image file magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let count = be_u32(bytes, 4, "images")? as usize;
    let rows = be_u32(bytes, 8, "images")? as usize;
    let cols = be_u32(bytes, 12, "images")? as usize;
    let record_len = rows * cols;
    let need = 16 + count * record_len;
    if bytes.len() < need {
        return Err(Error::Length(format!(
            "image file has {} bytes, header promises {need}",
            bytes.len()
        )));
    }
    Ok((count, record_len, bytes[16..need].to_vec()))
}

/// Parses an IDX1 label file held in memory.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "label file magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let count = be_u32(bytes, 4, "labels")? as usize;
    let need = 8 + count;
    if bytes.len() < need {
        return Err(Error::Length(format!(
            "label file has {} bytes, header promises {need}",
            bytes.len()
        )));
    }
    Ok(bytes[8..need].to_vec())
}

pub fn load_mnist(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawImageSet> {
    let (count, record_len, pixels) = parse_idx_images(&read_file(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&read_file(labels_path.as_ref())?)?;
    if labels.len() != count {
        return Err(Error::Consistency(format!(
            "{count} images but {} labels",
            labels.len()
        )));
    }
    Ok(RawImageSet {
        pixels,
        labels,
        record_len,
    })
}

/// Decodes concatenated CIFAR-10 binary records.
pub fn parse_cifar10(bytes: &[u8]) -> Result<RawImageSet> {
    if bytes.is_empty() || !bytes.len().is_multiple_of(CIFAR_RECORD) {
        return Err(Error::Format(format!(
            "{} bytes is not a positive multiple of the {CIFAR_RECORD}-byte record",
            bytes.len()
        )));
    }
    let count = bytes.len() / CIFAR_RECORD;
    let mut pixels = Vec::with_capacity(count * CIFAR_PIXELS);
    let mut labels = Vec::with_capacity(count);
    for (i, rec) in bytes.chunks_exact(CIFAR_RECORD).enumerate() {
        if rec[0] > 9 {
            return Err(Error::Value(format!("record {i} has label byte {}", rec[0])));
        }
        labels.push(rec[0]);
        pixels.extend_from_slice(&rec[1..]);
    }
    Ok(RawImageSet {
        pixels,
        labels,
        record_len: CIFAR_PIXELS,
    })
}

pub fn load_cifar10<P: AsRef<Path>>(batch_paths: &[P]) -> Result<RawImageSet> {
    let mut out = RawImageSet {
        pixels: Vec::new(),
        labels: Vec::new(),
        record_len: CIFAR_PIXELS,
    };
    for p in batch_paths {
        let part = parse_cifar10(&read_file(p.as_ref())?)
            .map_err(|e| match e {
                Error::Format(m) => Error::Format(format!("{}: {m}", p.as_ref().display())),
                other => other,
            })?;
        out.pixels.extend(part.pixels);
        out.labels.extend(part.labels);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Unit-normalized rows with ±1 labels for a two-class task.
///
/// `index` records each row's position in its source (the raw set for freshly built tasks),
/// which is what [`split_half`] permutes.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<f64>,
    index: Vec<usize>,
    pub class_pair: (u8, u8),
    pub split: Split,
}

impl Dataset {
    /// Validates and wraps already-normalized rows.
    pub fn new(
        features: Matrix,
        labels: Vec<f64>,
        index: Vec<usize>,
        class_pair: (u8, u8),
        split: Split,
    ) -> Result<Self> {
        let (n, d) = features.dim();
        if n == 0 || d == 0 {
            return Err(Error::Size(format!("dataset shape {n}×{d}")));
        }
        if labels.len() != n || index.len() != n {
            return Err(Error::Consistency(format!(
                "{n} rows, {} labels, {} indices",
                labels.len(),
                index.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y != 1.0 && y != -1.0) {
            return Err(Error::Value(format!("label {bad} is not ±1")));
        }
        for (i, row) in features.outer_iter().enumerate() {
            let r = norm(row.as_slice().expect("standard layout"));
            if (r - 1.0).abs() > ROW_NORM_TOL {
                return Err(Error::Precondition(format!("row {i} has norm {r}")));
            }
        }
        Ok(Dataset {
            features,
            labels,
            index,
            class_pair,
            split,
        })
    }

    /// Normalizes each row of arbitrary real features and wraps them. Zero rows are rejected.
    pub fn from_raw_rows(mut features: Matrix, labels: Vec<f64>, class_pair: (u8, u8), split: Split) -> Result<Self> {
        for (i, mut row) in features.outer_iter_mut().enumerate() {
            let s = row.as_slice_mut().expect("standard layout");
            if crate::linalg::normalize(s) == 0.0 {
                return Err(Error::Value(format!("row {i} is all zero")));
            }
        }
        let n = features.nrows();
        Self::new(features, labels, (0..n).collect(), class_pair, split)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[f64] {
        &self.labels
    }

    pub fn index(&self) -> &[usize] {
        &self.index
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features.as_slice().expect("standard layout")[i * d..(i + 1) * d]
    }

    /// Rows at `positions` (positions into this dataset), in the given order.
    pub fn select(&self, positions: &[usize]) -> Dataset {
        let d = self.dim();
        let mut features = Matrix::zeros((positions.len(), d));
        for (k, &p) in positions.iter().enumerate() {
            features.row_mut(k).assign(&self.features.row(p));
        }
        Dataset {
            features,
            labels: positions.iter().map(|&p| self.labels[p]).collect(),
            index: positions.iter().map(|&p| self.index[p]).collect(),
            class_pair: self.class_pair,
            split: self.split,
        }
    }

    /// Replaces the feature rows (e.g. with an embedding of them), keeping labels and indices.
    pub fn with_features(&self, features: Matrix) -> Result<Dataset> {
        Dataset::new(
            features,
            self.labels.clone(),
            self.index.clone(),
            self.class_pair,
            self.split,
        )
    }
}

/// Keeps records of `class_a` (label +1) and `class_b` (label −1) in file order, optionally only
/// the first `per_class` of each, scales pixels to [0, 1] and normalizes every row.
pub fn make_binary_task(
    raw: &RawImageSet,
    class_a: u8,
    class_b: u8,
    split: Split,
    per_class: Option<usize>,
) -> Result<Dataset> {
    if class_a == class_b {
        return Err(Error::Precondition(format!("both classes are {class_a}")));
    }
    let cap = per_class.unwrap_or(usize::MAX);
    let (mut na, mut nb) = (0usize, 0usize);
    let mut keep = Vec::new();
    for (i, &l) in raw.labels.iter().enumerate() {
        if l == class_a && na < cap {
            na += 1;
            keep.push((i, 1.0));
        } else if l == class_b && nb < cap {
            nb += 1;
            keep.push((i, -1.0));
        }
    }
    if na == 0 {
        return Err(Error::EmptyClass(class_a));
    }
    if nb == 0 {
        return Err(Error::EmptyClass(class_b));
    }

    let d = raw.record_len;
    let mut features = Matrix::zeros((keep.len(), d));
    for (k, &(i, _)) in keep.iter().enumerate() {
        let mut row = features.row_mut(k);
        let dst = row.as_slice_mut().expect("standard layout");
        for (x, &b) in dst.iter_mut().zip(raw.record(i)) {
            *x = f64::from(b) / 255.0;
        }
        if crate::linalg::normalize(dst) == 0.0 {
            return Err(Error::Value(format!("record {i} is an all-zero image")));
        }
    }
    Dataset::new(
        features,
        keep.iter().map(|&(_, y)| y).collect(),
        keep.iter().map(|&(i, _)| i).collect(),
        (class_a, class_b),
        split,
    )
}

/// Seeded choice of `per_class` rows of each label, returned in their original order.
pub fn subsample_per_class(dataset: &Dataset, per_class: usize, seed: u64) -> Result<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::with_capacity(2 * per_class);
    for label in [1.0, -1.0] {
        let rows: Vec<usize> = (0..dataset.len()).filter(|&i| dataset.labels[i] == label).collect();
        if rows.len() < per_class {
            return Err(Error::Size(format!(
                "{} rows with label {label}, {per_class} requested",
                rows.len()
            )));
        }
        keep.extend(rand::seq::index::sample(&mut rng, rows.len(), per_class).into_iter().map(|k| rows[k]));
    }
    if keep.is_empty() {
        return Err(Error::Size("empty subsample".into()));
    }
    keep.sort_unstable();
    Ok(dataset.select(&keep))
}

/// Seeded shuffle then split; the first half gets ⌈n/2⌉ rows.
pub fn split_half(dataset: &Dataset, seed: u64) -> Result<(Dataset, Dataset)> {
    let n = dataset.len();
    if n < 2 {
        return Err(Error::Size(format!("cannot split {n} rows in half")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let cut = n.div_ceil(2);
    Ok((dataset.select(&order[..cut]), dataset.select(&order[cut..])))
}
