//! Labeled datasets: synthetic generators, CSV and IDX ingestion, and
//! seeded train/test splits.
//!
//! The features of a dataset are the empirical input distribution used when
//! comparing two models' predictions; labels are only needed for training
//! and evaluation.

use std::f64::consts::PI;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const DEFAULT_LABEL_COLUMN: &str = "label";

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, class_count: usize) -> Result<Self> {
        if features.rows == 0 {
            return Err(Error::invalid("dataset", "no rows"));
        }
        if labels.len() != features.rows {
            return Err(Error::shape("dataset labels", features.rows, labels.len()));
        }
        features.ensure_finite("dataset features")?;
        crate::nn::check_labels(&labels, class_count)?;
        Ok(Dataset {
            features,
            labels,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols
    }

    /// The label-free view: just the inputs.
    pub fn inputs(&self) -> &Matrix {
        &self.features
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            class_count: self.class_count,
        }
    }
}

/// `classes` isotropic Gaussian blobs of `per_class` points each, with
/// standard-normal centers and standard deviation `spread`. Rows are grouped
/// by class.
pub fn gen_gaussian_mixture(
    classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 {
        return Err(Error::invalid("classes", "need at least 2"));
    }
    if per_class < 1 {
        return Err(Error::invalid("per_class", "need at least 1"));
    }
    if dim < 1 {
        return Err(Error::invalid("dim", "need at least 1"));
    }
    if !(spread > 0.0 && spread.is_finite()) {
        return Err(Error::invalid("spread", "must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect();
    let mut data = Vec::with_capacity(classes * per_class * dim);
    let mut labels = Vec::with_capacity(classes * per_class);
    for (k, center) in centers.iter().enumerate() {
        for _ in 0..per_class {
            for c in center {
                let noise: f64 = StandardNormal.sample(&mut rng);
                data.push(c + spread * noise);
            }
            labels.push(k);
        }
    }
    let features = Matrix::new(labels.len(), dim, data)?;
    Dataset::new(features, labels, classes)
}

/// Two interleaved half circles. Class 0 is the upper unit half circle,
/// class 1 the lower one shifted to `(1, 0.5)`; Gaussian noise of standard
/// deviation `noise` is added to both coordinates.
pub fn gen_two_moons(n: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if n < 2 {
        return Err(Error::invalid("n", "need at least 2 points"));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::invalid("noise", "must be nonnegative"));
    }
    let n_outer = n / 2;
    let n_inner = n - n_outer;
    let angle = |k: usize, count: usize| {
        if count > 1 {
            PI * k as f64 / (count - 1) as f64
        } else {
            0.0
        }
    };
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for k in 0..n_outer {
        let t = angle(k, n_outer);
        rows.push([t.cos(), t.sin()]);
        labels.push(0);
    }
    for k in 0..n_inner {
        let t = angle(k, n_inner);
        rows.push([1.0 - t.cos(), 0.5 - t.sin()]);
        labels.push(1);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Vec::with_capacity(2 * n);
    for row in rows {
        for v in row {
            if noise > 0.0 {
                let e: f64 = StandardNormal.sample(&mut rng);
                data.push(v + noise * e);
            } else {
                data.push(v);
            }
        }
    }
    Dataset::new(Matrix::new(n, 2, data)?, labels, 2)
}

/// Reads a headered CSV. Every column other than `label_column` must be
/// numeric and becomes a feature, in file order. The class count is one
/// more than the largest label.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let csv_err = |line: u64, message: String| Error::Csv {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => csv_err(1, format!("{other:?}")),
        })?;
    let headers = reader
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .clone();
    let label_idx = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .ok_or_else(|| csv_err(1, format!("header has no column named {label_column:?}")))?;
    if headers.len() < 2 {
        return Err(csv_err(
            1,
            "header needs at least one feature column".into(),
        ));
    }

    let dim = headers.len() - 1;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != headers.len() {
            return Err(csv_err(
                line,
                format!("expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (i, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if i == label_idx {
                labels.push(parse_label(cell).ok_or_else(|| {
                    csv_err(line, format!("label {cell:?} is not a nonnegative integer"))
                })?);
            } else {
                let v: f64 = cell.parse().map_err(|_| {
                    csv_err(
                        line,
                        format!("column {:?}: {cell:?} is not numeric", &headers[i]),
                    )
                })?;
                if !v.is_finite() {
                    return Err(csv_err(
                        line,
                        format!("column {:?}: non-finite value", &headers[i]),
                    ));
                }
                data.push(v);
            }
        }
    }
    if labels.is_empty() {
        return Err(csv_err(1, "no data rows".into()));
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(Matrix::new(labels.len(), dim, data)?, labels, class_count)
}

fn parse_label(cell: &str) -> Option<usize> {
    if let Ok(v) = cell.parse::<usize>() {
        return Some(v);
    }
    let v: f64 = cell.parse().ok()?;
    (v >= 0.0 && v.fract() == 0.0 && v < u32::MAX as f64).then_some(v as usize)
}

/// Writes features as `x0..x{d-1}` plus a trailing `label` column, using
/// shortest round-trip float formatting.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::new();
    for j in 0..dataset.dim() {
        out.push_str(&format!("x{j},"));
    }
    out.push_str(DEFAULT_LABEL_COLUMN);
    out.push('\n');
    for (row, label) in dataset.features.rows_iter().zip(&dataset.labels) {
        for v in row {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{label}\n"));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

fn read_u32_be(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx {
            path: path.to_path_buf(),
            offset,
            message: "unexpected end of file".into(),
        })
}

fn check_magic(bytes: &[u8], expected: u32, path: &Path) -> Result<()> {
    let actual = read_u32_be(bytes, 0, path)?;
    if actual != expected {
        return Err(Error::IdxMagic {
            path: path.to_path_buf(),
            expected,
            actual,
        });
    }
    Ok(())
}

/// Reads an IDX image/label pair (unsigned-byte payloads). Pixels are scaled
/// to `[0, 1]` and each image is flattened row-major into one feature row.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let (ipath, lpath) = (images_path.as_ref(), labels_path.as_ref());
    let images = fs::read(ipath).map_err(|e| Error::io(ipath, e))?;
    let label_bytes = fs::read(lpath).map_err(|e| Error::io(lpath, e))?;

    check_magic(&images, IDX_IMAGES_MAGIC, ipath)?;
    let n = read_u32_be(&images, 4, ipath)? as usize;
    let rows = read_u32_be(&images, 8, ipath)? as usize;
    let cols = read_u32_be(&images, 12, ipath)? as usize;
    let dim = rows * cols;
    let payload = &images[16..];
    if payload.len() != n * dim {
        return Err(Error::Idx {
            path: ipath.to_path_buf(),
            offset: 16 + payload.len().min(n * dim),
            message: format!("expected {} pixel bytes, found {}", n * dim, payload.len()),
        });
    }

    check_magic(&label_bytes, IDX_LABELS_MAGIC, lpath)?;
    let n_labels = read_u32_be(&label_bytes, 4, lpath)? as usize;
    if n_labels != n {
        return Err(Error::Idx {
            path: lpath.to_path_buf(),
            offset: 4,
            message: format!("{n_labels} labels for {n} images"),
        });
    }
    let labels_payload = &label_bytes[8..];
    if labels_payload.len() != n {
        return Err(Error::Idx {
            path: lpath.to_path_buf(),
            offset: 8 + labels_payload.len().min(n),
            message: format!("expected {n} label bytes, found {}", labels_payload.len()),
        });
    }

    let features = Matrix::new(n, dim, payload.iter().map(|&b| b as f64 / 255.0).collect())?;
    let labels: Vec<usize> = labels_payload.iter().map(|&b| b as usize).collect();
    let class_count = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(features, labels, class_count)
}

/// Seeded shuffle, then the first `ceil(n (1 - f))` rows go to train and
/// the rest to test.
pub fn split(dataset: &Dataset, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid(
            "test_fraction",
            "must lie strictly between 0 and 1",
        ));
    }
    let n = dataset.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    // tolerate representation error in n * (1 - f), e.g. 10 * 0.8
    let n_train = (n as f64 * (1.0 - test_fraction) - 1e-9).ceil() as usize;
    if n_train == 0 || n_train >= n {
        return Err(Error::invalid(
            "test_fraction",
            format!("splitting {n} rows leaves an empty side"),
        ));
    }
    let (train, test) = order.split_at(n_train);
    Ok((dataset.subset(train), dataset.subset(test)))
}
