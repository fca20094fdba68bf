//! Datasets, paired-view augmentation and batching.
//!
//! Training code only ever sees [`Unlabeled`], a view of a dataset's samples
//! with no path to the labels. Labels are read by the probe alone.

mod augment;
mod batch;
mod idx;

pub use augment::{augment_one, augment_pair, AugmentKind, AugmentSpec};
pub use batch::{epoch_batches, epoch_order, BatchPair};
pub use idx::{load_idx, write_idx_images, write_idx_labels, IMAGES_MAGIC, LABELS_MAGIC};

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::numerics::{Matrix, NumericsError, Rng};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: bad magic {found:#010x}, expected {expected:#010x}")]
    BadMagic { path: PathBuf, found: u32, expected: u32 },
    #[error("{path}: truncated, expected {expected} bytes, found {found}")]
    Truncated { path: PathBuf, expected: usize, found: usize },
    #[error("count mismatch: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("invalid dataset: {0}")]
    Invalid(String),
    #[error("invalid augmentation: {0}")]
    Augment(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Matrix,
    labels: Vec<usize>,
    num_classes: usize,
}

impl Dataset {
    /// `num_classes` is one past the largest label.
    pub fn new(samples: Matrix, labels: Vec<usize>) -> Result<Self, DataError> {
        if samples.rows() != labels.len() {
            return Err(DataError::CountMismatch {
                images: samples.rows(),
                labels: labels.len(),
            });
        }
        if !samples.all_finite() {
            return Err(DataError::Invalid("non-finite sample value".into()));
        }
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Ok(Dataset {
            samples,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn samples(&self) -> &Matrix {
        &self.samples
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Samples without labels, for augmentation and training.
    pub fn unlabeled(&self) -> Unlabeled<'_> {
        Unlabeled { samples: &self.samples }
    }

    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: self.samples.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Same samples with new labels.
    pub fn with_labels(&self, labels: Vec<usize>) -> Result<Dataset, DataError> {
        Dataset::new(self.samples.clone(), labels)
    }

    /// Counts per class, indexed by label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// CSV with header `x_0,…,x_{d−1},label`.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header: Vec<String> = (0..self.dim()).map(|k| format!("x_{k}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        for (row, label) in self.samples.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.push(label.to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| DataError::io(path, e))?;
        Ok(())
    }
}

/// Borrowed samples with the labels out of reach.
#[derive(Debug, Clone, Copy)]
pub struct Unlabeled<'a> {
    samples: &'a Matrix,
}

impl<'a> Unlabeled<'a> {
    pub fn new(samples: &'a Matrix) -> Self {
        Unlabeled { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.samples.cols()
    }

    pub fn row(&self, i: usize) -> &'a [f64] {
        self.samples.row(i)
    }

    pub fn samples(&self) -> &'a Matrix {
        self.samples
    }
}

/// Deterministic class centers whose nearest pair is exactly `separation`
/// apart.
///
/// With `r = separation/√2`: up to `dim` classes sit at `r·e_k`. Up to `2·dim`
/// classes (for `dim ≥ 2`) also use `−r·e_k`, antipodal pairs then being
/// farther apart. Otherwise the centers lie on the first axis at multiples of
/// `separation`.
pub fn blob_centers(num_classes: usize, dim: usize, separation: f64) -> Matrix {
    let r = separation / std::f64::consts::SQRT_2;
    if num_classes <= dim {
        Matrix::from_fn(num_classes, dim, |c, k| if k == c { r } else { 0.0 })
    } else if dim >= 2 && num_classes <= 2 * dim {
        Matrix::from_fn(num_classes, dim, |c, k| match (k == c % dim, c < dim) {
            (true, true) => r,
            (true, false) => -r,
            _ => 0.0,
        })
    } else {
        Matrix::from_fn(num_classes, dim, |c, k| if k == 0 { c as f64 * separation } else { 0.0 })
    }
}

/// Isotropic unit-variance Gaussian clusters around [`blob_centers`]. Sample
/// `i` has label `i mod num_classes`.
pub fn make_blobs(
    n_per_class: usize,
    num_classes: usize,
    dim: usize,
    separation: f64,
    rng: &mut Rng,
) -> Result<Dataset, DataError> {
    if n_per_class == 0 || num_classes == 0 || dim == 0 {
        return Err(DataError::Invalid("blob counts must be at least 1".into()));
    }
    if !(separation > 0.0 && separation.is_finite()) {
        return Err(DataError::Invalid(format!("separation must be positive, got {separation}")));
    }
    let centers = blob_centers(num_classes, dim, separation);
    let n = n_per_class * num_classes;
    let labels: Vec<usize> = (0..n).map(|i| i % num_classes).collect();
    let samples = Matrix::from_fn(n, dim, |i, k| centers[(labels[i], k)] + rng.normal());
    Dataset::new(samples, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nearest_centroid_accuracy(d: &Dataset) -> f64 {
        let k = d.num_classes();
        let mut sums = Matrix::zeros(k, d.dim());
        let counts = d.class_counts();
        for (row, &l) in d.samples().iter_rows().zip(d.labels()) {
            for (s, v) in sums.row_mut(l).iter_mut().zip(row) {
                *s += v / counts[l] as f64;
            }
        }
        let dist = crate::numerics::pairwise_sqdist(d.samples(), &sums).unwrap();
        let pred = dist.map(|v| -v).argmax_rows();
        pred.iter().zip(d.labels()).filter(|(p, l)| p == l).count() as f64 / d.len() as f64
    }

    #[test]
    fn single_class_blobs_share_a_label() {
        let d = make_blobs(10, 1, 3, 1.0, &mut Rng::new(0)).unwrap();
        assert!(d.labels().iter().all(|&l| l == 0));
        assert_eq!(d.num_classes(), 1);
    }

    #[test]
    fn far_blobs_are_separable_by_nearest_centroid() {
        let d = make_blobs(50, 3, 2, 100.0, &mut Rng::new(1)).unwrap();
        assert_eq!(nearest_centroid_accuracy(&d), 1.0);
    }

    #[test]
    fn blobs_are_deterministic() {
        let a = make_blobs(20, 4, 5, 3.0, &mut Rng::new(2)).unwrap();
        let b = make_blobs(20, 4, 5, 3.0, &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.class_counts(), vec![20; 4]);
    }

    #[test]
    fn centers_respect_separation() {
        for (k, dim) in [(2, 1), (2, 2), (3, 2), (4, 2), (4, 16), (7, 3), (9, 2)] {
            let c = blob_centers(k, dim, 4.0);
            let d = crate::numerics::pairwise_sqdist(&c, &c).unwrap();
            let mut min = f64::INFINITY;
            for i in 0..k {
                for j in 0..k {
                    if i != j {
                        min = min.min(d[(i, j)].sqrt());
                    }
                }
            }
            assert!((min - 4.0).abs() <= 1e-12, "{k} {dim}: {min}");
        }
    }

    #[test]
    fn blob_sample_statistics() {
        let d = make_blobs(4000, 2, 1, 4.0, &mut Rng::new(3)).unwrap();
        let c = blob_centers(2, 1, 4.0);
        for class in 0..2 {
            let xs: Vec<f64> = d
                .samples()
                .iter_rows()
                .zip(d.labels())
                .filter(|(_, &l)| l == class)
                .map(|(r, _)| r[0] - c[(class, 0)])
                .collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
            assert!(mean.abs() < 0.06 && (var.sqrt() - 1.0).abs() < 0.05, "{mean} {var}");
        }
    }

    #[test]
    fn rejects_bad_blob_args_and_mismatched_labels() {
        assert!(make_blobs(0, 2, 2, 1.0, &mut Rng::new(0)).is_err());
        assert!(make_blobs(2, 2, 2, 0.0, &mut Rng::new(0)).is_err());
        assert!(matches!(
            Dataset::new(Matrix::zeros(3, 2), vec![0, 1]),
            Err(DataError::CountMismatch { images: 3, labels: 2 })
        ));
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("blobs.csv");
        let d = make_blobs(1, 3, 2, 1.0, &mut Rng::new(4)).unwrap();
        d.write_csv(&path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["x_0", "x_1", "label"]);
        let rows: Vec<csv::StringRecord> = r.records().map(|x| x.unwrap()).collect();
        assert_eq!(rows.len(), 3);
        for (rec, (row, l)) in rows.iter().zip(d.samples().iter_rows().zip(d.labels())) {
            assert_eq!(rec[0].parse::<f64>().unwrap(), row[0]);
            assert_eq!(rec[2].parse::<usize>().unwrap(), *l);
        }
    }
}
