use std::fs;
use std::path::Path;

use super::{DataError, Dataset};
use crate::numerics::Matrix;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

struct Header {
    dims: Vec<usize>,
    offset: usize,
}

fn read_header(path: &Path, bytes: &[u8], magic: u32, ndims: usize) -> Result<Header, DataError> {
    let offset = 4 * (1 + ndims);
    if bytes.len() < 4 {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected: offset,
            found: bytes.len(),
        });
    }
    let word = |k: usize| u32::from_be_bytes(bytes[4 * k..4 * k + 4].try_into().expect("4-byte slice"));
    let found = word(0);
    if found != magic {
        return Err(DataError::BadMagic {
            path: path.to_path_buf(),
            found,
            expected: magic,
        });
    }
    if bytes.len() < offset {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected: offset,
            found: bytes.len(),
        });
    }
    let dims: Vec<usize> = (1..=ndims).map(|k| word(k) as usize).collect();
    let expected = offset + dims.iter().product::<usize>();
    if bytes.len() < expected {
        return Err(DataError::Truncated {
            path: path.to_path_buf(),
            expected,
            found: bytes.len(),
        });
    }
    Ok(Header { dims, offset })
}

/// Reads an IDX image file (unsigned bytes, `n × rows × cols`) and its label
/// file. Pixels are divided by 255 and each image is flattened row-major.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset, DataError> {
    let images = fs::read(images_path).map_err(|e| DataError::io(images_path, e))?;
    let labels = fs::read(labels_path).map_err(|e| DataError::io(labels_path, e))?;

    let ih = read_header(images_path, &images, IMAGES_MAGIC, 3)?;
    let lh = read_header(labels_path, &labels, LABELS_MAGIC, 1)?;
    let (n, rows, cols) = (ih.dims[0], ih.dims[1], ih.dims[2]);
    if n != lh.dims[0] {
        return Err(DataError::CountMismatch {
            images: n,
            labels: lh.dims[0],
        });
    }
    let pixels = &images[ih.offset..ih.offset + n * rows * cols];
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let samples = Matrix::from_vec(n, rows * cols, data)?;
    let labels = labels[lh.offset..lh.offset + n].iter().map(|&l| l as usize).collect();
    Dataset::new(samples, labels)
}

/// Writes `n` square images given as bytes, `side × side` each.
pub fn write_idx_images(path: &Path, side: usize, pixels: &[u8]) -> Result<(), DataError> {
    let per = side * side;
    if per == 0 || pixels.len() % per != 0 {
        return Err(DataError::Invalid(format!(
            "{} bytes is not a whole number of {side}×{side} images",
            pixels.len()
        )));
    }
    let mut out = Vec::with_capacity(16 + pixels.len());
    for word in [IMAGES_MAGIC, (pixels.len() / per) as u32, side as u32, side as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    fs::write(path, out).map_err(|e| DataError::io(path, e))
}

pub fn write_idx_labels(path: &Path, labels: &[u8]) -> Result<(), DataError> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|e| DataError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(dir: &Path, side: usize, pixels: &[u8], labels: &[u8]) -> (std::path::PathBuf, std::path::PathBuf) {
        let ip = dir.join("images");
        let lp = dir.join("labels");
        write_idx_images(&ip, side, pixels).unwrap();
        write_idx_labels(&lp, labels).unwrap();
        (ip, lp)
    }

    #[test]
    fn scales_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = pair(dir.path(), 2, &[0, 255, 128, 64], &[7]);
        let d = load_idx(&ip, &lp).unwrap();
        assert_eq!(d.samples().shape(), (1, 4));
        assert_eq!(d.samples().row(0), &[0.0, 1.0, 128.0 / 255.0, 64.0 / 255.0]);
        assert!((d.samples()[(0, 2)] - 0.50196).abs() < 1e-5);
        assert!((d.samples()[(0, 3)] - 0.25098).abs() < 1e-5);
        assert_eq!(d.labels(), &[7]);
    }

    #[test]
    fn count_mismatch_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = pair(dir.path(), 1, &[1, 2, 3], &[0, 1]);
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::CountMismatch { images: 3, labels: 2 })
        ));
    }

    #[test]
    fn bad_magic_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = pair(dir.path(), 1, &[1], &[0]);
        // label file passed as images
        assert!(matches!(
            load_idx(&lp, &lp),
            Err(DataError::BadMagic { found: LABELS_MAGIC, expected: IMAGES_MAGIC, .. })
        ));
        assert!(matches!(load_idx(&ip, &ip), Err(DataError::BadMagic { .. })));
    }

    #[test]
    fn truncation_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = pair(dir.path(), 2, &[1, 2, 3, 4, 5, 6, 7, 8], &[0, 1]);
        let bytes = fs::read(&ip).unwrap();
        fs::write(&ip, &bytes[..bytes.len() - 1]).unwrap();
        assert!(matches!(
            load_idx(&ip, &lp),
            Err(DataError::Truncated { expected: 24, found: 23, .. })
        ));
        fs::write(&ip, &bytes[..10]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(DataError::Truncated { .. })));
        fs::write(&ip, &bytes[..2]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(DataError::Truncated { .. })));
    }

    #[test]
    fn missing_file_is_io() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("nope");
        assert!(matches!(load_idx(&p, &p), Err(DataError::Io { .. })));
    }
}
