//! IDX files as distributed for (Fashion-)MNIST: a big-endian `u32` magic,
//! big-endian `u32` dimension sizes, then raw unsigned bytes.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{DataError, Dataset};
use crate::scalar::Scalar;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Raw image tensor: `count` images of `rows x cols` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read(path: &Path) -> Result<Vec<u8>, DataError> {
    fs::read(path).map_err(|source| DataError::Io { path: path.to_owned(), source })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path, expected: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated { path: path.to_owned(), expected, actual: bytes.len() })
}

fn check_len(bytes: &[u8], expected: usize, path: &Path) -> Result<(), DataError> {
    match bytes.len() {
        n if n < expected => Err(DataError::Truncated { path: path.to_owned(), expected, actual: n }),
        n if n > expected => Err(DataError::TrailingBytes { path: path.to_owned(), extra: n - expected }),
        _ => Ok(()),
    }
}

fn parse_images(bytes: &[u8], path: &Path) -> Result<IdxImages, DataError> {
    let magic = be_u32(bytes, 0, path, 16)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic { path: path.to_owned(), expected: IMAGES_MAGIC, found: magic });
    }
    let count = be_u32(bytes, 4, path, 16)? as usize;
    let rows = be_u32(bytes, 8, path, 16)? as usize;
    let cols = be_u32(bytes, 12, path, 16)? as usize;
    check_len(bytes, 16 + count * rows * cols, path)?;
    Ok(IdxImages { count, rows, cols, pixels: bytes[16..].to_vec() })
}

fn parse_labels(bytes: &[u8], path: &Path) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0, path, 8)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic { path: path.to_owned(), expected: LABELS_MAGIC, found: magic });
    }
    let count = be_u32(bytes, 4, path, 8)? as usize;
    check_len(bytes, 8 + count, path)?;
    Ok(bytes[8..].to_vec())
}

pub fn read_idx_images(path: impl AsRef<Path>) -> Result<IdxImages, DataError> {
    let path = path.as_ref();
    parse_images(&read(path)?, path)
}

pub fn read_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>, DataError> {
    let path = path.as_ref();
    parse_labels(&read(path)?, path)
}

pub fn write_idx_images(path: impl AsRef<Path>, images: &IdxImages) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for v in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    fs::write(path, out).map_err(|source| DataError::Io { path: path.to_owned(), source })
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<(), DataError> {
    let path = path.as_ref();
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    fs::write(path, out).map_err(|source| DataError::Io { path: path.to_owned(), source })
}

/// Loads an image/label IDX pair as a 10-class dataset with pixels scaled to `[0, 1]`.
pub fn load_idx<T: Scalar>(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset<T>, DataError> {
    let images = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if images.count != labels.len() {
        return Err(DataError::CountMismatch { images: images.count, labels: labels.len() });
    }
    let d = images.rows * images.cols;
    let features = Array2::from_shape_vec((images.count, d), images.pixels.iter().map(|&p| T::lit(p as f64 / 255.0)).collect())
        .expect("pixel count checked against the header");
    Dataset::new(features, Some(labels.into_iter().map(usize::from).collect()), 10)
}

/// The four files of the Fashion-MNIST distribution.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FashionMnistFiles {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test_images: PathBuf,
    pub test_labels: PathBuf,
}

impl FashionMnistFiles {
    /// Standard file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            train_images: dir.join("train-images-idx3-ubyte"),
            train_labels: dir.join("train-labels-idx1-ubyte"),
            test_images: dir.join("t10k-images-idx3-ubyte"),
            test_labels: dir.join("t10k-labels-idx1-ubyte"),
        }
    }

    pub fn exist(&self) -> bool {
        [&self.train_images, &self.train_labels, &self.test_images, &self.test_labels]
            .iter()
            .all(|p| p.is_file())
    }

    pub fn load<T: Scalar>(&self) -> Result<(Dataset<T>, Dataset<T>), DataError> {
        Ok((
            load_idx(&self.train_images, &self.train_labels)?,
            load_idx(&self.test_images, &self.test_labels)?,
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
        // Two 28x28 images: image 0 has pixel p = p % 256, image 1 is all 255.
        let mut pixels: Vec<u8> = (0..784).map(|p| (p % 256) as u8).collect();
        pixels.extend(std::iter::repeat_n(255u8, 784));
        let mut img = vec![0x00, 0x00, 0x08, 0x03, 0, 0, 0, 2, 0, 0, 0, 28, 0, 0, 0, 28];
        img.extend(&pixels);
        let lbl = vec![0x00, 0x00, 0x08, 0x01, 0, 0, 0, 2, 9, 3];
        let (ip, lp) = (dir.join("img"), dir.join("lbl"));
        fs::write(&ip, img).unwrap();
        fs::write(&lp, lbl).unwrap();
        (ip, lp)
    }

    #[test]
    fn byte_level_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());
        let d: Dataset<f64> = load_idx(&ip, &lp).unwrap();
        assert_eq!((d.len(), d.dim(), d.num_classes()), (2, 784, 10));
        assert_eq!(d.labels(), Some(&[9, 3][..]));
        for p in 0..784 {
            assert_eq!(d.features()[(0, p)], (p % 256) as f64 / 255.0);
            assert_eq!(d.features()[(1, p)], 1.0);
        }
    }

    #[test]
    fn errors_are_distinct() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, lp) = fixture(dir.path());

        // swapped files: magic mismatch on both
        assert!(matches!(load_idx::<f32>(&lp, &ip), Err(DataError::BadMagic { found: LABELS_MAGIC, .. })));

        let short = dir.path().join("short");
        let mut bytes = fs::read(&ip).unwrap();
        bytes.truncate(100);
        fs::write(&short, &bytes).unwrap();
        assert!(matches!(read_idx_images(&short), Err(DataError::Truncated { expected: 1584, actual: 100, .. })));

        let three = dir.path().join("three");
        write_idx_labels(&three, &[1, 2, 3]).unwrap();
        assert!(matches!(load_idx::<f32>(&ip, &three), Err(DataError::CountMismatch { images: 2, labels: 3 })));

        let tiny = dir.path().join("tiny");
        fs::write(&tiny, [0u8, 0]).unwrap();
        assert!(matches!(read_idx_labels(&tiny), Err(DataError::Truncated { .. })));

        assert!(matches!(read_idx_labels(dir.path().join("missing")), Err(DataError::Io { .. })));
    }

    #[test]
    fn labels_above_nine_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let (ip, _) = fixture(dir.path());
        let lp = dir.path().join("l");
        write_idx_labels(&lp, &[0, 10]).unwrap();
        assert!(matches!(load_idx::<f32>(&ip, &lp), Err(DataError::LabelOutOfRange { label: 10, .. })));
    }
}
