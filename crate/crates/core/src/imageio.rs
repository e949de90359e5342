//! MNIST IDX container parsing, stratified subset selection, and binarization.
//!
//! The IDX layout is the one MNIST ships in: a big-endian header (magic,
//! count, and for images rows/cols) followed by one `u8` per pixel or label.
//! Files may be gzip-compressed; compression is detected from the first two
//! bytes, not the file name.

use std::fs::File;
use std::io::Read;
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// MNIST images are 28x28; the filtration parameters assume this.
pub const MNIST_SIDE: usize = 28;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("truncated header at byte offset {offset}: need {needed} bytes, have {have}")]
    TruncatedHeader {
        offset: usize,
        needed: usize,
        have: usize,
    },
    #[error("bad magic 0x{found:08x} at byte offset 0 (expected 0x{expected:08x})")]
    BadMagic { found: u32, expected: u32 },
    #[error("label file passed where image file expected (magic 0x{0:08x} at byte offset 0)")]
    LabelFileAsImages(u32),
    #[error("image file passed where label file expected (magic 0x{0:08x} at byte offset 0)")]
    ImageFileAsLabels(u32),
    #[error("unsupported image dimensions {rows}x{cols} at byte offset 8 (expected 28x28)")]
    DimensionMismatch { rows: usize, cols: usize },
    #[error("truncated payload at byte offset {offset}: need {needed} bytes, have {have}")]
    TruncatedPayload {
        offset: usize,
        needed: usize,
        have: usize,
    },
    #[error("label value {value} out of range 0..=9 at byte offset {offset}")]
    LabelOutOfRange { offset: usize, value: u8 },
}

#[derive(Debug, Error)]
pub enum SubsetError {
    #[error("requested {requested} images but only {available} available")]
    Insufficient { requested: usize, available: usize },
    #[error("class {class} has {available} images, stratification needs {needed}")]
    ClassExhausted {
        class: u8,
        available: usize,
        needed: usize,
    },
}

/// A grayscale image with intensities normalized to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    /// Row-major intensities, `values[row * width + col]`.
    pub values: Vec<f64>,
}

impl GrayImage {
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }
}

/// A `{0, 1}` mask with the same layout as [`GrayImage`].
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryImage {
    pub width: usize,
    pub height: usize,
    pub mask: Vec<u8>,
}

impl BinaryImage {
    pub fn get(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col] == 1
    }

    pub fn foreground_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Images with class labels and a train/test split over their indices.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<u8>,
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(images: Vec<GrayImage>, labels: Vec<u8>) -> Self {
        assert_eq!(images.len(), labels.len());
        LabeledDataset {
            images,
            labels,
            train_indices: Vec::new(),
            test_indices: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, IdxError> {
    let wrap = |source| IdxError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut raw = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(wrap)?;
    // gzip sniffing: 0x1f 0x8b
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(&raw[..])
            .read_to_end(&mut out)
            .map_err(wrap)?;
        return Ok(out);
    }
    Ok(raw)
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32, IdxError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(IdxError::TruncatedHeader {
            offset,
            needed: 4,
            have: bytes.len().saturating_sub(offset),
        });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parse an in-memory IDX image payload into normalized images.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<GrayImage>, IdxError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        if magic == LABEL_MAGIC {
            return Err(IdxError::LabelFileAsImages(magic));
        }
        return Err(IdxError::BadMagic {
            found: magic,
            expected: IMAGE_MAGIC,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    if rows != MNIST_SIDE || cols != MNIST_SIDE {
        return Err(IdxError::DimensionMismatch { rows, cols });
    }
    let pixels = rows * cols;
    let needed = count * pixels;
    let payload = &bytes[16..];
    if payload.len() < needed {
        return Err(IdxError::TruncatedPayload {
            offset: 16 + payload.len(),
            needed: needed - payload.len(),
            have: payload.len(),
        });
    }
    let images = payload[..needed]
        .chunks_exact(pixels)
        .map(|chunk| GrayImage {
            width: cols,
            height: rows,
            values: chunk.iter().map(|&b| f64::from(b) / 255.0).collect(),
        })
        .collect();
    Ok(images)
}

/// Parse an in-memory IDX label payload.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>, IdxError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != LABEL_MAGIC {
        if magic == IMAGE_MAGIC {
            return Err(IdxError::ImageFileAsLabels(magic));
        }
        return Err(IdxError::BadMagic {
            found: magic,
            expected: LABEL_MAGIC,
        });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() < count {
        return Err(IdxError::TruncatedPayload {
            offset: 8 + payload.len(),
            needed: count - payload.len(),
            have: payload.len(),
        });
    }
    for (i, &b) in payload[..count].iter().enumerate() {
        if b > 9 {
            return Err(IdxError::LabelOutOfRange {
                offset: 8 + i,
                value: b,
            });
        }
    }
    Ok(payload[..count].to_vec())
}

/// Load images from a raw or gzip-compressed IDX file.
pub fn load_idx_images(path: &Path) -> Result<Vec<GrayImage>, IdxError> {
    parse_idx_images(&read_file(path)?)
}

/// Load labels from a raw or gzip-compressed IDX file.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>, IdxError> {
    parse_idx_labels(&read_file(path)?)
}

/// Re-encode images into IDX bytes. Quantization inverts the `/255`
/// normalization exactly, so `encode(parse(x)) == x` for valid payloads.
pub fn encode_idx_images(images: &[GrayImage]) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.len() * MNIST_SIDE * MNIST_SIDE);
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.len() as u32).to_be_bytes());
    out.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    out.extend_from_slice(&(MNIST_SIDE as u32).to_be_bytes());
    for img in images {
        out.extend(img.values.iter().map(|&v| (v * 255.0).round() as u8));
    }
    out
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Allocate `total` slots across classes proportionally to `counts`,
/// rounding by largest remainder so each class is within one of its exact
/// proportional share.
fn proportional_allocation(counts: &[usize], total: usize) -> Vec<usize> {
    let sum: usize = counts.iter().sum();
    if sum == 0 || total == 0 {
        return vec![0; counts.len()];
    }
    let mut alloc: Vec<usize> = Vec::with_capacity(counts.len());
    let mut fracs: Vec<(f64, usize)> = Vec::with_capacity(counts.len());
    let mut assigned = 0usize;
    for (class, &c) in counts.iter().enumerate() {
        let quota = total as f64 * c as f64 / sum as f64;
        let base = quota.floor() as usize;
        alloc.push(base);
        assigned += base;
        fracs.push((quota - base as f64, class));
    }
    // Largest fractional part first; ties favor the lower class id.
    fracs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    for &(_, class) in fracs.iter().take(total - assigned) {
        alloc[class] += 1;
    }
    alloc
}

/// Draw a stratified, seeded train/test subset. Per-class counts stay within
/// one image of exact proportionality, and the two index sets are disjoint.
pub fn subset(
    dataset: &LabeledDataset,
    n_train: usize,
    n_test: usize,
    seed: u64,
) -> Result<LabeledDataset, SubsetError> {
    let total = dataset.len();
    if n_train + n_test > total {
        return Err(SubsetError::Insufficient {
            requested: n_train + n_test,
            available: total,
        });
    }

    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); 10];
    for (i, &label) in dataset.labels.iter().enumerate() {
        by_class[label as usize].push(i);
    }
    let counts: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let train_alloc = proportional_allocation(&counts, n_train);
    let test_alloc = proportional_allocation(&counts, n_test);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_sel = Vec::with_capacity(n_train);
    let mut test_sel = Vec::with_capacity(n_test);
    for class in 0..10 {
        let needed = train_alloc[class] + test_alloc[class];
        if needed > counts[class] {
            return Err(SubsetError::ClassExhausted {
                class: class as u8,
                available: counts[class],
                needed,
            });
        }
        let mut pool = by_class[class].clone();
        pool.shuffle(&mut rng);
        train_sel.extend_from_slice(&pool[..train_alloc[class]]);
        test_sel.extend_from_slice(&pool[train_alloc[class]..needed]);
    }
    train_sel.sort_unstable();
    test_sel.sort_unstable();

    let mut images = Vec::with_capacity(n_train + n_test);
    let mut labels = Vec::with_capacity(n_train + n_test);
    for &i in train_sel.iter().chain(test_sel.iter()) {
        images.push(dataset.images[i].clone());
        labels.push(dataset.labels[i]);
    }
    Ok(LabeledDataset {
        images,
        labels,
        train_indices: (0..n_train).collect(),
        test_indices: (n_train..n_train + n_test).collect(),
    })
}

/// Threshold an image; a pixel is foreground iff its intensity is strictly
/// greater than `threshold`.
pub fn binarize(img: &GrayImage, threshold: f64) -> BinaryImage {
    BinaryImage {
        width: img.width,
        height: img.height,
        mask: img
            .values
            .iter()
            .map(|&v| u8::from(v > threshold))
            .collect(),
    }
}
