//! MNIST IDX and CIFAR-10 binary ingestion, grayscale conversion,
//! rescaling and dataset construction.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::feature::{vectorize_bytes, FeatureConfig, VectorizedImage};
use crate::par;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 32 * 32;
const CIFAR_SIDE: usize = 32;

/// Byte image with planar channels (`channels × height × width`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImage {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub pixels: Vec<u8>,
}

impl RawImage {
    pub fn gray(height: usize, width: usize, pixels: Vec<u8>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{} bytes for a {height}×{width} image",
                pixels.len()
            )));
        }
        Ok(Self {
            height,
            width,
            channels: 1,
            pixels,
        })
    }

    pub fn at(&self, channel: usize, row: usize, col: usize) -> u8 {
        self.pixels[(channel * self.height + row) * self.width + col]
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawImageSet {
    pub images: Vec<RawImage>,
    pub labels: Vec<u8>,
    pub source: String,
}

impl RawImageSet {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::format(offset as u64, "truncated IDX header"))
}

fn magic_name(magic: u32) -> &'static str {
    match magic {
        IDX_IMAGES_MAGIC => "images (0x00000803)",
        IDX_LABELS_MAGIC => "labels (0x00000801)",
        _ => "unknown",
    }
}

/// Decodes an IDX3 image file (`0x00000803`, count, rows, cols, bytes).
pub fn parse_idx_images(bytes: &[u8]) -> Result<Vec<RawImage>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(
            0,
            format!(
                "expected images magic 0x{IDX_IMAGES_MAGIC:08x}, found 0x{magic:08x} ({})",
                magic_name(magic)
            ),
        ));
    }
    let count = be_u32(bytes, 4)? as usize;
    let rows = be_u32(bytes, 8)? as usize;
    let cols = be_u32(bytes, 12)? as usize;
    let size = rows * cols;
    let needed = 16 + count * size;
    if bytes.len() < needed {
        return Err(Error::format(
            bytes.len() as u64,
            format!(
                "truncated image payload: {count} images of {rows}×{cols} need {needed} bytes, file has {}",
                bytes.len()
            ),
        ));
    }
    Ok(bytes[16..needed]
        .chunks_exact(size.max(1))
        .take(count)
        .map(|px| RawImage {
            height: rows,
            width: cols,
            channels: 1,
            pixels: px.to_vec(),
        })
        .collect())
}

/// Decodes an IDX1 label file (`0x00000801`, count, bytes).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = be_u32(bytes, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(
            0,
            format!(
                "expected labels magic 0x{IDX_LABELS_MAGIC:08x}, found 0x{magic:08x} ({})",
                magic_name(magic)
            ),
        ));
    }
    let count = be_u32(bytes, 4)? as usize;
    if bytes.len() < 8 + count {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated label payload: {count} labels need {} bytes", 8 + count),
        ));
    }
    Ok(bytes[8..8 + count].to_vec())
}

pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<RawImageSet> {
    let images = parse_idx_images(&fs::read(images_path.as_ref())?)?;
    let labels = parse_idx_labels(&fs::read(labels_path.as_ref())?)?;
    if images.len() != labels.len() {
        return Err(Error::format(
            0,
            format!("{} images but {} labels", images.len(), labels.len()),
        ));
    }
    Ok(RawImageSet {
        images,
        labels,
        source: format!("mnist:{}", images_path.as_ref().display()),
    })
}

/// Standard file names of the MNIST training or test split inside `dir`.
pub fn mnist_paths(dir: &Path, train: bool) -> (std::path::PathBuf, std::path::PathBuf) {
    let prefix = if train { "train" } else { "t10k" };
    (
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
    )
}

/// Decodes CIFAR-10 binary records: 1 label byte then R, G, B planes of 32×32.
pub fn parse_cifar10(bytes: &[u8]) -> Result<(Vec<RawImage>, Vec<u8>)> {
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        let whole = bytes.len() / CIFAR_RECORD_LEN * CIFAR_RECORD_LEN;
        return Err(Error::format(
            whole as u64,
            format!(
                "size {} is not a multiple of the {CIFAR_RECORD_LEN}-byte record; trailing partial record",
                bytes.len()
            ),
        ));
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD_LEN);
    let mut labels = Vec::with_capacity(images.capacity());
    for rec in bytes.chunks_exact(CIFAR_RECORD_LEN) {
        labels.push(rec[0]);
        images.push(RawImage {
            height: CIFAR_SIDE,
            width: CIFAR_SIDE,
            channels: 3,
            pixels: rec[1..].to_vec(),
        });
    }
    Ok((images, labels))
}

pub fn load_cifar10<P: AsRef<Path>>(paths: &[P]) -> Result<RawImageSet> {
    let mut set = RawImageSet {
        images: Vec::new(),
        labels: Vec::new(),
        source: "cifar10".into(),
    };
    for p in paths {
        let (imgs, labels) = parse_cifar10(&fs::read(p.as_ref())?).map_err(|e| match e {
            Error::Format { offset, message } => Error::Format {
                offset,
                message: format!("{}: {message}", p.as_ref().display()),
            },
            other => other,
        })?;
        set.images.extend(imgs);
        set.labels.extend(labels);
    }
    Ok(set)
}

/// Training batches `data_batch_1..5.bin` or the test batch inside `dir`.
pub fn cifar10_paths(dir: &Path, train: bool) -> Vec<std::path::PathBuf> {
    if train {
        (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect()
    } else {
        vec![dir.join("test_batch.bin")]
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrayWeights {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl Default for GrayWeights {
    /// ITU-R BT.601 luma.
    fn default() -> Self {
        Self {
            r: 0.299,
            g: 0.587,
            b: 0.114,
        }
    }
}

/// Weighted luminance, rounded to the nearest byte. Single-channel images
/// pass through unchanged.
pub fn to_grayscale(img: &RawImage, w: &GrayWeights) -> RawImage {
    if img.channels == 1 {
        return img.clone();
    }
    let plane = img.height * img.width;
    let pixels = (0..plane)
        .map(|i| {
            let r = f64::from(img.pixels[i]);
            let g = f64::from(img.pixels[plane + i]);
            let b = f64::from(img.pixels[2 * plane + i]);
            (w.r * r + w.g * g + w.b * b).round().clamp(0.0, 255.0) as u8
        })
        .collect();
    RawImage {
        height: img.height,
        width: img.width,
        channels: 1,
        pixels,
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Resample {
    #[default]
    Bilinear,
    Nearest,
}

/// Resamples a single-channel image to `target × target` with pixel-center
/// alignment.
pub fn rescale(img: &RawImage, target: usize, method: Resample) -> Result<RawImage> {
    if target == 0 {
        return Err(Error::Domain("rescale target must be positive".into()));
    }
    if img.channels != 1 {
        return Err(Error::Domain("rescale expects a single-channel image".into()));
    }
    if img.height == target && img.width == target {
        return Ok(img.clone());
    }
    let sy = img.height as f64 / target as f64;
    let sx = img.width as f64 / target as f64;
    let src = |r: usize, c: usize| f64::from(img.pixels[r * img.width + c]);
    let mut pixels = Vec::with_capacity(target * target);
    for i in 0..target {
        for j in 0..target {
            let v = match method {
                Resample::Nearest => {
                    let r = (((i as f64 + 0.5) * sy) as usize).min(img.height - 1);
                    let c = (((j as f64 + 0.5) * sx) as usize).min(img.width - 1);
                    src(r, c)
                }
                Resample::Bilinear => {
                    let y = ((i as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
                    let x = ((j as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
                    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
                    let (y1, x1) = ((y0 + 1).min(img.height - 1), (x0 + 1).min(img.width - 1));
                    let (fy, fx) = (y - y0 as f64, x - x0 as f64);
                    let top = src(y0, x0) * (1.0 - fx) + src(y0, x1) * fx;
                    let bottom = src(y1, x0) * (1.0 - fx) + src(y1, x1) * fx;
                    top * (1.0 - fy) + bottom * fy
                }
            };
            pixels.push(v.round().clamp(0.0, 255.0) as u8);
        }
    }
    Ok(RawImage {
        height: target,
        width: target,
        channels: 1,
        pixels,
    })
}

/// Vectorized images with class labels, uniform in side and `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    images: Vec<VectorizedImage>,
    labels: Vec<usize>,
    side: usize,
    d: usize,
}

impl Dataset {
    pub fn new(images: Vec<VectorizedImage>, labels: Vec<usize>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::Shape(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        let first = images.first().ok_or_else(|| Error::Domain("empty dataset".into()))?;
        let (side, d) = (first.side(), first.d());
        if images.iter().any(|i| i.side() != side || i.d() != d) {
            return Err(Error::Shape("mixed image sides or feature dimensions".into()));
        }
        Ok(Self {
            images,
            labels,
            side,
            d,
        })
    }

    pub fn images(&self) -> &[VectorizedImage] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// Sorted distinct labels.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    pub fn count_of(&self, class: usize) -> usize {
        self.labels.iter().filter(|&&l| l == class).count()
    }
}

/// Pipeline settings for [`build_dataset`].
#[derive(Clone, Debug, PartialEq)]
pub struct DatasetConfig {
    pub feature: FeatureConfig,
    pub side: usize,
    /// Keep only these classes; `None` keeps all.
    pub classes: Option<Vec<usize>>,
    /// At most this many samples per class, first in file order.
    pub per_class: Option<usize>,
    pub gray: GrayWeights,
    pub resample: Resample,
}

impl DatasetConfig {
    pub fn new(d: usize, side: usize) -> Result<Self> {
        Ok(Self {
            feature: FeatureConfig::new(d)?,
            side,
            classes: None,
            per_class: None,
            gray: GrayWeights::default(),
            resample: Resample::Bilinear,
        })
    }
}

/// grayscale → rescale → normalize → embed, per selected sample.
pub fn build_dataset(raw: &RawImageSet, cfg: &DatasetConfig) -> Result<Dataset> {
    if cfg.side == 0 || !cfg.side.is_power_of_two() {
        return Err(Error::Layout(format!("target side {} is not a power of 2", cfg.side)));
    }
    let mut taken = std::collections::HashMap::<usize, usize>::new();
    let mut selected = Vec::new();
    for (i, &label) in raw.labels.iter().enumerate() {
        let label = usize::from(label);
        if let Some(classes) = &cfg.classes {
            if !classes.contains(&label) {
                continue;
            }
        }
        let count = taken.entry(label).or_default();
        if cfg.per_class.is_some_and(|cap| *count >= cap) {
            continue;
        }
        *count += 1;
        selected.push(i);
    }
    if selected.is_empty() {
        return Err(Error::Domain("sample selection is empty".into()));
    }
    let images = par::map(&selected, |&i| -> Result<VectorizedImage> {
        let gray = to_grayscale(&raw.images[i], &cfg.gray);
        let scaled = rescale(&gray, cfg.side, cfg.resample)?;
        vectorize_bytes(&scaled.pixels, cfg.side, &cfg.feature)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let labels = selected.iter().map(|&i| usize::from(raw.labels[i])).collect();
    Dataset::new(images, labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn idx_images(count: u32, rows: u32, cols: u32, payload: &[u8]) -> Vec<u8> {
        let mut b = Vec::new();
        for v in [IDX_IMAGES_MAGIC, count, rows, cols] {
            b.extend(v.to_be_bytes());
        }
        b.extend(payload);
        b
    }

    #[test]
    fn idx_images_with_labels_magic_names_both() {
        let mut bytes = idx_images(1, 1, 1, &[0]);
        bytes[..4].copy_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
        let err = parse_idx_images(&bytes).unwrap_err().to_string();
        assert!(err.contains("0x00000803") && err.contains("0x00000801"), "{err}");
    }

    #[test]
    fn truncated_idx_payload() {
        let bytes = idx_images(2, 2, 2, &[1, 2, 3, 4, 5]);
        assert!(matches!(parse_idx_images(&bytes), Err(Error::Format { .. })));
    }

    #[test]
    fn grayscale_weights() {
        let img = |r, g, b| RawImage {
            height: 1,
            width: 1,
            channels: 3,
            pixels: vec![r, g, b],
        };
        let w = GrayWeights::default();
        assert_eq!(to_grayscale(&img(255, 255, 255), &w).pixels, vec![255]);
        assert_eq!(to_grayscale(&img(0, 0, 0), &w).pixels, vec![0]);
        assert_eq!(to_grayscale(&img(255, 0, 0), &w).pixels, vec![76]);
    }

    #[test]
    fn rescale_constant_and_identity() {
        let c = RawImage::gray(28, 28, vec![77; 784]).unwrap();
        let out = rescale(&c, 16, Resample::Bilinear).unwrap();
        assert_eq!(out.pixels, vec![77; 256]);
        let img = RawImage::gray(4, 4, (0..16).collect()).unwrap();
        assert_eq!(rescale(&img, 4, Resample::Bilinear).unwrap(), img);
        assert!(matches!(rescale(&img, 0, Resample::Bilinear), Err(Error::Domain(_))));
    }

    #[test]
    fn checkerboard_upscale() {
        let img = RawImage::gray(2, 2, vec![0, 255, 255, 0]).unwrap();
        let out = rescale(&img, 4, Resample::Bilinear).unwrap();
        let at = |r: usize, c: usize| out.pixels[r * 4 + c];
        assert_eq!((at(0, 0), at(0, 3), at(3, 0), at(3, 3)), (0, 255, 255, 0));
        // sample coordinates 0.25/0.75: weights (.75,.25) → 255·0.375 = 95.625
        assert_eq!(at(1, 1), 96);
        assert_eq!(at(1, 2), 159); // 255·0.625 = 159.375
        for r in 1..3 {
            for c in 1..3 {
                assert!(at(r, c) > 0 && at(r, c) < 255);
            }
        }
    }

    #[test]
    fn cifar_size_must_be_record_multiple() {
        let bytes = vec![0u8; CIFAR_RECORD_LEN * 2 + 10];
        match parse_cifar10(&bytes) {
            Err(Error::Format { offset, .. }) => assert_eq!(offset, 2 * CIFAR_RECORD_LEN as u64),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_zero_image_pipeline() {
        let raw = RawImageSet {
            images: vec![RawImage::gray(28, 28, vec![0; 784]).unwrap()],
            labels: vec![3],
            source: "test".into(),
        };
        let ds = build_dataset(&raw, &DatasetConfig::new(2, 16).unwrap()).unwrap();
        assert_eq!(ds.len(), 1);
        for j in 0..256 {
            assert_eq!(ds.images()[0].pixel(j), &[1.0, 0.0]);
        }
    }

    #[test]
    fn selection_and_cap() {
        let raw = RawImageSet {
            images: (0..10)
                .map(|i| RawImage::gray(2, 2, vec![i * 20; 4]).unwrap())
                .collect(),
            labels: vec![0, 1, 2, 0, 1, 2, 0, 1, 2, 0],
            source: "test".into(),
        };
        let mut cfg = DatasetConfig::new(2, 2).unwrap();
        cfg.classes = Some(vec![0, 2]);
        cfg.per_class = Some(2);
        let ds = build_dataset(&raw, &cfg).unwrap();
        assert_eq!(ds.labels(), &[0, 2, 0, 2]);
        cfg.classes = Some(vec![7]);
        assert!(matches!(build_dataset(&raw, &cfg), Err(Error::Domain(_))));
    }
}
