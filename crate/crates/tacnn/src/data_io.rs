//! Fashion-MNIST ingestion: IDX parsing, normalization, batching, fetching.
//!
//! IDX containers are big-endian: a 4-byte magic (0x00000803 for images,
//! 0x00000801 for labels), one 4-byte size per dimension, then the raw byte
//! payload. Files may arrive gzip-compressed; the 0x1f8b prefix is sniffed
//! and handled transparently.

use crate::encoding::FeaturePlane;
use crate::error::{Error, Result};
use crate::precision::Real;
use crate::rng;
use flate2::read::GzDecoder;
use std::io::Read;
use std::path::{Path, PathBuf};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// The standard four-file Fashion-MNIST distribution.
pub const DATASET_FILES: [&str; 4] = [
    "train-images-idx3-ubyte.gz",
    "train-labels-idx1-ubyte.gz",
    "t10k-images-idx3-ubyte.gz",
    "t10k-labels-idx1-ubyte.gz",
];

pub const DEFAULT_BASE_URL: &str = "http://fashion-mnist.s3-website.eu-central-1.amazonaws.com";

/// Raw images straight out of an IDX container.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// count * rows * cols bytes, row-major per image.
    pub pixels: Vec<u8>,
}

/// A matched image/label pair for one split, dims pinned to 28x28.
#[derive(Debug, Clone)]
pub struct RawDataset {
    pub images: IdxImages,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn new(images: IdxImages, labels: Vec<u8>) -> Result<Self> {
        if images.count != labels.len() {
            return Err(Error::dimension("dataset size", images.count, labels.len()));
        }
        if images.rows != 28 || images.cols != 28 {
            return Err(Error::dimension(
                "image dims",
                "28x28",
                format!("{}x{}", images.rows, images.cols),
            ));
        }
        Ok(RawDataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Decompress if the payload carries the gzip prefix.
fn gunzip_if_needed(bytes: &[u8]) -> Result<Vec<u8>> {
    if bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b {
        let mut out = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut out)
            .map_err(|e| Error::Parse {
                offset: 0,
                message: format!("gzip decode failed: {e}"),
            })?;
        Ok(out)
    } else {
        Ok(bytes.to_vec())
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::Parse {
            offset,
            message: format!("header needs 4 bytes at offset {offset}, file has {}", bytes.len()),
        })
}

/// Parse an IDX image container (raw or gzipped).
pub fn parse_idx_images(bytes: &[u8]) -> Result<IdxImages> {
    let bytes = gunzip_if_needed(bytes)?;
    let magic = read_u32_be(&bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IMAGE_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(&bytes, 4)? as usize;
    let rows = read_u32_be(&bytes, 8)? as usize;
    let cols = read_u32_be(&bytes, 12)? as usize;
    let expected = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::Parse {
            offset: 4,
            message: format!("dimension overflow: {count}x{rows}x{cols}"),
        })?;
    let payload = &bytes[16..];
    if payload.len() != expected {
        return Err(Error::Parse {
            offset: 16,
            message: format!(
                "image payload is {} bytes, expected {expected} ({count} x {rows} x {cols})",
                payload.len()
            ),
        });
    }
    Ok(IdxImages {
        count,
        rows,
        cols,
        pixels: payload.to_vec(),
    })
}

/// Parse an IDX label container (raw or gzipped); labels must be 0..=9.
pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let bytes = gunzip_if_needed(bytes)?;
    let magic = read_u32_be(&bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {LABEL_MAGIC:#010x}"),
        });
    }
    let count = read_u32_be(&bytes, 4)? as usize;
    let payload = &bytes[8..];
    if payload.len() != count {
        return Err(Error::Parse {
            offset: 8,
            message: format!("label payload is {} bytes, expected {count}", payload.len()),
        });
    }
    for (i, &label) in payload.iter().enumerate() {
        if label > 9 {
            return Err(Error::Parse {
                offset: 8 + i,
                message: format!("label {label} out of range 0..=9 at index {i}"),
            });
        }
    }
    Ok(payload.to_vec())
}

/// Encode images back into IDX bytes (round-trip counterpart of
/// [`parse_idx_images`]).
pub fn serialize_idx_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGE_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

pub fn serialize_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Normalized dataset ready for the model: one plane per sample with every
/// pixel byte divided by 255.
pub struct Dataset<T: Real> {
    images: Vec<FeaturePlane<T>>,
    labels: Vec<u8>,
}

/// Borrowed view of one sample.
pub struct Sample<'a, T: Real> {
    pub planes: &'a [FeaturePlane<T>],
    pub label: u8,
}

impl<T: Real> Dataset<T> {
    pub fn from_parts(images: Vec<FeaturePlane<T>>, labels: Vec<u8>) -> Result<Self> {
        if images.len() != labels.len() {
            return Err(Error::dimension("dataset size", images.len(), labels.len()));
        }
        Ok(Dataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn sample(&self, index: usize) -> Sample<'_, T> {
        Sample {
            planes: std::slice::from_ref(&self.images[index]),
            label: self.labels[index],
        }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    /// Keep the first `n` samples.
    pub fn truncated(mut self, n: usize) -> Self {
        self.images.truncate(n);
        self.labels.truncate(n);
        self
    }

    #[cfg(test)]
    pub(crate) fn relabel(mut self, label: u8) -> Self {
        for l in self.labels.iter_mut() {
            *l = label;
        }
        self
    }
}

/// Byte value v maps to v/255; no other preprocessing, no augmentation.
pub fn to_feature_planes<T: Real>(raw: &RawDataset) -> Dataset<T> {
    let plane_len = raw.images.rows * raw.images.cols;
    let scale = 1.0 / 255.0;
    let images = (0..raw.images.count)
        .map(|i| {
            let bytes = &raw.images.pixels[i * plane_len..(i + 1) * plane_len];
            let values: Vec<T> = bytes
                .iter()
                .map(|&b| T::from_f64(f64::from(b) * scale))
                .collect();
            FeaturePlane::new(raw.images.rows, raw.images.cols, values)
                .expect("plane size matches by construction")
        })
        .collect();
    Dataset {
        images,
        labels: raw.labels.clone(),
    }
}

/// Shuffled index permutation cut into batches; the final partial batch is
/// kept.
pub struct BatchPlan {
    permutation: Vec<usize>,
    batch_size: usize,
}

impl BatchPlan {
    /// Permutation drawn from the per-epoch shuffle stream of `seed`.
    pub fn shuffled(count: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        let mut permutation: Vec<usize> = (0..count).collect();
        let mut stream = rng::stream_rng(seed, "shuffle", epoch);
        rng::shuffle(&mut permutation, &mut stream);
        Ok(BatchPlan {
            permutation,
            batch_size,
        })
    }

    pub fn batches(&self) -> impl Iterator<Item = &[usize]> {
        self.permutation.chunks(self.batch_size)
    }

    pub fn permutation(&self) -> &[usize] {
        &self.permutation
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

fn find_split_file(dir: &Path, stem: &str) -> Result<PathBuf> {
    let gz = dir.join(format!("{stem}.gz"));
    if gz.exists() {
        return Ok(gz);
    }
    let raw = dir.join(stem);
    if raw.exists() {
        return Ok(raw);
    }
    Err(Error::Fetch {
        url: gz.display().to_string(),
        message: "dataset file not found; run the fetch command first".into(),
    })
}

/// Load one split from `dir`, accepting either gzipped or raw files.
pub fn load_split(dir: &Path, split: Split) -> Result<RawDataset> {
    let prefix = split.prefix();
    let image_path = find_split_file(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let label_path = find_split_file(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let image_bytes =
        std::fs::read(&image_path).map_err(|e| Error::io(image_path.display().to_string(), e))?;
    let label_bytes =
        std::fs::read(&label_path).map_err(|e| Error::io(label_path.display().to_string(), e))?;
    let images = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    RawDataset::new(images, labels)
}

fn file_is_valid(path: &Path) -> bool {
    let Ok(bytes) = std::fs::read(path) else {
        return false;
    };
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("");
    if name.contains("images") {
        parse_idx_images(&bytes).is_ok()
    } else {
        parse_idx_labels(&bytes).is_ok()
    }
}

/// Download the four dataset archives into `dest`, skipping files already
/// present and structurally valid. Downloads land in a temp file first, so
/// a destination file is never left half-written.
pub fn fetch(base_url: &str, dest: &Path) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dest).map_err(|e| Error::io(dest.display().to_string(), e))?;
    let client = reqwest::blocking::Client::builder()
        .timeout(std::time::Duration::from_secs(300))
        .build()
        .map_err(|e| Error::Fetch {
            url: base_url.to_string(),
            message: e.to_string(),
        })?;
    let mut paths = Vec::new();
    for file in DATASET_FILES {
        let path = dest.join(file);
        if path.exists() && file_is_valid(&path) {
            paths.push(path);
            continue;
        }
        let url = format!("{}/{}", base_url.trim_end_matches('/'), file);
        let response = client.get(&url).send().map_err(|e| Error::Fetch {
            url: url.clone(),
            message: e.to_string(),
        })?;
        if !response.status().is_success() {
            return Err(Error::Fetch {
                url,
                message: format!("HTTP status {}", response.status()),
            });
        }
        let bytes = response.bytes().map_err(|e| Error::Fetch {
            url: url.clone(),
            message: e.to_string(),
        })?;
        // structural integrity before anything touches the destination
        let check = if file.contains("images") {
            parse_idx_images(&bytes).map(|_| ())
        } else {
            parse_idx_labels(&bytes).map(|_| ())
        };
        check.map_err(|e| Error::Fetch {
            url: url.clone(),
            message: format!("downloaded file failed validation: {e}"),
        })?;
        let tmp = path.with_extension("part");
        std::fs::write(&tmp, &bytes).map_err(|e| Error::io(tmp.display().to_string(), e))?;
        std::fs::rename(&tmp, &path).map_err(|e| Error::io(path.display().to_string(), e))?;
        paths.push(path);
    }
    Ok(paths)
}

/// Small structured dataset for tests and demos: each class is a distinct
/// oriented stripe pattern with mild per-sample jitter, pixels in [0,1].
pub fn synthetic_dataset<T: Real>(
    classes: usize,
    per_class: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> Dataset<T> {
    use rand::Rng;
    let mut stream = rng::stream_rng(seed, "synthetic", 0);
    let mut images = Vec::with_capacity(classes * per_class);
    let mut labels = Vec::with_capacity(classes * per_class);
    for class in 0..classes {
        let angle = std::f64::consts::PI * class as f64 / classes.max(1) as f64;
        let (dx, dy) = (angle.cos(), angle.sin());
        let frequency = 1.0 + (class % 3) as f64;
        for _ in 0..per_class {
            let phase: f64 = stream.gen_range(0.0..std::f64::consts::TAU);
            let mut values = Vec::with_capacity(height * width);
            for r in 0..height {
                for c in 0..width {
                    let t = (r as f64 * dy + c as f64 * dx) * frequency
                        / height.max(width) as f64
                        * std::f64::consts::TAU;
                    let noise: f64 = stream.gen_range(-0.05..0.05);
                    let v = 0.5 + 0.4 * (t + phase).sin() + noise;
                    values.push(T::from_f64(v.clamp(0.0, 1.0)));
                }
            }
            images.push(
                FeaturePlane::new(height, width, values).expect("size matches by construction"),
            );
            labels.push(class as u8);
        }
    }
    Dataset { images, labels }
}

/// Byte-level synthetic 28x28 dataset in the same stripe style, usable as a
/// drop-in stand-in for the real files in round-trip and pipeline tests.
pub fn synthetic_raw_dataset(classes: usize, per_class: usize, seed: u64) -> RawDataset {
    use rand::Rng;
    let mut stream = rng::stream_rng(seed, "synthetic-raw", 0);
    let (rows, cols) = (28usize, 28usize);
    let count = classes * per_class;
    let mut pixels = Vec::with_capacity(count * rows * cols);
    let mut labels = Vec::with_capacity(count);
    for class in 0..classes {
        let angle = std::f64::consts::PI * class as f64 / classes.max(1) as f64;
        let (dx, dy) = (angle.cos(), angle.sin());
        let frequency = 1.0 + (class % 3) as f64;
        for _ in 0..per_class {
            let phase: f64 = stream.gen_range(0.0..std::f64::consts::TAU);
            for r in 0..rows {
                for c in 0..cols {
                    let t = (r as f64 * dy + c as f64 * dx) * frequency / rows as f64
                        * std::f64::consts::TAU;
                    let noise: f64 = stream.gen_range(-0.05..0.05);
                    let v = (0.5 + 0.4 * (t + phase).sin() + noise).clamp(0.0, 1.0);
                    pixels.push((v * 255.0).round() as u8);
                }
            }
            labels.push(class as u8);
        }
    }
    RawDataset::new(
        IdxImages {
            count,
            rows,
            cols,
            pixels,
        },
        labels,
    )
    .expect("construction is 28x28 with matching counts")
}

/// Write a raw dataset into `dir` as one split's pair of IDX files
/// (uncompressed, using the standard file names).
pub fn write_split(dir: &Path, split: Split, raw: &RawDataset) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    let prefix = split.prefix();
    let images = dir.join(format!("{prefix}-images-idx3-ubyte"));
    let labels = dir.join(format!("{prefix}-labels-idx1-ubyte"));
    std::fs::write(&images, serialize_idx_images(&raw.images))
        .map_err(|e| Error::io(images.display().to_string(), e))?;
    std::fs::write(&labels, serialize_idx_labels(&raw.labels))
        .map_err(|e| Error::io(labels.display().to_string(), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn tiny_images(count: usize, rows: usize, cols: usize) -> IdxImages {
        IdxImages {
            count,
            rows,
            cols,
            pixels: (0..count * rows * cols).map(|i| (i % 251) as u8).collect(),
        }
    }

    #[test]
    fn image_header_arithmetic() {
        let images = tiny_images(2, 28, 28);
        let bytes = serialize_idx_images(&images);
        assert_eq!(bytes.len(), 16 + 1568);
        let parsed = parse_idx_images(&bytes).unwrap();
        assert_eq!(parsed, images);
    }

    #[test]
    fn label_magic_fed_to_image_parser_is_rejected() {
        let bytes = serialize_idx_labels(&[1, 2, 3]);
        let err = parse_idx_images(&bytes).unwrap_err();
        assert!(matches!(err, Error::Parse { offset: 0, .. }));
    }

    #[test]
    fn truncated_image_payload_names_lengths() {
        let images = tiny_images(3, 4, 4);
        let mut bytes = serialize_idx_images(&images);
        bytes.truncate(bytes.len() - 5);
        let err = parse_idx_images(&bytes).unwrap_err();
        let text = err.to_string();
        assert!(text.contains("expected 48"), "message: {text}");
        assert!(text.contains("43 bytes"), "message: {text}");
    }

    #[test]
    fn labels_round_trip_and_range_check() {
        let bytes = serialize_idx_labels(&[0, 9, 4]);
        assert_eq!(parse_idx_labels(&bytes).unwrap(), vec![0, 9, 4]);

        let bytes = serialize_idx_labels(&[0, 12, 4]);
        let err = parse_idx_labels(&bytes).unwrap_err();
        assert!(err.to_string().contains("index 1"), "got: {err}");

        let empty = serialize_idx_labels(&[]);
        assert_eq!(parse_idx_labels(&empty).unwrap(), Vec::<u8>::new());
    }

    #[test]
    fn gzip_is_sniffed_transparently() {
        let images = tiny_images(2, 5, 5);
        let raw = serialize_idx_images(&images);
        let mut encoder =
            flate2::write::GzEncoder::new(Vec::new(), flate2::Compression::default());
        encoder.write_all(&raw).unwrap();
        let gz = encoder.finish().unwrap();
        assert_eq!(parse_idx_images(&gz).unwrap(), images);
    }

    #[test]
    fn normalization_endpoints() {
        let images = IdxImages {
            count: 1,
            rows: 28,
            cols: 28,
            pixels: {
                let mut p = vec![0u8; 784];
                p[0] = 255;
                p[1] = 0;
                p[2] = 51;
                p
            },
        };
        let raw = RawDataset::new(images, vec![0]).unwrap();
        let data = to_feature_planes::<f64>(&raw);
        let plane = &data.sample(0).planes[0];
        assert_eq!(plane.values()[0], 1.0);
        assert_eq!(plane.values()[1], 0.0);
        assert!((plane.values()[2] - 0.2).abs() < 1e-15);
        assert!(plane.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn batch_plan_partitions_every_index_once() {
        let plan = BatchPlan::shuffled(103, 10, 5, 0).unwrap();
        let mut seen: Vec<usize> = plan.batches().flatten().copied().collect();
        assert_eq!(plan.batches().count(), 11); // final partial batch kept
        assert_eq!(plan.batches().last().unwrap().len(), 3);
        seen.sort_unstable();
        assert_eq!(seen, (0..103).collect::<Vec<_>>());
    }

    #[test]
    fn batch_plans_differ_between_epochs() {
        let a = BatchPlan::shuffled(50, 10, 5, 0).unwrap();
        let b = BatchPlan::shuffled(50, 10, 5, 1).unwrap();
        assert_ne!(a.permutation(), b.permutation());
    }

    #[test]
    fn raw_dataset_enforces_dims_and_count() {
        assert!(RawDataset::new(tiny_images(2, 28, 28), vec![1, 2]).is_ok());
        assert!(RawDataset::new(tiny_images(2, 27, 28), vec![1, 2]).is_err());
        assert!(RawDataset::new(tiny_images(2, 28, 28), vec![1]).is_err());
    }

    #[test]
    fn synthetic_dataset_is_balanced_and_in_range() {
        let data = synthetic_dataset::<f32>(4, 5, 8, 8, 3);
        assert_eq!(data.len(), 20);
        for idx in 0..data.len() {
            let s = data.sample(idx);
            assert!(s.planes[0].values().iter().all(|v| (0.0..=1.0).contains(v)));
        }
        let mut counts = [0usize; 4];
        for &l in data.labels() {
            counts[l as usize] += 1;
        }
        assert_eq!(counts, [5, 5, 5, 5]);
    }
}
