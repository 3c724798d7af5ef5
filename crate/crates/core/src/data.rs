//! Datasets: synthetic generation, IDX loading, partitioning and corruption.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, IdxError, Result};
use crate::rng::{self, Domain};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Magic prefix of the flat binary dataset layout written by [`write_dataset`].
pub const DATASET_MAGIC: &[u8; 4] = b"FSDS";
const DATASET_VERSION: u32 = 1;

/// Row-major feature matrix with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    features: Vec<f64>,
    labels: Vec<usize>,
    n_features: usize,
    n_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: Vec<f64>,
        labels: Vec<usize>,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        if n_features == 0 || n_classes == 0 {
            return Err(Error::InvalidArgument(
                "n_features and n_classes must be positive".into(),
            ));
        }
        if features.len() != labels.len() * n_features {
            return Err(Error::DimensionMismatch {
                expected: labels.len() * n_features,
                found: features.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {bad} out of range for {n_classes} classes"
            )));
        }
        if features.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("features contain NaN".into()));
        }
        Ok(Self {
            features,
            labels,
            n_features,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], usize)> {
        self.features
            .chunks_exact(self.n_features)
            .zip(self.labels.iter().copied())
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> LabeledDataset {
        let mut features = Vec::with_capacity(indices.len() * self.n_features);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        LabeledDataset {
            features,
            labels,
            n_features: self.n_features,
            n_classes: self.n_classes,
        }
    }

    /// Holds out the last `test_per_class` rows of every class.
    pub fn split_per_class(&self, test_per_class: usize) -> Result<(LabeledDataset, LabeledDataset)> {
        let mut by_class = vec![Vec::new(); self.n_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for rows in &by_class {
            if rows.len() < test_per_class {
                return Err(Error::InsufficientSamples {
                    needed: test_per_class,
                    available: rows.len(),
                });
            }
            let cut = rows.len() - test_per_class;
            train.extend_from_slice(&rows[..cut]);
            test.extend_from_slice(&rows[cut..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        Ok((self.subset(&train), self.subset(&test)))
    }

    fn raw_range(&self) -> Option<(f64, f64)> {
        let mut it = self.features.iter().copied();
        let first = it.next()?;
        Some(it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v))))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionScheme {
    Iid,
    NoniidShards,
}

/// Disjoint row assignments, one list per client.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionPlan {
    pub assignments: Vec<Vec<usize>>,
    pub scheme: PartitionScheme,
}

impl PartitionPlan {
    pub fn materialize(&self, dataset: &LabeledDataset) -> Vec<LabeledDataset> {
        self.assignments.iter().map(|a| dataset.subset(a)).collect()
    }
}

/// Isotropic Gaussian blobs around seeded, pairwise-separated centroids,
/// normalized to `[-1, 1]`.
///
/// Rows are class-major: all samples of class 0, then class 1, and so on.
pub fn generate_blobs(
    n_classes: usize,
    dim: usize,
    samples_per_class: usize,
    spread: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if n_classes < 2 || dim < 1 {
        return Err(Error::InvalidArgument(
            "blobs need at least 2 classes and 1 dimension".into(),
        ));
    }
    if !(spread >= 0.0 && spread.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid spread {spread}")));
    }
    let centroids = place_centroids(n_classes, dim, seed);
    let mut features = Vec::with_capacity(n_classes * samples_per_class * dim);
    let mut labels = Vec::with_capacity(n_classes * samples_per_class);
    for (c, centroid) in centroids.iter().enumerate() {
        let mut rng = rng::stream(seed, Domain::Samples, c as u64, 0);
        for _ in 0..samples_per_class {
            for &m in centroid {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(m + spread * z);
            }
            labels.push(c);
        }
    }
    let ds = LabeledDataset::new(features, labels, dim, n_classes)?;
    Ok(normalize(&ds, -1.0, 1.0))
}

/// Rejection-samples centroids in `[-2, 2]^dim`, relaxing the minimum
/// separation whenever a placement keeps failing.
fn place_centroids(n_classes: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = rng::stream(seed, Domain::Centroids, 0, 0);
    let side = Uniform::new(-2.0, 2.0).expect("valid range");
    let mut min_sep = 1.0f64;
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(n_classes);
    let mut failures = 0;
    while centroids.len() < n_classes {
        let candidate: Vec<f64> = (0..dim).map(|_| side.sample(&mut rng)).collect();
        let ok = centroids.iter().all(|c| {
            crate::vector::distance_unchecked(c, &candidate) >= min_sep
        });
        if ok {
            centroids.push(candidate);
            failures = 0;
        } else {
            failures += 1;
            if failures >= 100 {
                min_sep *= 0.9;
                failures = 0;
            }
        }
    }
    centroids
}

/// Affinely maps the observed feature range onto `[lo, hi]`.
///
/// A degenerate range (all features equal) maps every feature to the midpoint.
pub fn normalize(dataset: &LabeledDataset, lo: f64, hi: f64) -> LabeledDataset {
    match dataset.raw_range() {
        Some((raw_lo, raw_hi)) => normalize_from(dataset, raw_lo, raw_hi, lo, hi),
        None => dataset.clone(),
    }
}

/// Affinely maps a known raw range `[raw_lo, raw_hi]` onto `[lo, hi]`.
pub fn normalize_from(
    dataset: &LabeledDataset,
    raw_lo: f64,
    raw_hi: f64,
    lo: f64,
    hi: f64,
) -> LabeledDataset {
    assert!(hi > lo, "normalize needs hi > lo");
    let features = if raw_hi > raw_lo {
        let k = (hi - lo) / (raw_hi - raw_lo);
        dataset
            .features
            .iter()
            .map(|&v| (lo + (v - raw_lo) * k).clamp(lo, hi))
            .collect()
    } else {
        vec![lo + (hi - lo) / 2.0; dataset.features.len()]
    };
    LabeledDataset {
        features,
        ..dataset.clone()
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> std::result::Result<u32, IdxError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or(IdxError::Truncated {
            expected: offset + 4,
            found: bytes.len(),
        })
}

/// Decodes an IDX image/label pair from memory. Pixels are mapped from
/// `[0, 255]` to `[-1, 1]`.
pub fn decode_idx(images: &[u8], labels: &[u8]) -> Result<LabeledDataset> {
    let magic = read_u32_be(images, 0)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(IdxError::WrongMagic {
            expected: IDX_IMAGES_MAGIC,
            found: magic,
        }
        .into());
    }
    let n_images = read_u32_be(images, 4)? as usize;
    let rows = read_u32_be(images, 8)? as usize;
    let cols = read_u32_be(images, 12)? as usize;

    let magic = read_u32_be(labels, 0)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(IdxError::WrongMagic {
            expected: IDX_LABELS_MAGIC,
            found: magic,
        }
        .into());
    }
    let n_labels = read_u32_be(labels, 4)? as usize;
    if n_images != n_labels {
        return Err(IdxError::CountMismatch {
            images: n_images,
            labels: n_labels,
        }
        .into());
    }

    let n_features = rows * cols;
    let pixels = images.get(16..16 + n_images * n_features).ok_or(IdxError::Truncated {
        expected: 16 + n_images * n_features,
        found: images.len(),
    })?;
    let label_bytes = labels.get(8..8 + n_labels).ok_or(IdxError::Truncated {
        expected: 8 + n_labels,
        found: labels.len(),
    })?;

    let features = pixels.iter().map(|&p| f64::from(p)).collect();
    let labels: Vec<usize> = label_bytes.iter().map(|&l| usize::from(l)).collect();
    let n_classes = labels.iter().max().map_or(1, |m| m + 1).max(2);
    let raw = LabeledDataset::new(features, labels, n_features.max(1), n_classes)?;
    Ok(normalize_from(&raw, 0.0, 255.0, -1.0, 1.0))
}

pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images = fs::read(images_path)?;
    let labels = fs::read(labels_path)?;
    decode_idx(&images, &labels)
}

/// Shuffles rows with `seed` then deals them round-robin.
pub fn partition_iid(dataset: &LabeledDataset, n_clients: usize, seed: u64) -> Result<PartitionPlan> {
    if n_clients == 0 {
        return Err(Error::InvalidArgument("n_clients must be positive".into()));
    }
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng::stream(seed, Domain::Partition, 0, 0));
    let mut assignments = vec![Vec::new(); n_clients];
    for (k, idx) in order.into_iter().enumerate() {
        assignments[k % n_clients].push(idx);
    }
    Ok(PartitionPlan {
        assignments,
        scheme: PartitionScheme::Iid,
    })
}

/// Label-sorted shards of `shard_size` consecutive rows, shuffled and dealt
/// `shards_per_client` to each client. Leftover rows are discarded.
pub fn partition_noniid_shards(
    dataset: &LabeledDataset,
    n_clients: usize,
    shards_per_client: usize,
    shard_size: usize,
    seed: u64,
) -> Result<PartitionPlan> {
    if n_clients == 0 || shards_per_client == 0 || shard_size == 0 {
        return Err(Error::InvalidArgument(
            "clients, shards per client and shard size must be positive".into(),
        ));
    }
    let needed = n_clients * shards_per_client * shard_size;
    if needed > dataset.len() {
        return Err(Error::InsufficientSamples {
            needed,
            available: dataset.len(),
        });
    }
    let mut sorted: Vec<usize> = (0..dataset.len()).collect();
    sorted.sort_by_key(|&i| dataset.labels[i]);
    let mut shards: Vec<&[usize]> = sorted.chunks_exact(shard_size).collect();
    shards.shuffle(&mut rng::stream(seed, Domain::Partition, 1, 0));
    let assignments = shards
        .chunks_exact(shards_per_client)
        .take(n_clients)
        .map(|group| group.concat())
        .collect();
    Ok(PartitionPlan {
        assignments,
        scheme: PartitionScheme::NoniidShards,
    })
}

/// `x <- clip(x + u, clip_lo, clip_hi)` with `u ~ U(low, high)` drawn per element.
pub fn apply_noise(
    dataset: &LabeledDataset,
    low: f64,
    high: f64,
    clip_lo: f64,
    clip_hi: f64,
    seed: u64,
) -> Result<LabeledDataset> {
    if high < low || clip_hi <= clip_lo {
        return Err(Error::InvalidArgument(format!(
            "bad noise bounds: noise [{low}, {high}], clip [{clip_lo}, {clip_hi}]"
        )));
    }
    let mut rng = rng::stream(seed, Domain::Noise, 0, 0);
    let features = if high > low {
        let u = Uniform::new(low, high).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        dataset
            .features
            .iter()
            .map(|&x| (x + u.sample(&mut rng)).clamp(clip_lo, clip_hi))
            .collect()
    } else {
        dataset
            .features
            .iter()
            .map(|&x| (x + low).clamp(clip_lo, clip_hi))
            .collect()
    };
    Ok(LabeledDataset {
        features,
        ..dataset.clone()
    })
}

/// Replaces every label with `target`.
pub fn flip_labels(dataset: &LabeledDataset, target: usize) -> Result<LabeledDataset> {
    if target >= dataset.n_classes {
        return Err(Error::InvalidArgument(format!(
            "target class {target} out of range for {} classes",
            dataset.n_classes
        )));
    }
    Ok(LabeledDataset {
        labels: vec![target; dataset.len()],
        ..dataset.clone()
    })
}

/// Flat little-endian layout:
///
/// ```text
/// b"FSDS" | version u32 | n_samples u32 | n_features u32 | n_classes u32
/// | labels: n_samples x u32 | features: n_samples*n_features x f64 (row-major)
/// ```
pub fn encode_dataset(dataset: &LabeledDataset) -> Vec<u8> {
    let mut out = Vec::with_capacity(20 + dataset.len() * (4 + 8 * dataset.n_features));
    out.extend_from_slice(DATASET_MAGIC);
    for v in [
        DATASET_VERSION,
        dataset.len() as u32,
        dataset.n_features as u32,
        dataset.n_classes as u32,
    ] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &l in &dataset.labels {
        out.extend_from_slice(&(l as u32).to_le_bytes());
    }
    for &f in &dataset.features {
        out.extend_from_slice(&f.to_le_bytes());
    }
    out
}

pub fn decode_dataset(bytes: &[u8]) -> Result<LabeledDataset> {
    let bad = |msg: &str| Error::InvalidArgument(format!("dataset file: {msg}"));
    if bytes.len() < 20 || &bytes[..4] != DATASET_MAGIC {
        return Err(bad("missing FSDS header"));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize;
    if word(0) != DATASET_VERSION as usize {
        return Err(bad("unsupported version"));
    }
    let (n, d, c) = (word(1), word(2), word(3));
    let expected = 20 + n * 4 + n * d * 8;
    if bytes.len() != expected {
        return Err(bad(&format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let labels = bytes[20..20 + 4 * n]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()) as usize)
        .collect();
    let features = bytes[20 + 4 * n..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    LabeledDataset::new(features, labels, d, c)
}

pub fn write_dataset(dataset: &LabeledDataset, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_dataset(dataset))?;
    Ok(())
}

pub fn read_dataset(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    decode_dataset(&fs::read(path)?)
}

/// Uniform row shuffle, used when a loaded dataset needs a random holdout.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, Domain::Partition, 2, 0));
    idx
}
