//! On-disk gather datasets.
//!
//! A dataset directory holds `manifest.json`, one little-endian `f32`
//! feature shard per `shard_size` samples (`features-NNNNN.f32`, row-major
//! `rows x d`) and `labels.f64`, row-major `count x 2` little-endian `f64`
//! pairs of (offset, angle). Every file is listed in the manifest with its
//! SHA-256 digest.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use faultsketch_core::{derive_seed, FeatureMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::gather::{simulate_gather, SimConfig};
use crate::model::{generate_model, FaultLabel, GridGeometry, ModelRanges};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const LABELS_FILE: &str = "labels.f64";
pub const OFFSET_CONVENTION: &str = "surface-row";

/// What to generate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub count: usize,
    pub ranges: ModelRanges,
    pub geometry: GridGeometry,
    pub sim: SimConfig,
    pub seed: u64,
    pub shard_size: usize,
}

impl DatasetConfig {
    pub fn desk(count: usize, seed: u64) -> Self {
        Self {
            count,
            ranges: ModelRanges::desk(),
            geometry: GridGeometry {
                nz: 50,
                nx: 50,
                dx: 10.0,
                dz: 10.0,
            },
            sim: SimConfig::desk(),
            seed,
            shard_size: 250,
        }
    }

    pub fn standard(count: usize, seed: u64) -> Self {
        Self {
            count,
            ranges: ModelRanges::standard(),
            geometry: GridGeometry {
                nz: 100,
                nx: 100,
                dx: 10.0,
                dz: 10.0,
            },
            sim: SimConfig::standard(),
            seed,
            shard_size: 1000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShardEntry {
    pub file: String,
    pub start: usize,
    pub rows: usize,
    pub sha256: Option<String>,
    pub complete: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub count: usize,
    pub receivers: usize,
    pub samples: usize,
    pub d: usize,
    pub total_values: u64,
    pub offset_convention: String,
    pub config: DatasetConfig,
    pub shards: Vec<ShardEntry>,
    pub labels: Option<FileEntry>,
}

impl DatasetManifest {
    /// Manifest for a dataset that has not been written yet.
    pub fn plan(config: &DatasetConfig) -> Result<Self> {
        if config.count == 0 {
            return Err(Error::Parameter("dataset needs at least one sample".into()));
        }
        if config.shard_size == 0 {
            return Err(Error::Parameter("shard size must be positive".into()));
        }
        config.ranges.validate()?;
        config.geometry.validate()?;
        let d = config.sim.feature_len();
        let total_values = (config.count as u64)
            .checked_mul(d as u64)
            .ok_or_else(|| Error::Parameter("dataset size overflows".into()))?;
        let shards = (0..config.count)
            .step_by(config.shard_size)
            .enumerate()
            .map(|(k, start)| ShardEntry {
                file: format!("features-{k:05}.f32"),
                start,
                rows: config.shard_size.min(config.count - start),
                sha256: None,
                complete: false,
            })
            .collect();
        Ok(Self {
            format_version: MANIFEST_VERSION,
            count: config.count,
            receivers: config.sim.receivers,
            samples: config.sim.samples,
            d,
            total_values,
            offset_convention: OFFSET_CONVENTION.into(),
            config: config.clone(),
            shards,
            labels: None,
        })
    }

    pub fn is_complete(&self) -> bool {
        self.labels.is_some() && self.shards.iter().all(|s| s.complete)
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let text = fs::read_to_string(dir.as_ref().join(MANIFEST_FILE))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Integrity(format!(
                "unsupported manifest version {}",
                m.format_version
            )));
        }
        if m.d != m.receivers * m.samples || m.total_values != m.count as u64 * m.d as u64 {
            return Err(Error::Integrity("manifest sizes are inconsistent".into()));
        }
        Ok(m)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_atomic(dir, MANIFEST_FILE, serde_json::to_string_pretty(self)?.as_bytes())
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
    let tmp = dir.join(format!("{name}.tmp"));
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    drop(f);
    fs::rename(&tmp, dir.join(name))?;
    Ok(())
}

fn shard_is_valid(dir: &Path, shard: &ShardEntry, d: usize) -> bool {
    let (true, Some(sum)) = (shard.complete, &shard.sha256) else {
        return false;
    };
    match fs::read(dir.join(&shard.file)) {
        Ok(bytes) => bytes.len() == shard.rows * d * 4 && &sha256_hex(&bytes) == sum,
        Err(_) => false,
    }
}

fn simulate_shard(config: &DatasetConfig, shard: &ShardEntry) -> Result<Vec<u8>> {
    let rows: Vec<Vec<f32>> = (shard.start..shard.start + shard.rows)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed, i as u64);
            let model = generate_model(&config.ranges, config.geometry, seed)?;
            Ok(simulate_gather(&model, &config.sim)?.data)
        })
        .collect::<Result<_>>()?;
    let mut bytes = Vec::with_capacity(shard.rows * config.sim.feature_len() * 4);
    for row in rows {
        for v in row {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(bytes)
}

/// Labels of every sample, regenerated from the per-sample seeds.
pub fn dataset_labels(config: &DatasetConfig) -> Result<Vec<FaultLabel>> {
    (0..config.count)
        .into_par_iter()
        .map(|i| {
            let seed = derive_seed(config.seed, i as u64);
            Ok(generate_model(&config.ranges, config.geometry, seed)?.label())
        })
        .collect()
}

/// Generates (or finishes generating) a dataset in `out`.
///
/// Shards already on disk whose digest matches the manifest are kept, so an
/// interrupted build resumes where it stopped. An existing manifest written
/// for a different configuration is an integrity error.
pub fn build_dataset(config: &DatasetConfig, out: impl AsRef<Path>) -> Result<DatasetManifest> {
    let dir = out.as_ref();
    let mut manifest = DatasetManifest::plan(config)?;
    fs::create_dir_all(dir)?;
    if dir.join(MANIFEST_FILE).exists() {
        let old = DatasetManifest::read(dir)?;
        if old.config != *config {
            return Err(Error::Integrity(format!(
                "{} holds a dataset with a different configuration",
                dir.display()
            )));
        }
        for (new, old) in manifest.shards.iter_mut().zip(&old.shards) {
            if shard_is_valid(dir, old, manifest.d) {
                *new = old.clone();
            }
        }
    }
    manifest.write(dir)?;
    for k in 0..manifest.shards.len() {
        if manifest.shards[k].complete {
            continue;
        }
        let bytes = simulate_shard(config, &manifest.shards[k])?;
        let shard = &mut manifest.shards[k];
        match write_atomic(dir, &shard.file, &bytes) {
            Ok(()) => {
                shard.sha256 = Some(sha256_hex(&bytes));
                shard.complete = true;
                manifest.write(dir)?;
            }
            Err(e) => {
                shard.complete = false;
                shard.sha256 = None;
                let msg = format!("failed to write {}: {e}", shard.file);
                let _ = manifest.write(dir);
                return Err(Error::Integrity(msg));
            }
        }
    }
    let labels = dataset_labels(config)?;
    let mut bytes = Vec::with_capacity(labels.len() * 16);
    for l in &labels {
        bytes.extend_from_slice(&l.offset.to_le_bytes());
        bytes.extend_from_slice(&l.angle.to_le_bytes());
    }
    write_atomic(dir, LABELS_FILE, &bytes)?;
    manifest.labels = Some(FileEntry {
        file: LABELS_FILE.into(),
        sha256: sha256_hex(&bytes),
    });
    manifest.write(dir)?;
    Ok(manifest)
}

/// A verified dataset in memory.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub features: FeatureMatrix,
    pub labels: Vec<FaultLabel>,
}

impl Dataset {
    pub fn offsets(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.offset).collect()
    }

    pub fn angles(&self) -> Vec<f64> {
        self.labels.iter().map(|l| l.angle).collect()
    }
}

fn read_verified(dir: &Path, file: &str, sum: Option<&String>) -> Result<Vec<u8>> {
    let path: PathBuf = dir.join(file);
    let bytes = fs::read(&path)?;
    match sum {
        Some(s) if *s == sha256_hex(&bytes) => Ok(bytes),
        _ => Err(Error::Integrity(format!(
            "{} does not match its manifest digest",
            path.display()
        ))),
    }
}

/// Loads the first `limit` samples (all when `None`), verifying digests.
pub fn load_dataset(dir: impl AsRef<Path>, limit: Option<usize>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let manifest = DatasetManifest::read(dir)?;
    if !manifest.is_complete() {
        return Err(Error::Integrity(format!(
            "dataset in {} is incomplete",
            dir.display()
        )));
    }
    let n = limit.unwrap_or(manifest.count).min(manifest.count);
    if n == 0 {
        return Err(Error::Parameter("cannot load zero samples".into()));
    }
    let d = manifest.d;
    let mut data = Vec::with_capacity(n * d);
    for shard in manifest.shards.iter().take_while(|s| s.start < n) {
        let bytes = read_verified(dir, &shard.file, shard.sha256.as_ref())?;
        if bytes.len() != shard.rows * d * 4 {
            return Err(Error::Integrity(format!("{} has the wrong size", shard.file)));
        }
        let take = (n - shard.start).min(shard.rows) * d * 4;
        data.extend(
            bytes[..take]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64),
        );
    }
    let entry = manifest.labels.as_ref().unwrap();
    let bytes = read_verified(dir, &entry.file, Some(&entry.sha256))?;
    if bytes.len() != manifest.count * 16 {
        return Err(Error::Integrity("labels file has the wrong size".into()));
    }
    let labels = bytes
        .chunks_exact(16)
        .take(n)
        .map(|c| FaultLabel {
            offset: f64::from_le_bytes(c[..8].try_into().unwrap()),
            angle: f64::from_le_bytes(c[8..].try_into().unwrap()),
        })
        .collect();
    let features = FeatureMatrix::new(n, d, data)?;
    Ok(Dataset {
        manifest,
        features,
        labels,
    })
}
