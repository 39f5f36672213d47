//! Portable on-disk dataset format.
//!
//! A dataset directory holds:
//! * `meta.json` — version, n_classes, channels, timesteps, n_src, n_tgt
//! * `samples.f32` — little-endian float32, row-major `[N, C, T]`, source
//!   block first
//! * `labels.u8` — one byte per source sample
//! * `hidden_labels.u8` — one byte per target sample (evaluation-only;
//!   255 marks an unknown label)
//!
//! Writes go to a temporary sibling directory and are renamed into place,
//! so a crashed write never leaves a partial dataset behind.

use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{DomainDataset, TimeSeriesSample};

pub const META_FILE: &str = "meta.json";
pub const SAMPLES_FILE: &str = "samples.f32";
pub const LABELS_FILE: &str = "labels.u8";
pub const HIDDEN_LABELS_FILE: &str = "hidden_labels.u8";

const UNKNOWN_LABEL: u8 = u8::MAX;

#[derive(Debug, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub version: u32,
    pub n_classes: usize,
    pub channels: usize,
    pub timesteps: usize,
    pub n_src: usize,
    pub n_tgt: usize,
}

/// Write `dataset` into `dir` atomically. An existing dataset directory (or
/// empty directory) at `dir` is replaced; anything else is refused.
pub fn save_dataset(dataset: &DomainDataset, dir: &Path) -> Result<()> {
    if dataset.n_classes() > UNKNOWN_LABEL as usize {
        return Err(Error::config("on-disk format supports at most 255 classes"));
    }

    let meta = DatasetMeta {
        version: 1,
        n_classes: dataset.n_classes(),
        channels: dataset.channels(),
        timesteps: dataset.timesteps(),
        n_src: dataset.n_src(),
        n_tgt: dataset.n_tgt(),
    };

    let mut samples = Vec::with_capacity(dataset.len() * dataset.channels() * dataset.timesteps() * 4);
    for i in 0..dataset.len() {
        for &v in dataset.sample(i).values().iter() {
            samples.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    let labels: Vec<u8> = dataset
        .source_indices()
        .map(|i| dataset.sample(i).label().unwrap() as u8)
        .collect();
    let hidden: Vec<u8> = dataset
        .target_indices()
        .map(|i| {
            dataset
                .hidden_label_untracked(i)
                .map_or(UNKNOWN_LABEL, |l| l as u8)
        })
        .collect();

    let parent = dir.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(parent)?;
    let tmp = tempfile::Builder::new()
        .prefix(".dataset-tmp")
        .tempdir_in(parent)?;
    fs::write(tmp.path().join(META_FILE), serde_json::to_string_pretty(&meta)?)?;
    fs::write(tmp.path().join(SAMPLES_FILE), samples)?;
    fs::write(tmp.path().join(LABELS_FILE), labels)?;
    fs::write(tmp.path().join(HIDDEN_LABELS_FILE), hidden)?;

    if dir.exists() {
        let looks_like_dataset = dir.join(META_FILE).exists();
        let is_empty = dir.read_dir().map(|mut d| d.next().is_none()).unwrap_or(false);
        if !(looks_like_dataset || is_empty) {
            return Err(Error::config(format!(
                "refusing to replace {}: not a dataset directory",
                dir.display()
            )));
        }
        fs::remove_dir_all(dir)?;
    }
    fs::rename(tmp.keep(), dir)?;
    Ok(())
}

/// Load a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<DomainDataset> {
    let meta_path = dir.join(META_FILE);
    if !meta_path.exists() {
        return Err(Error::config(format!(
            "{} is not a dataset directory (missing {META_FILE})",
            dir.display()
        )));
    }
    let meta: DatasetMeta = serde_json::from_str(&fs::read_to_string(meta_path)?)?;
    if meta.version != 1 {
        return Err(Error::config(format!(
            "unsupported dataset version {}",
            meta.version
        )));
    }

    let blob = fs::read(dir.join(SAMPLES_FILE))?;
    let n = meta.n_src + meta.n_tgt;
    let stride = meta.channels * meta.timesteps;
    if blob.len() != n * stride * 4 {
        return Err(Error::config(format!(
            "samples blob is {} bytes, expected {}",
            blob.len(),
            n * stride * 4
        )));
    }
    let labels = fs::read(dir.join(LABELS_FILE))?;
    if labels.len() != meta.n_src {
        return Err(Error::config(format!(
            "labels file has {} entries, expected {}",
            labels.len(),
            meta.n_src
        )));
    }
    let hidden = fs::read(dir.join(HIDDEN_LABELS_FILE))?;
    if hidden.len() != meta.n_tgt {
        return Err(Error::config(format!(
            "hidden labels file has {} entries, expected {}",
            hidden.len(),
            meta.n_tgt
        )));
    }

    let read_sample = |idx: usize| -> Array2<f64> {
        let base = idx * stride * 4;
        Array2::from_shape_fn((meta.channels, meta.timesteps), |(c, t)| {
            let o = base + (c * meta.timesteps + t) * 4;
            f32::from_le_bytes([blob[o], blob[o + 1], blob[o + 2], blob[o + 3]]) as f64
        })
    };

    let source = (0..meta.n_src)
        .map(|i| TimeSeriesSample::source(read_sample(i), labels[i] as usize))
        .collect();
    let target = (0..meta.n_tgt)
        .map(|i| {
            let h = hidden[i];
            TimeSeriesSample::target(
                read_sample(meta.n_src + i),
                (h != UNKNOWN_LABEL).then_some(h as usize),
            )
        })
        .collect();
    DomainDataset::from_parts(source, target, meta.n_classes)
}
