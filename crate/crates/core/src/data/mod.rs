//! Datasets: a labeled source domain plus an unlabeled target domain.
//!
//! Target ground truth exists only for evaluation. It is reachable solely
//! through [`DomainDataset::hidden_label`], which counts every access, so a
//! test can run the whole training stack and assert the counter stayed at
//! zero. Training code has no other path to those labels.

pub mod batch;
pub mod io;
pub mod synthetic;
pub mod ucihar;

pub use batch::{batch_iterator, BatchPair};
pub use io::{load_dataset, save_dataset};
pub use synthetic::{generate_synthetic, SyntheticShiftSpec};
pub use ucihar::{load_ucihar, UciHarData};

use std::sync::atomic::{AtomicUsize, Ordering};

use ndarray::{Array1, Array2, Array3, ArrayView2, Axis};

use crate::error::{Error, Result};

/// Which marginal distribution a sample was drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Source,
    Target,
}

/// One multichannel window: values `[channels, timesteps]`, a class label
/// for source samples, and a hidden evaluation label for target samples.
#[derive(Debug, Clone)]
pub struct TimeSeriesSample {
    values: Array2<f64>,
    label: Option<usize>,
    domain: Domain,
    hidden_label: Option<usize>,
}

impl TimeSeriesSample {
    pub fn source(values: Array2<f64>, label: usize) -> Self {
        TimeSeriesSample {
            values,
            label: Some(label),
            domain: Domain::Source,
            hidden_label: None,
        }
    }

    /// Target sample; `hidden_label` is evaluation-only ground truth.
    pub fn target(values: Array2<f64>, hidden_label: Option<usize>) -> Self {
        TimeSeriesSample {
            values,
            label: None,
            domain: Domain::Target,
            hidden_label,
        }
    }

    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    /// Training-view label: present iff the sample is from the source
    /// domain.
    pub fn label(&self) -> Option<usize> {
        self.label
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }
}

/// Source block followed by target block, with shared shape metadata.
#[derive(Debug)]
pub struct DomainDataset {
    samples: Vec<TimeSeriesSample>,
    n_src: usize,
    n_tgt: usize,
    n_classes: usize,
    channels: usize,
    timesteps: usize,
    hidden_reads: AtomicUsize,
}

impl Clone for DomainDataset {
    fn clone(&self) -> Self {
        DomainDataset {
            samples: self.samples.clone(),
            n_src: self.n_src,
            n_tgt: self.n_tgt,
            n_classes: self.n_classes,
            channels: self.channels,
            timesteps: self.timesteps,
            hidden_reads: AtomicUsize::new(0),
        }
    }
}

impl DomainDataset {
    /// Assemble a dataset from its two blocks, validating every invariant:
    /// consistent shapes, finite values, labels inside `[0, n_classes)`.
    pub fn from_parts(
        source: Vec<TimeSeriesSample>,
        target: Vec<TimeSeriesSample>,
        n_classes: usize,
    ) -> Result<Self> {
        if source.is_empty() {
            return Err(Error::config("dataset needs a non-empty source block"));
        }
        if n_classes == 0 {
            return Err(Error::config("n_classes must be positive"));
        }
        let (channels, timesteps) = source[0].values.dim();
        if channels == 0 || timesteps == 0 {
            return Err(Error::config("sample dims must be positive"));
        }
        for (i, s) in source.iter().enumerate() {
            if s.domain != Domain::Source || s.label.is_none() {
                return Err(Error::config(format!(
                    "source sample {i} is not labeled source"
                )));
            }
        }
        for (i, s) in target.iter().enumerate() {
            if s.domain != Domain::Target || s.label.is_some() {
                return Err(Error::config(format!(
                    "target sample {i} carries a training label"
                )));
            }
        }
        let n_src = source.len();
        let n_tgt = target.len();
        let mut samples = source;
        samples.extend(target);
        for (i, s) in samples.iter().enumerate() {
            if s.values.dim() != (channels, timesteps) {
                return Err(Error::config(format!(
                    "sample {i} has shape {:?}, expected {:?}",
                    s.values.dim(),
                    (channels, timesteps)
                )));
            }
            if s.values.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!(
                    "sample {i} contains non-finite values"
                )));
            }
            for l in [s.label, s.hidden_label].into_iter().flatten() {
                if l >= n_classes {
                    return Err(Error::config(format!(
                        "sample {i} label {l} out of range for {n_classes} classes"
                    )));
                }
            }
        }
        Ok(DomainDataset {
            samples,
            n_src,
            n_tgt,
            n_classes,
            channels,
            timesteps,
            hidden_reads: AtomicUsize::new(0),
        })
    }

    pub fn n_src(&self) -> usize {
        self.n_src
    }
    pub fn n_tgt(&self) -> usize {
        self.n_tgt
    }
    pub fn len(&self) -> usize {
        self.samples.len()
    }
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
    pub fn n_classes(&self) -> usize {
        self.n_classes
    }
    pub fn channels(&self) -> usize {
        self.channels
    }
    pub fn timesteps(&self) -> usize {
        self.timesteps
    }

    pub fn sample(&self, idx: usize) -> &TimeSeriesSample {
        &self.samples[idx]
    }

    /// Indices of the source block.
    pub fn source_indices(&self) -> std::ops::Range<usize> {
        0..self.n_src
    }

    /// Indices of the target block.
    pub fn target_indices(&self) -> std::ops::Range<usize> {
        self.n_src..self.samples.len()
    }

    /// Evaluation-only access to target ground truth. Every call is
    /// counted; training must never get here.
    pub fn hidden_label(&self, idx: usize) -> Option<usize> {
        self.hidden_reads.fetch_add(1, Ordering::Relaxed);
        self.samples[idx].hidden_label
    }

    /// How many times [`DomainDataset::hidden_label`] has been called on
    /// this instance — the tripwire the training tests assert on.
    pub fn hidden_read_count(&self) -> usize {
        self.hidden_reads.load(Ordering::Relaxed)
    }

    /// Structural copy of a hidden label for dataset re-assembly and
    /// serialization. Crate-internal: not a training-path read, so it
    /// bypasses the tripwire; nothing outside this crate can call it.
    pub(crate) fn hidden_label_untracked(&self, idx: usize) -> Option<usize> {
        self.samples[idx].hidden_label
    }

    /// Materialize `[len(indices), channels, timesteps]` for a batch.
    pub fn gather(&self, indices: &[usize]) -> Array3<f64> {
        let mut out = Array3::zeros((indices.len(), self.channels, self.timesteps));
        for (row, &idx) in indices.iter().enumerate() {
            out.index_axis_mut(Axis(0), row)
                .assign(&self.samples[idx].values);
        }
        out
    }

    /// Training labels for source indices; errors on any unlabeled index.
    pub fn labels(&self, indices: &[usize]) -> Result<Vec<usize>> {
        indices
            .iter()
            .map(|&i| {
                self.samples[i]
                    .label()
                    .ok_or_else(|| Error::config(format!("sample {i} has no training label")))
            })
            .collect()
    }
}

/// Per-channel mean and standard deviation computed over the source block
/// only. The standard deviation is floored at 1e-8 so constant channels
/// stay finite.
pub fn source_channel_stats(dataset: &DomainDataset) -> (Array1<f64>, Array1<f64>) {
    let c = dataset.channels();
    let mut mean = Array1::<f64>::zeros(c);
    let mut count = 0usize;
    for idx in dataset.source_indices() {
        let v = dataset.sample(idx).values();
        for ch in 0..c {
            mean[ch] += v.row(ch).sum();
        }
        count += dataset.timesteps();
    }
    mean.mapv_inplace(|m| m / count as f64);

    let mut var = Array1::<f64>::zeros(c);
    for idx in dataset.source_indices() {
        let v = dataset.sample(idx).values();
        for ch in 0..c {
            let mu = mean[ch];
            var[ch] += v.row(ch).mapv(|x| (x - mu) * (x - mu)).sum();
        }
    }
    var.mapv_inplace(|s| (s / count as f64).sqrt().max(1e-8));
    (mean, var)
}

/// Z-score every sample with statistics from the source block only. Target
/// statistics never leak into the transform.
pub fn normalize(dataset: &DomainDataset) -> Result<DomainDataset> {
    if dataset.n_src() == 0 {
        return Err(Error::config("normalize: empty source split"));
    }
    let (mean, std) = source_channel_stats(dataset);
    let transform = |s: &TimeSeriesSample| {
        let mut values = s.values.clone();
        for ch in 0..values.nrows() {
            let (mu, sd) = (mean[ch], std[ch]);
            values.row_mut(ch).mapv_inplace(|v| (v - mu) / sd);
        }
        values
    };
    let source = dataset
        .source_indices()
        .map(|i| {
            let s = &dataset.samples[i];
            TimeSeriesSample::source(transform(s), s.label.unwrap())
        })
        .collect();
    let target = dataset
        .target_indices()
        .map(|i| {
            let s = &dataset.samples[i];
            TimeSeriesSample::target(transform(s), s.hidden_label)
        })
        .collect();
    DomainDataset::from_parts(source, target, dataset.n_classes())
}
