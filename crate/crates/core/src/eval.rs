//! Evaluation: macro-F1, target-domain scoring, and raw feature export.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use ndarray::Array3;
use serde::{Deserialize, Serialize};

use crate::data::{Domain, DomainDataset};
use crate::error::{Error, Result};
use crate::nets::backbone::ModelHandle;
use crate::nets::Mode;

/// Per-class prediction counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub fn_: Vec<usize>,
}

impl ConfusionCounts {
    pub fn from_predictions(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<Self> {
        if preds.len() != labels.len() {
            return Err(Error::config(format!(
                "{} predictions vs {} labels",
                preds.len(),
                labels.len()
            )));
        }
        if preds.is_empty() {
            return Err(Error::config("cannot score an empty prediction set"));
        }
        let mut counts = ConfusionCounts {
            tp: vec![0; n_classes],
            fp: vec![0; n_classes],
            fn_: vec![0; n_classes],
        };
        for (&p, &l) in preds.iter().zip(labels) {
            if p >= n_classes || l >= n_classes {
                return Err(Error::config(format!(
                    "class index out of range: pred {p}, label {l}, n_classes {n_classes}"
                )));
            }
            if p == l {
                counts.tp[p] += 1;
            } else {
                counts.fp[p] += 1;
                counts.fn_[l] += 1;
            }
        }
        Ok(counts)
    }

    /// `2 TP / (2 TP + FP + FN)` per class, with 0/0 defined as 0.
    pub fn per_class_f1(&self) -> Vec<f64> {
        self.tp
            .iter()
            .zip(&self.fp)
            .zip(&self.fn_)
            .map(|((&tp, &fp), &fn_)| {
                let denom = 2 * tp + fp + fn_;
                if denom == 0 {
                    0.0
                } else {
                    2.0 * tp as f64 / denom as f64
                }
            })
            .collect()
    }
}

/// Scores of one evaluation: macro-F1 (unweighted mean over all classes,
/// absent classes scoring 0), per-class F1, and plain accuracy.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub accuracy: f64,
    pub n_samples: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub scenario: Option<String>,
}

impl MetricsReport {
    pub fn tagged(mut self, scenario: &str, variant: &str, seed: u64) -> Self {
        self.scenario = Some(scenario.to_string());
        self.variant = Some(variant.to_string());
        self.seed = Some(seed);
        self
    }
}

/// Macro-F1 over all `n_classes` classes, including classes absent from
/// both predictions and labels (they contribute an F1 of 0).
pub fn macro_f1(preds: &[usize], labels: &[usize], n_classes: usize) -> Result<MetricsReport> {
    if n_classes == 0 {
        return Err(Error::config("n_classes must be positive"));
    }
    let counts = ConfusionCounts::from_predictions(preds, labels, n_classes)?;
    let per_class = counts.per_class_f1();
    let macro_f1 = per_class.iter().sum::<f64>() / n_classes as f64;
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(MetricsReport {
        macro_f1,
        per_class_f1: per_class,
        accuracy: correct as f64 / preds.len() as f64,
        n_samples: preds.len(),
        seed: None,
        variant: None,
        scenario: None,
    })
}

/// Argmax with ties broken toward the lowest class index.
pub fn argmax_row(row: ndarray::ArrayView1<'_, f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, &v) in row.iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = i;
        }
    }
    best
}

const EVAL_CHUNK: usize = 256;

/// Predicted classes for the given dataset indices, eval mode, chunked.
pub fn predict(
    model: &mut dyn ModelHandle,
    dataset: &DomainDataset,
    indices: &[usize],
) -> Result<Vec<usize>> {
    let mut preds = Vec::with_capacity(indices.len());
    for chunk in indices.chunks(EVAL_CHUNK) {
        let x = dataset.gather(chunk);
        let (_, logits) = model.forward_batch(&x, Mode::Eval)?;
        for row in logits.outer_iter() {
            preds.push(argmax_row(row));
        }
    }
    Ok(preds)
}

/// Score `model` on the given indices. With `use_hidden_labels`, ground
/// truth comes from the counted evaluation-only accessor (target samples);
/// otherwise from the training labels (source samples).
pub fn evaluate(
    model: &mut dyn ModelHandle,
    dataset: &DomainDataset,
    indices: &[usize],
    use_hidden_labels: bool,
) -> Result<MetricsReport> {
    let labels: Vec<usize> = if use_hidden_labels {
        indices
            .iter()
            .map(|&i| {
                dataset
                    .hidden_label(i)
                    .ok_or_else(|| Error::config(format!("sample {i} has no hidden label")))
            })
            .collect::<Result<_>>()?
    } else {
        dataset.labels(indices)?
    };
    let preds = predict(model, dataset, indices)?;
    macro_f1(&preds, &labels, dataset.n_classes())
}

/// Score on the full target block using hidden labels.
pub fn evaluate_target(
    model: &mut dyn ModelHandle,
    dataset: &DomainDataset,
) -> Result<MetricsReport> {
    let indices: Vec<usize> = dataset.target_indices().collect();
    evaluate(model, dataset, &indices, true)
}

/// Write features for the given indices as CSV with header
/// `feature_0..feature_{d-1},label,domain`. Label is the training label for
/// source rows and the hidden label for target rows (-1 if unknown);
/// domain is 0 for source, 1 for target. Row order equals index order.
pub fn export_features(
    model: &mut dyn ModelHandle,
    dataset: &DomainDataset,
    indices: &[usize],
    out: &Path,
) -> Result<()> {
    let d = model.feature_dim();
    let mut text = String::new();
    for j in 0..d {
        text.push_str(&format!("feature_{j},"));
    }
    text.push_str("label,domain\n");

    for chunk in indices.chunks(EVAL_CHUNK) {
        let x: Array3<f64> = dataset.gather(chunk);
        let (features, _) = model.forward_batch(&x, Mode::Eval)?;
        for (row, &idx) in features.outer_iter().zip(chunk) {
            for v in row.iter() {
                text.push_str(&format!("{v},"));
            }
            let sample = dataset.sample(idx);
            let (label, domain) = match sample.domain() {
                Domain::Source => (sample.label().map(|l| l as i64).unwrap_or(-1), 0),
                Domain::Target => (
                    dataset.hidden_label(idx).map(|l| l as i64).unwrap_or(-1),
                    1,
                ),
            };
            text.push_str(&format!("{label},{domain}\n"));
        }
    }

    let mut file = fs::File::create(out)?;
    file.write_all(text.as_bytes())?;
    Ok(())
}
