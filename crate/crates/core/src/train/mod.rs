//! Training orchestration: domain-adversarial teacher pretraining, the
//! two-step adversarial distillation loop, baselines, and ablations.

pub mod ablation;
pub mod checkpoint;
pub mod distill;
pub mod teacher;

pub use ablation::{dedup_betas, run_ablation, run_variant, sweep_beta, AblationRow, AblationTable};
pub use checkpoint::{
    load_student_checkpoint, load_teacher_checkpoint, save_student_checkpoint,
    save_teacher_checkpoint, CheckpointMeta, StudentBundle,
};
pub use distill::{distill_unikd, train_source_only, DistillOutput, DistillTrainer};
pub use teacher::{pretrain_teacher_dann, TeacherConfig};

use serde::{Deserialize, Serialize};

use crate::data::{DomainDataset, TimeSeriesSample};
use crate::error::{Error, Result};
use crate::losses::{AlphaSchedule, KlDirection};
use crate::rng::stream_rng;

/// Which ingredients a training run enables. The rows of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantId {
    /// Plain source cross-entropy; the lower-bound baseline.
    SourceOnly,
    /// Data-domain discriminator only.
    DdOnly,
    /// Data-domain plus feature-domain discriminators.
    DdDf,
    /// Data-domain discriminator plus weighted logit distillation.
    DdJkd,
    /// Data-domain and feature-domain discriminators plus standard
    /// (unweighted, teacher-leading) logit distillation.
    DdDfSkd,
    /// Everything: both discriminators plus weighted logit distillation.
    Full,
}

impl VariantId {
    pub const ALL: [VariantId; 6] = [
        VariantId::SourceOnly,
        VariantId::DdOnly,
        VariantId::DdDf,
        VariantId::DdJkd,
        VariantId::DdDfSkd,
        VariantId::Full,
    ];

    pub fn name(self) -> &'static str {
        match self {
            VariantId::SourceOnly => "source_only",
            VariantId::DdOnly => "dd_only",
            VariantId::DdDf => "dd_df",
            VariantId::DdJkd => "dd_jkd",
            VariantId::DdDfSkd => "dd_df_skd",
            VariantId::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        VariantId::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                Error::config(format!(
                    "unknown variant {s:?}; expected one of {}",
                    VariantId::ALL.map(|v| v.name()).join(", ")
                ))
            })
    }

    /// Does this variant train the feature-domain discriminator (and with
    /// it the feature-alignment term)?
    pub fn uses_df(self) -> bool {
        matches!(self, VariantId::DdDf | VariantId::DdDfSkd | VariantId::Full)
    }

    /// Does this variant train the data-domain discriminator?
    pub fn uses_dd(self) -> bool {
        !matches!(self, VariantId::SourceOnly)
    }

    /// Is any logit-distillation term active?
    pub fn uses_logit_kd(self) -> bool {
        matches!(self, VariantId::DdJkd | VariantId::DdDfSkd | VariantId::Full)
    }

    /// Standard KD flavor: unweighted, teacher-leading KL.
    pub fn uses_skd(self) -> bool {
        matches!(self, VariantId::DdDfSkd)
    }
}

/// How the domain-classification loss reaches the student.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DcGradientMode {
    /// The loss trains only the data-domain discriminator; student features
    /// receive no gradient from it (default).
    Detach,
    /// The loss also reaches the student features through a gradient
    /// reversal, domain-adversarial style.
    Reverse,
}

/// Feature-alignment loss form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GenLossForm {
    /// `mean[log(1 - d_fake)]`, the written form (default).
    Saturating,
    /// `-mean[log d_fake]`, stronger early gradients.
    NonSaturating,
}

/// Mixing-coefficient setting: an exponential epoch schedule or a constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaSetting {
    Adaptive { start: f64, end: f64 },
    Fixed { value: f64 },
}

impl AlphaSetting {
    /// Resolve into a per-epoch schedule over `epochs`.
    pub fn schedule(&self, epochs: usize) -> Result<AlphaSchedule> {
        match *self {
            AlphaSetting::Adaptive { start, end } => AlphaSchedule::new(start, end, epochs),
            AlphaSetting::Fixed { value } => AlphaSchedule::new(value, value, epochs),
        }
    }
}

fn default_tau() -> f64 {
    2.0
}
fn default_alpha() -> AlphaSetting {
    AlphaSetting::Adaptive {
        start: 0.1,
        end: 0.9,
    }
}
fn default_beta() -> f64 {
    0.5
}
fn default_epochs() -> usize {
    40
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_dc_mode() -> DcGradientMode {
    DcGradientMode::Detach
}
fn default_variant() -> VariantId {
    VariantId::Full
}
fn default_gen_form() -> GenLossForm {
    GenLossForm::Saturating
}
fn default_kl() -> KlDirection {
    KlDirection::StudentToTeacher
}
fn default_hidden() -> Vec<usize> {
    vec![128]
}
fn default_val_fraction() -> f64 {
    0.2
}

/// Full distillation-run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_alpha")]
    pub alpha: AlphaSetting,
    #[serde(default = "default_beta")]
    pub beta: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr_student: f64,
    #[serde(default = "default_lr")]
    pub lr_d_f: f64,
    #[serde(default = "default_lr")]
    pub lr_d_d: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_dc_mode")]
    pub dc_gradient_mode: DcGradientMode,
    #[serde(default = "default_variant")]
    pub variant: VariantId,
    #[serde(default = "default_gen_form")]
    pub gen_loss_form: GenLossForm,
    #[serde(default = "default_kl")]
    pub kl_direction: KlDirection,
    /// Hidden widths for both discriminators.
    #[serde(default = "default_hidden")]
    pub disc_hidden: Vec<usize>,
    /// Fraction of the source block held out for diagnostic validation.
    #[serde(default = "default_val_fraction")]
    pub source_val_fraction: f64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau <= 0.0 || !self.tau.is_finite() {
            return Err(Error::config("tau must be > 0"));
        }
        if self.beta < 0.0 || !self.beta.is_finite() {
            return Err(Error::config("beta must be >= 0"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be >= 1"));
        }
        self.alpha.schedule(self.epochs)?;
        for lr in [self.lr_student, self.lr_d_f, self.lr_d_d] {
            if lr <= 0.0 || !lr.is_finite() {
                return Err(Error::config("learning rates must be > 0"));
            }
        }
        if !(0.0..1.0).contains(&self.source_val_fraction) {
            return Err(Error::config("source_val_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

/// Per-epoch means of the loss terms and discriminator accuracies. Fields
/// inapplicable to a variant are absent; gated-off terms in a distillation
/// run are present as exact zeros.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_dis: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_gen: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_jkd: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub l_dc: Option<f64>,
    pub l_ce: f64,
    pub total: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub df_accuracy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub dd_accuracy: Option<f64>,
}

/// Everything a finished run reports besides the weights.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainState {
    pub epochs_run: usize,
    pub steps_run: usize,
    pub traces: Vec<EpochTrace>,
    /// Mixing coefficient per epoch (1-based), empty for runs without one.
    pub alpha_sequence: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_val_macro_f1: Option<f64>,
}

/// Deterministically hold out `fraction` of the source block for
/// validation. Returns the training dataset (remaining source + full
/// target) and a source-only validation dataset; with `fraction == 0` the
/// validation set is `None`.
pub fn split_source_validation(
    dataset: &DomainDataset,
    fraction: f64,
    seed: u64,
) -> Result<(DomainDataset, Option<DomainDataset>)> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(Error::config("validation fraction must be in [0, 1)"));
    }
    let n_val = (dataset.n_src() as f64 * fraction).floor() as usize;
    if n_val == 0 {
        return Ok((dataset.clone(), None));
    }
    let mut order: Vec<usize> = dataset.source_indices().collect();
    use rand::seq::SliceRandom;
    order.shuffle(&mut stream_rng(seed, "source-val-split"));
    let (val_idx, train_idx) = order.split_at(n_val);

    let clone_source = |idx: &[usize]| -> Vec<TimeSeriesSample> {
        let mut sorted = idx.to_vec();
        sorted.sort_unstable(); // stable content order regardless of shuffle
        sorted
            .iter()
            .map(|&i| {
                let s = dataset.sample(i);
                TimeSeriesSample::source(s.values().to_owned(), s.label().unwrap())
            })
            .collect()
    };
    let target: Vec<TimeSeriesSample> = dataset
        .target_indices()
        .map(|i| {
            // hidden labels ride along for later evaluation; copying them is
            // not a read of their values on any training path
            TimeSeriesSample::target(
                dataset.sample(i).values().to_owned(),
                dataset.hidden_label_untracked(i),
            )
        })
        .collect();

    let train = DomainDataset::from_parts(clone_source(train_idx), target, dataset.n_classes())?;
    let val = DomainDataset::from_parts(clone_source(val_idx), Vec::new(), dataset.n_classes())?;
    Ok((train, Some(val)))
}
