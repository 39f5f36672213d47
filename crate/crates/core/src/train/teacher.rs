//! Domain-adversarial teacher pretraining.
//!
//! The teacher learns source classification while a domain head, fed
//! through a gradient reversal, pushes its features toward domain
//! invariance. Reversal strength follows the usual warm-up
//! `lambda(p) = 2 / (1 + exp(-10 p)) - 1` over training progress
//! `p in [0, 1]`, so early training is dominated by the classification
//! signal. The returned teacher is used frozen and in eval mode from then
//! on.

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::data::{batch_iterator, DomainDataset};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::losses::{loss_ce, loss_ce_grad, loss_dc, loss_dc_grad};
use crate::nets::{
    build_discriminator, build_teacher, zero_grad, Adam, BackboneConfig, GradientReversal, Mode,
    TeacherModel,
};
use crate::rng::derive_seed;

use super::{split_source_validation, EpochTrace, TrainState};

fn default_epochs() -> usize {
    30
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    1e-3
}
fn default_hidden() -> Vec<usize> {
    vec![128]
}
fn default_val_fraction() -> f64 {
    0.2
}
fn default_lambda_scale() -> f64 {
    1.0
}

/// Teacher pretraining hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeacherConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default)]
    pub seed: u64,
    /// Hidden widths of the domain head.
    #[serde(default = "default_hidden")]
    pub disc_hidden: Vec<usize>,
    #[serde(default = "default_val_fraction")]
    pub source_val_fraction: f64,
    /// Multiplier on the warm-up reversal strength; values below 1 damp the
    /// adversarial game when it oscillates on small datasets.
    #[serde(default = "default_lambda_scale")]
    pub grl_lambda_scale: f64,
}

impl Default for TeacherConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

impl TeacherConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config("epochs and batch_size must be >= 1"));
        }
        if self.lr <= 0.0 || !self.lr.is_finite() {
            return Err(Error::config("learning rate must be > 0"));
        }
        if !(0.0..1.0).contains(&self.source_val_fraction) {
            return Err(Error::config("source_val_fraction must be in [0, 1)"));
        }
        if self.grl_lambda_scale < 0.0 || !self.grl_lambda_scale.is_finite() {
            return Err(Error::config("grl_lambda_scale must be >= 0"));
        }
        Ok(())
    }
}

/// Reversal strength at progress `p in [0, 1]`.
pub fn dann_lambda(progress: f64) -> f64 {
    2.0 / (1.0 + (-10.0 * progress).exp()) - 1.0
}

/// Pretrain a teacher with source cross-entropy plus reversed domain BCE.
pub fn pretrain_teacher_dann(
    dataset: &DomainDataset,
    arch: &BackboneConfig,
    cfg: &TeacherConfig,
) -> Result<(TeacherModel, TrainState)> {
    cfg.validate()?;
    if arch.in_channels != dataset.channels()
        || arch.timesteps != dataset.timesteps()
        || arch.n_classes != dataset.n_classes()
    {
        return Err(Error::config(format!(
            "architecture ({} ch, {} steps, {} classes) does not match data ({}, {}, {})",
            arch.in_channels,
            arch.timesteps,
            arch.n_classes,
            dataset.channels(),
            dataset.timesteps(),
            dataset.n_classes()
        )));
    }
    if dataset.n_tgt() == 0 {
        return Err(Error::config("domain-adversarial pretraining needs target samples"));
    }

    let (train_ds, val_ds) = split_source_validation(dataset, cfg.source_val_fraction, cfg.seed)?;
    let mut teacher = build_teacher(arch, cfg.seed)?;
    let mut head = build_discriminator(
        arch.feature_dim,
        &cfg.disc_hidden,
        derive_seed(cfg.seed, "dann-head"),
    )?;
    let mut opt_teacher = Adam::new(cfg.lr);
    let mut opt_head = Adam::new(cfg.lr);

    let steps_per_epoch = train_ds.n_src().min(train_ds.n_tgt()) / cfg.batch_size;
    if steps_per_epoch == 0 {
        return Err(Error::config(format!(
            "batch_size {} exceeds the smaller domain after the validation split",
            cfg.batch_size
        )));
    }
    let total_steps = (cfg.epochs * steps_per_epoch) as f64;

    let mut traces = Vec::with_capacity(cfg.epochs);
    let mut global_step = 0usize;
    for epoch in 1..=cfg.epochs {
        let mut sum_ce = 0.0;
        let mut sum_dc = 0.0;
        let mut sum_acc = 0.0;
        let mut steps = 0usize;
        for batch in batch_iterator(&train_ds, cfg.batch_size, cfg.seed, epoch)? {
            let lambda = cfg.grl_lambda_scale * dann_lambda(global_step as f64 / total_steps);
            let x = batch.combined();
            let (features, logits) = teacher.forward(&x, Mode::Train)?;
            let b = batch.batch_size();

            let z_src = logits.slice(s![0..b, ..]);
            let ce = loss_ce(z_src, &batch.y_src)?;
            let g_ce = loss_ce_grad(z_src, &batch.y_src);
            let mut d_logits = Array2::zeros(logits.raw_dim());
            d_logits.slice_mut(s![0..b, ..]).assign(&g_ce);

            let p_tgt = head.forward(&features, Mode::Train)?;
            let l_d = batch.domain_labels();
            let dc = loss_dc(p_tgt.view(), &l_d)?;
            if !(ce.is_finite() && dc.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step: global_step,
                    detail: format!("teacher pretraining: ce={ce}, dc={dc}"),
                });
            }
            let d_p = loss_dc_grad(p_tgt.view(), &l_d);
            let d_feat_head = head.backward(&d_p);
            let d_features = GradientReversal::new(lambda).backward(&d_feat_head);

            teacher.backward(&d_features, &d_logits);
            opt_teacher.step(&mut teacher);
            opt_head.step(&mut head);
            zero_grad(&mut teacher);
            zero_grad(&mut head);

            let correct = p_tgt
                .iter()
                .zip(&l_d)
                .filter(|(&p, &l)| (p > 0.5) == (l == 1))
                .count();
            sum_acc += correct as f64 / l_d.len() as f64;
            sum_ce += ce;
            sum_dc += dc;
            steps += 1;
            global_step += 1;
        }
        let n = steps as f64;
        traces.push(EpochTrace {
            epoch,
            alpha: None,
            l_dis: None,
            l_gen: None,
            l_jkd: None,
            l_dc: Some(sum_dc / n),
            l_ce: sum_ce / n,
            total: (sum_ce + sum_dc) / n,
            df_accuracy: None,
            dd_accuracy: Some(sum_acc / n),
        });
    }

    let source_val_macro_f1 = match &val_ds {
        Some(val) => {
            let idx: Vec<usize> = val.source_indices().collect();
            Some(evaluate(&mut teacher, val, &idx, false)?.macro_f1)
        }
        None => None,
    };

    Ok((
        teacher,
        TrainState {
            epochs_run: cfg.epochs,
            steps_run: global_step,
            traces,
            alpha_sequence: Vec::new(),
            source_val_macro_f1,
        },
    ))
}
