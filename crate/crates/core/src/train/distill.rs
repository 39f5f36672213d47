//! The two-step adversarial distillation loop, plus the source-only
//! baseline.
//!
//! Per mini-batch (source block + target block):
//!
//! * step 1 — student and data-domain discriminator fixed. The combined
//!   batch goes through the frozen teacher ("real" features) and the
//!   student plus projection ("fake" features); only the feature-domain
//!   discriminator is updated, on the real/fake objective.
//! * step 2 — feature-domain discriminator fixed. The student minimizes
//!   `L_GEN + (1 - alpha) L_DC + alpha L_JKD + beta L_CE`, updating the
//!   backbone, classifier, projection, and the data-domain discriminator
//!   jointly. Per-sample distillation weights come from the data-domain
//!   discriminator's output and are treated as constants.
//!
//! The teacher is never touched: its eval-mode features and logits are
//! precomputed once per run and looked up per batch.

use ndarray::{s, Array1, Array2};

use crate::data::{batch_iterator, BatchPair, DomainDataset};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::losses::{
    joint_weights, loss_ce, loss_ce_grad, loss_dc, loss_dc_grad, loss_dis, loss_dis_grad_fake,
    loss_dis_grad_real, loss_gen, loss_gen_grad, loss_gen_nonsaturating,
    loss_gen_nonsaturating_grad, loss_jkd, loss_jkd_grad_student, total_student_loss, KlDirection,
    LossBreakdown,
};
use crate::nets::{
    build_discriminator, build_student, build_student_standalone, zero_grad, Adam,
    BackboneConfig, Discriminator, GradientReversal, Mode, StudentForward, StudentModel,
    TeacherModel,
};
use crate::rng::{derive_seed, stream_rng};

use super::{
    split_source_validation, DcGradientMode, DistillConfig, EpochTrace, GenLossForm, TrainState,
    VariantId,
};

/// Step-1 outcome: discriminator loss and accuracy on this batch.
#[derive(Debug, Clone, Copy)]
pub struct Step1Result {
    pub l_dis: f64,
    pub df_accuracy: f64,
}

/// Step-2 outcome: the loss breakdown plus data-domain discriminator
/// accuracy (when one is trained).
#[derive(Debug, Clone, Copy)]
pub struct Step2Result {
    pub breakdown: LossBreakdown,
    pub dd_accuracy: Option<f64>,
}

struct PendingForward {
    fwd: StudentForward,
    ids: Vec<usize>,
}

/// Holds all trainable state of one distillation run and exposes the two
/// update steps separately, so invariants (step isolation, frozen teacher)
/// can be tested directly against the real implementation.
pub struct DistillTrainer {
    pub student: StudentModel,
    pub d_f: Option<Discriminator>,
    pub d_d: Option<Discriminator>,
    cfg: DistillConfig,
    opt_student: Adam,
    opt_d_f: Option<Adam>,
    opt_d_d: Option<Adam>,
    teacher_features: Array2<f64>,
    teacher_logits: Array2<f64>,
    pending: Option<PendingForward>,
}

fn gather_rows(matrix: &Array2<f64>, ids: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((ids.len(), matrix.ncols()));
    for (row, &idx) in ids.iter().enumerate() {
        out.row_mut(row).assign(&matrix.row(idx));
    }
    out
}

fn check_arch_compat(
    what: &str,
    arch: &BackboneConfig,
    dataset: &DomainDataset,
) -> Result<()> {
    if arch.in_channels != dataset.channels()
        || arch.timesteps != dataset.timesteps()
        || arch.n_classes != dataset.n_classes()
    {
        return Err(Error::config(format!(
            "{what} architecture ({} ch, {} steps, {} classes) does not match data ({}, {}, {})",
            arch.in_channels,
            arch.timesteps,
            arch.n_classes,
            dataset.channels(),
            dataset.timesteps(),
            dataset.n_classes()
        )));
    }
    Ok(())
}

impl DistillTrainer {
    /// Build a trainer over `train_ds`. The teacher is cloned internally
    /// for the one-time eval-mode precompute and never mutated.
    pub fn new(
        teacher: &TeacherModel,
        train_ds: &DomainDataset,
        student_arch: &BackboneConfig,
        cfg: &DistillConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if cfg.variant == VariantId::SourceOnly {
            return Err(Error::config(
                "the source-only baseline trains without a teacher; use train_source_only",
            ));
        }
        check_arch_compat("teacher", &teacher.backbone.config, train_ds)?;
        check_arch_compat("student", student_arch, train_ds)?;

        let student = build_student(student_arch, &teacher.backbone.config, cfg.seed)?;

        // Frozen teacher: precompute eval-mode features and logits for every
        // training sample once.
        let mut scratch = teacher.clone();
        let n = train_ds.len();
        let fdim = teacher.backbone.config.feature_dim;
        let classes = teacher.backbone.config.n_classes;
        let mut teacher_features = Array2::zeros((n, fdim));
        let mut teacher_logits = Array2::zeros((n, classes));
        let all: Vec<usize> = (0..n).collect();
        for chunk in all.chunks(256) {
            let x = train_ds.gather(chunk);
            let (f, z) = scratch.forward(&x, Mode::Eval)?;
            for (row, &idx) in chunk.iter().enumerate() {
                teacher_features.row_mut(idx).assign(&f.row(row));
                teacher_logits.row_mut(idx).assign(&z.row(row));
            }
        }

        let d_f = if cfg.variant.uses_df() {
            Some(build_discriminator(
                fdim,
                &cfg.disc_hidden,
                derive_seed(cfg.seed, "feature-discriminator"),
            )?)
        } else {
            None
        };
        let d_d = if cfg.variant.uses_dd() {
            Some(build_discriminator(
                fdim,
                &cfg.disc_hidden,
                derive_seed(cfg.seed, "domain-discriminator"),
            )?)
        } else {
            None
        };

        Ok(DistillTrainer {
            opt_student: Adam::new(cfg.lr_student),
            opt_d_f: d_f.as_ref().map(|_| Adam::new(cfg.lr_d_f)),
            opt_d_d: d_d.as_ref().map(|_| Adam::new(cfg.lr_d_d)),
            student,
            d_f,
            d_d,
            cfg: cfg.clone(),
            teacher_features,
            teacher_logits,
            pending: None,
        })
    }

    /// Step 1: update the feature-domain discriminator on real (teacher)
    /// versus fake (student) features. The student forward computed here is
    /// reused by step 2 — the student does not change in between, so the
    /// outputs are identical to recomputing them. No-op for variants
    /// without that discriminator.
    pub fn step1_update_df(&mut self, batch: &BatchPair) -> Result<Option<Step1Result>> {
        let Some(d_f) = self.d_f.as_mut() else {
            return Ok(None);
        };
        let ids = batch.combined_indices();
        let x = batch.combined();
        let fwd = self.student.forward(&x, Mode::Train)?;
        let f_real = gather_rows(&self.teacher_features, &ids);

        zero_grad(d_f);
        let p_real = d_f.forward(&f_real, Mode::Train)?;
        let g_real = loss_dis_grad_real(p_real.view());
        d_f.backward(&g_real); // teacher features are constants
        let p_fake = d_f.forward(&fwd.projected, Mode::Train)?;
        let g_fake = loss_dis_grad_fake(p_fake.view());
        d_f.backward(&g_fake); // student is fixed in this step
        let l_dis = loss_dis(p_real.view(), p_fake.view())?;

        self.opt_d_f.as_mut().unwrap().step(d_f);
        zero_grad(d_f);

        let n = (p_real.len() + p_fake.len()) as f64;
        let correct = p_real.iter().filter(|&&p| p > 0.5).count()
            + p_fake.iter().filter(|&&p| p < 0.5).count();
        self.pending = Some(PendingForward { fwd, ids });
        Ok(Some(Step1Result {
            l_dis,
            df_accuracy: correct as f64 / n,
        }))
    }

    /// Step 2: with the feature-domain discriminator fixed, minimize the
    /// composite objective, updating student, projection, and data-domain
    /// discriminator jointly.
    pub fn step2_update_student(&mut self, batch: &BatchPair, alpha: f64) -> Result<Step2Result> {
        let ids = batch.combined_indices();
        let fwd = match self.pending.take() {
            Some(p) if p.ids == ids => p.fwd,
            _ => self.student.forward(&batch.combined(), Mode::Train)?,
        };
        let b = batch.batch_size();
        let n2 = 2 * b;

        let mut d_logits = Array2::zeros(fwd.logits.raw_dim());
        let mut d_proj = Array2::zeros(fwd.projected.raw_dim());

        // feature alignment against the (now fixed) discriminator
        let mut l_gen = 0.0;
        if let Some(d_f) = self.d_f.as_mut() {
            let p_fake = d_f.forward(&fwd.projected, Mode::Train)?;
            let (value, g) = match self.cfg.gen_loss_form {
                GenLossForm::Saturating => {
                    (loss_gen(p_fake.view())?, loss_gen_grad(p_fake.view()))
                }
                GenLossForm::NonSaturating => (
                    loss_gen_nonsaturating(p_fake.view())?,
                    loss_gen_nonsaturating_grad(p_fake.view()),
                ),
            };
            d_proj += &d_f.backward(&g);
            // discard the parameter gradients this backward accumulated:
            // the discriminator is fixed in step 2
            zero_grad(d_f);
            l_gen = value;
        }

        // source cross-entropy
        let z_src = fwd.logits.slice(s![0..b, ..]);
        let l_ce = loss_ce(z_src, &batch.y_src)?;
        let g_ce = loss_ce_grad(z_src, &batch.y_src);
        d_logits
            .slice_mut(s![0..b, ..])
            .scaled_add(self.cfg.beta, &g_ce);

        // domain classification and per-sample weights
        let mut l_dc = 0.0;
        let mut dd_accuracy = None;
        let mut weights: Option<Array1<f64>> = None;
        if let Some(d_d) = self.d_d.as_mut() {
            let p_tgt = d_d.forward(&fwd.projected, Mode::Train)?;
            let l_d = batch.domain_labels();
            l_dc = loss_dc(p_tgt.view(), &l_d)?;
            // weights are read off before the update and carry no gradient
            weights = Some(joint_weights(p_tgt.view()));
            let d_p = loss_dc_grad(p_tgt.view(), &l_d).mapv(|g| (1.0 - alpha) * g);
            let d_proj_dc = d_d.backward(&d_p);
            match self.cfg.dc_gradient_mode {
                DcGradientMode::Detach => {}
                DcGradientMode::Reverse => {
                    d_proj += &GradientReversal::new(1.0).backward(&d_proj_dc);
                }
            }
            let correct = p_tgt
                .iter()
                .zip(&l_d)
                .filter(|(&p, &l)| (p > 0.5) == (l == 1))
                .count();
            dd_accuracy = Some(correct as f64 / n2 as f64);
        }

        // logit distillation over the combined batch, teacher as constants
        let mut l_jkd = 0.0;
        if self.cfg.variant.uses_logit_kd() {
            let z_t = gather_rows(&self.teacher_logits, &ids);
            let (w, direction) = if self.cfg.variant.uses_skd() {
                (Array1::ones(n2), KlDirection::TeacherToStudent)
            } else {
                (
                    weights.clone().ok_or_else(|| {
                        Error::config("weighted distillation requires the domain discriminator")
                    })?,
                    self.cfg.kl_direction,
                )
            };
            l_jkd = loss_jkd(fwd.logits.view(), z_t.view(), w.view(), self.cfg.tau, direction)?;
            let g = loss_jkd_grad_student(
                fwd.logits.view(),
                z_t.view(),
                w.view(),
                self.cfg.tau,
                direction,
            );
            d_logits.scaled_add(alpha, &g);
        }

        let breakdown = total_student_loss(l_gen, l_dc, l_jkd, l_ce, alpha, self.cfg.beta)?;

        self.student.backward(&d_proj, &d_logits);
        self.opt_student.step(&mut self.student);
        zero_grad(&mut self.student);
        if let (Some(d_d), Some(opt)) = (self.d_d.as_mut(), self.opt_d_d.as_mut()) {
            opt.step(d_d);
            zero_grad(d_d);
        }

        Ok(Step2Result {
            breakdown,
            dd_accuracy,
        })
    }
}

/// Everything a training run leaves behind: the student (with projection),
/// whichever discriminators the variant trained, and the traces.
pub struct DistillOutput {
    pub student: StudentModel,
    pub d_f: Option<Discriminator>,
    pub d_d: Option<Discriminator>,
    pub state: TrainState,
}

/// Run the full distillation loop. Returns the trained student plus the
/// per-epoch traces; the teacher is read-only throughout.
pub fn distill_unikd(
    teacher: &TeacherModel,
    dataset: &DomainDataset,
    student_arch: &BackboneConfig,
    cfg: &DistillConfig,
) -> Result<DistillOutput> {
    let (train_ds, val_ds) = split_source_validation(dataset, cfg.source_val_fraction, cfg.seed)?;
    let mut trainer = DistillTrainer::new(teacher, &train_ds, student_arch, cfg)?;
    let schedule = cfg.alpha.schedule(cfg.epochs)?;
    let alpha_sequence: Vec<f64> = (1..=cfg.epochs)
        .map(|m| schedule.alpha_at_epoch(m))
        .collect::<Result<_>>()?;

    let mut traces = Vec::with_capacity(cfg.epochs);
    let mut steps_run = 0usize;
    for epoch in 1..=cfg.epochs {
        let alpha = alpha_sequence[epoch - 1];
        let mut sums = [0.0f64; 6]; // dis, gen, jkd, dc, ce, total
        let mut df_acc_sum = 0.0;
        let mut dd_acc_sum = 0.0;
        let mut steps = 0usize;
        for batch in batch_iterator(&train_ds, cfg.batch_size, cfg.seed, epoch)? {
            let s1 = trainer.step1_update_df(&batch)?;
            let s2 = trainer.step2_update_student(&batch, alpha)?;
            let b = s2.breakdown;
            let l_dis = s1.map_or(0.0, |s| s.l_dis);
            let vals = [l_dis, b.l_gen, b.l_jkd, b.l_dc, b.l_ce, b.total];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Diverged {
                    epoch,
                    step: steps_run,
                    detail: format!(
                        "l_dis={l_dis}, l_gen={}, l_jkd={}, l_dc={}, l_ce={}, total={}, alpha={alpha}",
                        b.l_gen, b.l_jkd, b.l_dc, b.l_ce, b.total
                    ),
                });
            }
            for (acc, v) in sums.iter_mut().zip(vals) {
                *acc += v;
            }
            df_acc_sum += s1.map_or(0.0, |s| s.df_accuracy);
            dd_acc_sum += s2.dd_accuracy.unwrap_or(0.0);
            steps += 1;
            steps_run += 1;
        }
        let n = steps as f64;
        traces.push(EpochTrace {
            epoch,
            alpha: Some(alpha),
            l_dis: Some(sums[0] / n),
            l_gen: Some(sums[1] / n),
            l_jkd: Some(sums[2] / n),
            l_dc: Some(sums[3] / n),
            l_ce: sums[4] / n,
            total: sums[5] / n,
            df_accuracy: cfg.variant.uses_df().then(|| df_acc_sum / n),
            dd_accuracy: cfg.variant.uses_dd().then(|| dd_acc_sum / n),
        });
    }

    let source_val_macro_f1 = match &val_ds {
        Some(val) => {
            let idx: Vec<usize> = val.source_indices().collect();
            Some(evaluate(&mut trainer.student, val, &idx, false)?.macro_f1)
        }
        None => None,
    };

    Ok(DistillOutput {
        student: trainer.student,
        d_f: trainer.d_f,
        d_d: trainer.d_d,
        state: TrainState {
            epochs_run: cfg.epochs,
            steps_run,
            traces,
            alpha_sequence,
            source_val_macro_f1,
        },
    })
}

/// Source-only baseline: plain cross-entropy on labeled source batches.
/// The target block is never visited; the projection head stays at init.
pub fn train_source_only(
    dataset: &DomainDataset,
    student_arch: &BackboneConfig,
    cfg: &DistillConfig,
) -> Result<DistillOutput> {
    cfg.validate()?;
    check_arch_compat("student", student_arch, dataset)?;
    let (train_ds, val_ds) = split_source_validation(dataset, cfg.source_val_fraction, cfg.seed)?;
    if cfg.batch_size > train_ds.n_src() {
        return Err(Error::config(format!(
            "batch_size {} exceeds the source split ({} samples)",
            cfg.batch_size,
            train_ds.n_src()
        )));
    }

    let mut student = build_student_standalone(student_arch, cfg.seed)?;
    let mut opt = Adam::new(cfg.lr_student);
    let steps_per_epoch = train_ds.n_src() / cfg.batch_size;

    let mut traces = Vec::with_capacity(cfg.epochs);
    let mut steps_run = 0usize;
    for epoch in 1..=cfg.epochs {
        let mut order: Vec<usize> = train_ds.source_indices().collect();
        use rand::seq::SliceRandom;
        order.shuffle(&mut stream_rng(cfg.seed, &format!("shuffle-src-{epoch}")));

        let mut sum_ce = 0.0;
        for step in 0..steps_per_epoch {
            let idx = &order[step * cfg.batch_size..(step + 1) * cfg.batch_size];
            let x = train_ds.gather(idx);
            let y = train_ds.labels(idx)?;
            let fwd = student.forward(&x, Mode::Train)?;
            let ce = loss_ce(fwd.logits.view(), &y)?;
            if !ce.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    step: steps_run,
                    detail: format!("source-only: ce={ce}"),
                });
            }
            let g_ce = loss_ce_grad(fwd.logits.view(), &y);
            let d_proj = Array2::zeros(fwd.projected.raw_dim());
            student.backward(&d_proj, &g_ce);
            opt.step(&mut student);
            zero_grad(&mut student);
            sum_ce += ce;
            steps_run += 1;
        }
        let mean_ce = sum_ce / steps_per_epoch as f64;
        traces.push(EpochTrace {
            epoch,
            alpha: None,
            l_dis: None,
            l_gen: None,
            l_jkd: None,
            l_dc: None,
            l_ce: mean_ce,
            total: mean_ce,
            df_accuracy: None,
            dd_accuracy: None,
        });
    }

    let source_val_macro_f1 = match &val_ds {
        Some(val) => {
            let idx: Vec<usize> = val.source_indices().collect();
            Some(evaluate(&mut student, val, &idx, false)?.macro_f1)
        }
        None => None,
    };

    Ok(DistillOutput {
        student,
        d_f: None,
        d_d: None,
        state: TrainState {
            epochs_run: cfg.epochs,
            steps_run,
            traces,
            alpha_sequence: Vec::new(),
            source_val_macro_f1,
        },
    })
}
