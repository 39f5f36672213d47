//! Checkpoints: model weights plus everything needed to rebuild and audit
//! them.
//!
//! A checkpoint directory holds the weights files (`weights.json` +
//! `weights.bin`) and a `checkpoint.json` with the format version,
//! architectures, the effective config, and a summary of the run. Student
//! checkpoints bundle the projection and both discriminators under name
//! prefixes, so one weights file round-trips the entire trainable state of
//! a run.

use std::fs;
use std::path::Path;

use ndarray::{ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nets::params::ParamVisitorMut;
use crate::nets::{
    build_discriminator, build_student, build_student_standalone, build_teacher, load_weights,
    save_weights, BackboneConfig, Discriminator, Network, StudentModel, TeacherModel,
};

use super::{DistillConfig, TeacherConfig, TrainState, VariantId};

pub const CHECKPOINT_META: &str = "checkpoint.json";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Teacher,
    Student,
}

/// Compact run summary embedded in the checkpoint.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub epochs_run: usize,
    pub steps_run: usize,
    pub final_total_loss: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub source_val_macro_f1: Option<f64>,
}

impl TrainSummary {
    pub fn from_state(state: &TrainState) -> Self {
        TrainSummary {
            epochs_run: state.epochs_run,
            steps_run: state.steps_run,
            final_total_loss: state.traces.last().map(|t| t.total),
            source_val_macro_f1: state.source_val_macro_f1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub kind: CheckpointKind,
    pub teacher_arch: Option<BackboneConfig>,
    pub student_arch: Option<BackboneConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub teacher_config: Option<TeacherConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distill_config: Option<DistillConfig>,
    pub has_d_f: bool,
    pub has_d_d: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub summary: Option<TrainSummary>,
}

/// Several networks exposed as one, each under a name prefix.
struct Composite<'a> {
    parts: Vec<(&'static str, &'a dyn Network)>,
}

impl Network for Composite<'_> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (prefix, net) in &self.parts {
            net.visit_params(&mut |name, v| f(&format!("{prefix}.{name}"), v));
        }
    }
    fn visit_params_mut(&mut self, _f: &mut ParamVisitorMut<'_>) {
        unreachable!("read-only composite");
    }
    fn visit_buffers(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (prefix, net) in &self.parts {
            net.visit_buffers(&mut |name, v| f(&format!("{prefix}.{name}"), v));
        }
    }
}

struct CompositeMut<'a> {
    parts: Vec<(&'static str, &'a mut dyn Network)>,
}

impl Network for CompositeMut<'_> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (prefix, net) in &self.parts {
            net.visit_params(&mut |name, v| f(&format!("{prefix}.{name}"), v));
        }
    }
    fn visit_params_mut(&mut self, f: &mut ParamVisitorMut<'_>) {
        for (prefix, net) in &mut self.parts {
            net.visit_params_mut(&mut |name, v, g| f(&format!("{prefix}.{name}"), v, g));
        }
    }
    fn visit_buffers(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (prefix, net) in &self.parts {
            net.visit_buffers(&mut |name, v| f(&format!("{prefix}.{name}"), v));
        }
    }
    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        for (prefix, net) in &mut self.parts {
            net.visit_buffers_mut(&mut |name, v| f(&format!("{prefix}.{name}"), v));
        }
    }
}

fn write_meta(dir: &Path, meta: &CheckpointMeta) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(
        dir.join(CHECKPOINT_META),
        serde_json::to_string_pretty(meta)?,
    )?;
    Ok(())
}

fn read_meta(dir: &Path) -> Result<CheckpointMeta> {
    let path = dir.join(CHECKPOINT_META);
    if !path.exists() {
        return Err(Error::config(format!(
            "{} is not a checkpoint directory (missing {CHECKPOINT_META})",
            dir.display()
        )));
    }
    let meta: CheckpointMeta = serde_json::from_str(&fs::read_to_string(path)?)?;
    if meta.version != CHECKPOINT_VERSION {
        return Err(Error::config(format!(
            "unsupported checkpoint version {}",
            meta.version
        )));
    }
    Ok(meta)
}

pub fn save_teacher_checkpoint(
    dir: &Path,
    teacher: &TeacherModel,
    cfg: &TeacherConfig,
    state: &TrainState,
) -> Result<()> {
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        kind: CheckpointKind::Teacher,
        teacher_arch: Some(teacher.backbone.config.clone()),
        student_arch: None,
        teacher_config: Some(cfg.clone()),
        distill_config: None,
        has_d_f: false,
        has_d_d: false,
        summary: Some(TrainSummary::from_state(state)),
    };
    write_meta(dir, &meta)?;
    save_weights(
        &Composite {
            parts: vec![("teacher", teacher)],
        },
        dir,
    )
}

pub fn load_teacher_checkpoint(dir: &Path) -> Result<(TeacherModel, CheckpointMeta)> {
    let meta = read_meta(dir)?;
    if meta.kind != CheckpointKind::Teacher {
        return Err(Error::config(format!(
            "{} holds a {:?} checkpoint, expected a teacher",
            dir.display(),
            meta.kind
        )));
    }
    let arch = meta
        .teacher_arch
        .as_ref()
        .ok_or_else(|| Error::config("teacher checkpoint lacks its architecture"))?;
    let mut teacher = build_teacher(arch, 0)?;
    let mut composite = CompositeMut {
        parts: vec![("teacher", &mut teacher)],
    };
    load_weights(&mut composite, dir)?;
    Ok((teacher, meta))
}

/// A student checkpoint's full contents.
pub struct StudentBundle {
    pub student: StudentModel,
    pub d_f: Option<Discriminator>,
    pub d_d: Option<Discriminator>,
    pub meta: CheckpointMeta,
}

pub fn save_student_checkpoint(
    dir: &Path,
    student: &StudentModel,
    d_f: Option<&Discriminator>,
    d_d: Option<&Discriminator>,
    teacher_arch: Option<&BackboneConfig>,
    cfg: &DistillConfig,
    state: &TrainState,
) -> Result<()> {
    let meta = CheckpointMeta {
        version: CHECKPOINT_VERSION,
        kind: CheckpointKind::Student,
        teacher_arch: teacher_arch.cloned(),
        student_arch: Some(student.backbone.config.clone()),
        teacher_config: None,
        distill_config: Some(cfg.clone()),
        has_d_f: d_f.is_some(),
        has_d_d: d_d.is_some(),
        summary: Some(TrainSummary::from_state(state)),
    };
    write_meta(dir, &meta)?;
    let mut parts: Vec<(&'static str, &dyn Network)> = vec![("student", student)];
    if let Some(d) = d_f {
        parts.push(("d_f", d));
    }
    if let Some(d) = d_d {
        parts.push(("d_d", d));
    }
    save_weights(&Composite { parts }, dir)
}

pub fn load_student_checkpoint(dir: &Path) -> Result<StudentBundle> {
    let meta = read_meta(dir)?;
    if meta.kind != CheckpointKind::Student {
        return Err(Error::config(format!(
            "{} holds a {:?} checkpoint, expected a student",
            dir.display(),
            meta.kind
        )));
    }
    let student_arch = meta
        .student_arch
        .as_ref()
        .ok_or_else(|| Error::config("student checkpoint lacks its architecture"))?;
    let cfg = meta
        .distill_config
        .clone()
        .ok_or_else(|| Error::config("student checkpoint lacks its config"))?;

    let mut student = match (&meta.teacher_arch, cfg.variant) {
        (_, VariantId::SourceOnly) | (None, _) => build_student_standalone(student_arch, 0)?,
        (Some(t), _) => build_student(student_arch, t, 0)?,
    };
    let proj_dim = meta
        .teacher_arch
        .as_ref()
        .filter(|_| cfg.variant != VariantId::SourceOnly)
        .map_or(student_arch.feature_dim, |t| t.feature_dim);
    let mut d_f = if meta.has_d_f {
        Some(build_discriminator(proj_dim, &cfg.disc_hidden, 0)?)
    } else {
        None
    };
    let mut d_d = if meta.has_d_d {
        Some(build_discriminator(proj_dim, &cfg.disc_hidden, 0)?)
    } else {
        None
    };

    {
        let mut parts: Vec<(&'static str, &mut dyn Network)> = vec![("student", &mut student)];
        if let Some(d) = d_f.as_mut() {
            parts.push(("d_f", d));
        }
        if let Some(d) = d_d.as_mut() {
            parts.push(("d_d", d));
        }
        load_weights(&mut CompositeMut { parts }, dir)?;
    }

    Ok(StudentBundle {
        student,
        d_f,
        d_d,
        meta,
    })
}
