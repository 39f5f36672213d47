//! Experiment configuration file: one JSON document with optional
//! `teacher`, `distill`, and `arch` sections. Missing sections and fields
//! fall back to the documented defaults, and the effective values are
//! echoed into every `run.json`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use unikd_core::data::DomainDataset;
use unikd_core::nets::BackboneConfig;
use unikd_core::train::{DistillConfig, TeacherConfig};
use unikd_core::{Error, Result};

fn teacher_widths() -> [usize; 3] {
    [64, 128, 256]
}
fn student_widths() -> [usize; 3] {
    [16, 32, 64]
}
fn kernels() -> [usize; 3] {
    [8, 5, 3]
}

/// Backbone shape knobs; input channels, window length, and class count
/// always come from the dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    #[serde(default = "teacher_widths")]
    pub teacher_widths: [usize; 3],
    #[serde(default = "student_widths")]
    pub student_widths: [usize; 3],
    #[serde(default = "kernels")]
    pub kernels: [usize; 3],
}

impl Default for ArchConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("defaults are complete")
    }
}

impl ArchConfig {
    fn backbone(&self, widths: [usize; 3], ds: &DomainDataset) -> BackboneConfig {
        BackboneConfig {
            in_channels: ds.channels(),
            timesteps: ds.timesteps(),
            widths,
            kernels: self.kernels,
            strides: [1, 1, 1],
            pool: 2,
            feature_dim: widths[2],
            n_classes: ds.n_classes(),
        }
    }

    pub fn teacher_arch(&self, ds: &DomainDataset) -> BackboneConfig {
        self.backbone(self.teacher_widths, ds)
    }

    pub fn student_arch(&self, ds: &DomainDataset) -> BackboneConfig {
        self.backbone(self.student_widths, ds)
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ConfigFile {
    #[serde(default)]
    pub teacher: TeacherConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub arch: ArchConfig,
}

impl ConfigFile {
    /// Load a config file, or the all-defaults config when `path` is None.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(ConfigFile::default()),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| {
                    Error::config(format!("cannot read config {}: {e}", p.display()))
                })?;
                let cfg: ConfigFile = serde_json::from_str(&text).map_err(|e| {
                    Error::config(format!("invalid config {}: {e}", p.display()))
                })?;
                cfg.distill.validate()?;
                cfg.teacher.validate()?;
                Ok(cfg)
            }
        }
    }
}
