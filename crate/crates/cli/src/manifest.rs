//! `run.json` manifests and `results.csv` tables.
//!
//! Everything in a manifest is deterministic for fixed inputs except the
//! `timing` object, which is the designated non-reproducible key; byte
//! comparisons between runs should drop it.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use unikd_core::eval::MetricsReport;
use unikd_core::nets::{BackboneConfig, ComplexityReport};
use unikd_core::train::{DistillConfig, TeacherConfig, TrainState};
use unikd_core::{Error, Result};

pub const RUN_FILE: &str = "run.json";
pub const RESULTS_FILE: &str = "results.csv";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Timing {
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub version: u32,
    pub command: String,
    pub scenario: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub teacher_config: Option<TeacherConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub distill_config: Option<DistillConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub teacher_arch: Option<BackboneConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub student_arch: Option<BackboneConfig>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub complexity: Option<ComplexityReport>,
    pub state: TrainState,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub metrics: Option<MetricsReport>,
    pub timing: Timing,
}

impl RunManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(RUN_FILE), serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(RUN_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(RUN_FILE).exists()
    }
}

/// One line of a results table. `seed` is a number for member rows and
/// `"mean"` for aggregates; failed cells carry no scores.
#[derive(Debug, Clone)]
pub struct ResultLine {
    pub scenario: String,
    pub variant: String,
    pub seed: String,
    pub beta: f64,
    pub macro_f1: Option<f64>,
    pub accuracy: Option<f64>,
}

impl ResultLine {
    pub fn failed(&self) -> bool {
        self.macro_f1.is_none()
    }
}

/// Write `results.csv` with the fixed header
/// `scenario,variant,seed,beta,macro_f1,accuracy`.
pub fn write_results_csv(path: &Path, lines: &[ResultLine]) -> Result<()> {
    let mut text = String::from("scenario,variant,seed,beta,macro_f1,accuracy\n");
    for l in lines {
        let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            l.scenario,
            l.variant,
            l.seed,
            l.beta,
            fmt(l.macro_f1),
            fmt(l.accuracy)
        ));
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, text)?;
    Ok(())
}

/// Render an aligned text table of the same lines for stdout.
pub fn render_table(lines: &[ResultLine]) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<12} {:<12} {:>6} {:>6} {:>10} {:>10}\n",
        "scenario", "variant", "seed", "beta", "macro_f1", "accuracy"
    ));
    for l in lines {
        let fmt = |v: Option<f64>| match v {
            Some(x) => format!("{x:.4}"),
            None => "FAILED".to_string(),
        };
        out.push_str(&format!(
            "{:<12} {:<12} {:>6} {:>6} {:>10} {:>10}\n",
            l.scenario,
            l.variant,
            l.seed,
            l.beta,
            fmt(l.macro_f1),
            fmt(l.accuracy)
        ));
    }
    out
}
