//! Multi-run drivers: the variant ablation grid and the beta sweep.

use crate::data::DomainDataset;
use crate::error::{Error, Result};
use crate::eval::{evaluate_target, MetricsReport};
use crate::nets::{BackboneConfig, TeacherModel};

use super::distill::{distill_unikd, train_source_only, DistillOutput};
use super::{DistillConfig, VariantId};

/// One completed (variant, seed) cell.
#[derive(Debug, Clone)]
pub struct AblationRow {
    pub variant: VariantId,
    pub seed: u64,
    pub beta: f64,
    pub report: MetricsReport,
}

/// Mean over seeds for one variant (or one beta value).
#[derive(Debug, Clone)]
pub struct AggregateRow {
    pub variant: VariantId,
    pub beta: f64,
    pub n_seeds: usize,
    pub mean_macro_f1: f64,
    pub mean_accuracy: f64,
}

#[derive(Debug, Clone, Default)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    pub aggregates: Vec<AggregateRow>,
}

impl AblationTable {
    pub fn aggregate_for(&self, variant: VariantId, beta: f64) -> Option<&AggregateRow> {
        self.aggregates
            .iter()
            .find(|a| a.variant == variant && a.beta == beta)
    }
}

/// Train one (variant, seed) cell and score it on the full target block.
pub fn run_variant(
    teacher: &TeacherModel,
    dataset: &DomainDataset,
    student_arch: &BackboneConfig,
    cfg: &DistillConfig,
    scenario: &str,
) -> Result<(DistillOutput, MetricsReport)> {
    let mut out = match cfg.variant {
        VariantId::SourceOnly => train_source_only(dataset, student_arch, cfg)?,
        _ => distill_unikd(teacher, dataset, student_arch, cfg)?,
    };
    let report = evaluate_target(&mut out.student, dataset)?.tagged(
        scenario,
        cfg.variant.name(),
        cfg.seed,
    );
    Ok((out, report))
}

fn aggregate(rows: &[AblationRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(VariantId, u64)> = Vec::new();
    for r in rows {
        let key = (r.variant, r.beta.to_bits());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(variant, beta_bits)| {
            let beta = f64::from_bits(beta_bits);
            let members: Vec<&AblationRow> = rows
                .iter()
                .filter(|r| r.variant == variant && r.beta.to_bits() == beta_bits)
                .collect();
            let n = members.len() as f64;
            AggregateRow {
                variant,
                beta,
                n_seeds: members.len(),
                mean_macro_f1: members.iter().map(|r| r.report.macro_f1).sum::<f64>() / n,
                mean_accuracy: members.iter().map(|r| r.report.accuracy).sum::<f64>() / n,
            }
        })
        .collect()
}

/// Train every (variant, seed) cell and aggregate per variant.
pub fn run_ablation(
    teacher: &TeacherModel,
    dataset: &DomainDataset,
    student_arch: &BackboneConfig,
    base_cfg: &DistillConfig,
    variants: &[VariantId],
    seeds: &[u64],
    scenario: &str,
) -> Result<AblationTable> {
    if variants.is_empty() {
        return Err(Error::config("ablation needs at least one variant"));
    }
    if seeds.is_empty() {
        return Err(Error::config("ablation needs at least one seed"));
    }
    let mut rows = Vec::with_capacity(variants.len() * seeds.len());
    for &variant in variants {
        for &seed in seeds {
            let mut cfg = base_cfg.clone();
            cfg.variant = variant;
            cfg.seed = seed;
            let (_, report) = run_variant(teacher, dataset, student_arch, &cfg, scenario)?;
            rows.push(AblationRow {
                variant,
                seed,
                beta: cfg.beta,
                report,
            });
        }
    }
    let aggregates = aggregate(&rows);
    Ok(AblationTable { rows, aggregates })
}

/// Deduplicate beta values (exact bit equality), keeping first occurrence
/// order. Returns the kept values and the dropped duplicates.
pub fn dedup_betas(values: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for &v in values {
        if kept.iter().any(|&k: &f64| k.to_bits() == v.to_bits()) {
            dropped.push(v);
        } else {
            kept.push(v);
        }
    }
    (kept, dropped)
}

/// Full-variant runs across beta values and seeds, aggregated per beta.
pub fn sweep_beta(
    teacher: &TeacherModel,
    dataset: &DomainDataset,
    student_arch: &BackboneConfig,
    base_cfg: &DistillConfig,
    betas: &[f64],
    seeds: &[u64],
    scenario: &str,
) -> Result<AblationTable> {
    if betas.is_empty() {
        return Err(Error::config("beta sweep needs at least one value"));
    }
    if seeds.is_empty() {
        return Err(Error::config("beta sweep needs at least one seed"));
    }
    for &b in betas {
        if b < 0.0 || !b.is_finite() {
            return Err(Error::config(format!("invalid beta {b}")));
        }
    }
    let mut rows = Vec::new();
    for &beta in betas {
        for &seed in seeds {
            let mut cfg = base_cfg.clone();
            cfg.variant = VariantId::Full;
            cfg.beta = beta;
            cfg.seed = seed;
            let (_, report) = run_variant(teacher, dataset, student_arch, &cfg, scenario)?;
            rows.push(AblationRow {
                variant: VariantId::Full,
                seed,
                beta,
                report,
            });
        }
    }
    let aggregates = aggregate(&rows);
    Ok(AblationTable { rows, aggregates })
}
