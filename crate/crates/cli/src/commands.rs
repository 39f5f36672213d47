//! Subcommand implementations.
//!
//! All training commands normalize the dataset with source-only statistics
//! right after loading, so every model in a pipeline sees the same
//! transform. Multi-run commands are resumable: a cell whose `run.json`
//! already exists is read back instead of retrained.

use std::path::Path;
use std::time::Instant;

use unikd_core::data::{
    generate_synthetic, load_dataset, normalize, save_dataset, DomainDataset, SyntheticShiftSpec,
};
use unikd_core::eval::{evaluate_target, export_features};
use unikd_core::nets::{BackboneConfig, ComplexityReport, TeacherModel};
use unikd_core::train::{
    checkpoint::CheckpointKind, dedup_betas, distill_unikd, load_student_checkpoint,
    load_teacher_checkpoint, pretrain_teacher_dann, save_student_checkpoint,
    save_teacher_checkpoint, train_source_only, DistillConfig, DistillOutput, VariantId,
};
use unikd_core::{Error, Result};

use crate::config::ConfigFile;
use crate::manifest::{
    render_table, write_results_csv, ResultLine, RunManifest, Timing, RESULTS_FILE,
};

fn scenario_of(data: &Path) -> String {
    data.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".to_string())
}

fn load_normalized(data: &Path) -> Result<DomainDataset> {
    normalize(&load_dataset(data)?)
}

fn timing(t0: Instant) -> Timing {
    Timing {
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
    }
}

pub fn cmd_gen_data(spec_path: &Path, out: &Path, seed: Option<u64>) -> Result<()> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::config(format!("cannot read spec {}: {e}", spec_path.display())))?;
    let mut spec: SyntheticShiftSpec = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("invalid spec {}: {e}", spec_path.display())))?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dataset = generate_synthetic(&spec)?;
    save_dataset(&dataset, out)?;
    println!(
        "wrote {} ({} source + {} target samples, {} classes, {}x{} window)",
        out.display(),
        dataset.n_src(),
        dataset.n_tgt(),
        dataset.n_classes(),
        dataset.channels(),
        dataset.timesteps()
    );
    println!(
        "shift: amplitude x{}, phase +{} rad, extra noise {}, seed {}",
        spec.amplitude_scale, spec.phase_offset, spec.additive_noise_std, spec.seed
    );
    Ok(())
}

pub fn cmd_train_teacher(data: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let t0 = Instant::now();
    let ds = load_normalized(data)?;
    let cfg = ConfigFile::load(config)?;
    let arch = cfg.arch.teacher_arch(&ds);

    let (mut teacher, state) = pretrain_teacher_dann(&ds, &arch, &cfg.teacher)?;
    save_teacher_checkpoint(out, &teacher, &cfg.teacher, &state)?;

    let complexity = unikd_core::nets::build_student(&cfg.arch.student_arch(&ds), &arch, 0)
        .ok()
        .map(|student| ComplexityReport::compare(&teacher, &student));
    let metrics = evaluate_target(&mut teacher, &ds)?.tagged(
        &scenario_of(data),
        "teacher",
        cfg.teacher.seed,
    );

    let manifest = RunManifest {
        version: 1,
        command: "train-teacher".into(),
        scenario: scenario_of(data),
        teacher_config: Some(cfg.teacher.clone()),
        distill_config: None,
        teacher_arch: Some(arch),
        student_arch: None,
        complexity,
        state,
        metrics: Some(metrics.clone()),
        timing: timing(t0),
    };
    manifest.save(out)?;
    println!(
        "teacher ready: target macro-F1 {:.4}, checkpoint at {}",
        metrics.macro_f1,
        out.display()
    );
    Ok(())
}

/// Train one (variant, seed) cell, checkpoint it, and score the
/// checkpointed weights on the full target block.
fn run_cell(
    ds: &DomainDataset,
    scenario: &str,
    teacher: Option<&TeacherModel>,
    student_arch: &BackboneConfig,
    cfg: &DistillConfig,
    out_dir: &Path,
    command: &str,
) -> Result<RunManifest> {
    let t0 = Instant::now();
    let output: DistillOutput = match (cfg.variant, teacher) {
        (VariantId::SourceOnly, _) => train_source_only(ds, student_arch, cfg)?,
        (_, Some(t)) => distill_unikd(t, ds, student_arch, cfg)?,
        (_, None) => {
            return Err(Error::config(
                "this variant distills from a teacher; pass --teacher",
            ))
        }
    };
    let teacher_arch = teacher.map(|t| t.backbone.config.clone());
    save_student_checkpoint(
        out_dir,
        &output.student,
        output.d_f.as_ref(),
        output.d_d.as_ref(),
        teacher_arch.as_ref(),
        cfg,
        &output.state,
    )?;

    // score the artifact, not the in-memory model: reload the checkpoint
    let mut bundle = load_student_checkpoint(out_dir)?;
    let metrics =
        evaluate_target(&mut bundle.student, ds)?.tagged(scenario, cfg.variant.name(), cfg.seed);
    let complexity = teacher.map(|t| ComplexityReport::compare(t, &bundle.student));

    let manifest = RunManifest {
        version: 1,
        command: command.into(),
        scenario: scenario.into(),
        teacher_config: None,
        distill_config: Some(cfg.clone()),
        teacher_arch,
        student_arch: Some(student_arch.clone()),
        complexity,
        state: output.state,
        metrics: Some(metrics),
        timing: timing(t0),
    };
    manifest.save(out_dir)?;
    Ok(manifest)
}

fn load_teacher_if_needed(
    teacher: Option<&Path>,
    variant: VariantId,
) -> Result<Option<TeacherModel>> {
    match (variant, teacher) {
        (VariantId::SourceOnly, _) => Ok(None),
        (_, Some(path)) => Ok(Some(load_teacher_checkpoint(path)?.0)),
        (_, None) => Err(Error::config(
            "this variant distills from a teacher; pass --teacher",
        )),
    }
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_distill(
    data: &Path,
    teacher: Option<&Path>,
    config: Option<&Path>,
    variant: Option<&str>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    let ds = load_normalized(data)?;
    let cfg_file = ConfigFile::load(config)?;
    let mut cfg = cfg_file.distill.clone();
    if let Some(v) = variant {
        cfg.variant = VariantId::parse(v)?;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let teacher_model = load_teacher_if_needed(teacher, cfg.variant)?;
    let student_arch = cfg_file.arch.student_arch(&ds);
    let manifest = run_cell(
        &ds,
        &scenario_of(data),
        teacher_model.as_ref(),
        &student_arch,
        &cfg,
        out,
        "distill",
    )?;
    let m = manifest.metrics.as_ref().unwrap();
    println!(
        "{} seed {}: target macro-F1 {:.4}, accuracy {:.4}",
        cfg.variant.name(),
        cfg.seed,
        m.macro_f1,
        m.accuracy
    );
    Ok(())
}

/// Grid driver shared by `ablate` and `sweep-beta`: run every cell
/// (resuming finished ones), tolerate per-cell numerical failures, and
/// aggregate per group.
fn run_grid(
    ds: &DomainDataset,
    scenario: &str,
    teacher: &TeacherModel,
    student_arch: &BackboneConfig,
    cells: Vec<(String, DistillConfig)>,
    out: &Path,
    command: &str,
) -> Result<Vec<ResultLine>> {
    let mut lines = Vec::new();
    for (cell_name, cfg) in &cells {
        let cell_dir = out.join(cell_name);
        let manifest = if RunManifest::exists(&cell_dir) {
            println!("[{cell_name}] already done, skipping");
            Some(RunManifest::load(&cell_dir)?)
        } else {
            let teacher_opt =
                (cfg.variant != VariantId::SourceOnly).then_some(teacher);
            match run_cell(ds, scenario, teacher_opt, student_arch, cfg, &cell_dir, command) {
                Ok(m) => {
                    let f1 = m.metrics.as_ref().map(|x| x.macro_f1).unwrap_or(f64::NAN);
                    println!("[{cell_name}] target macro-F1 {f1:.4}");
                    Some(m)
                }
                Err(e) if e.is_numerical() => {
                    eprintln!("[{cell_name}] FAILED: {e}");
                    None
                }
                Err(e) => return Err(e),
            }
        };
        lines.push(ResultLine {
            scenario: scenario.to_string(),
            variant: cfg.variant.name().to_string(),
            seed: cfg.seed.to_string(),
            beta: cfg.beta,
            macro_f1: manifest
                .as_ref()
                .and_then(|m| m.metrics.as_ref())
                .map(|m| m.macro_f1),
            accuracy: manifest
                .as_ref()
                .and_then(|m| m.metrics.as_ref())
                .map(|m| m.accuracy),
        });
    }
    Ok(lines)
}

/// Append one aggregate line per (variant, beta) group; groups whose every
/// member failed aggregate to a failed line.
fn aggregate_lines(lines: &[ResultLine]) -> Vec<ResultLine> {
    let mut groups: Vec<(String, u64)> = Vec::new();
    for l in lines {
        let key = (l.variant.clone(), l.beta.to_bits());
        if !groups.contains(&key) {
            groups.push(key);
        }
    }
    groups
        .into_iter()
        .map(|(variant, beta_bits)| {
            let members: Vec<&ResultLine> = lines
                .iter()
                .filter(|l| l.variant == variant && l.beta.to_bits() == beta_bits && !l.failed())
                .collect();
            let n = members.len() as f64;
            let (f1, acc) = if members.is_empty() {
                (None, None)
            } else {
                (
                    Some(members.iter().map(|l| l.macro_f1.unwrap()).sum::<f64>() / n),
                    Some(members.iter().map(|l| l.accuracy.unwrap()).sum::<f64>() / n),
                )
            };
            ResultLine {
                scenario: lines[0].scenario.clone(),
                variant,
                seed: "mean".to_string(),
                beta: f64::from_bits(beta_bits),
                macro_f1: f1,
                accuracy: acc,
            }
        })
        .collect()
}

pub fn cmd_ablate(
    data: &Path,
    teacher: &Path,
    config: Option<&Path>,
    seeds: &[u64],
    out: &Path,
) -> Result<()> {
    if seeds.is_empty() {
        return Err(Error::config("--seeds must list at least one seed"));
    }
    let ds = load_normalized(data)?;
    let cfg_file = ConfigFile::load(config)?;
    let (teacher_model, _) = load_teacher_checkpoint(teacher)?;
    let student_arch = cfg_file.arch.student_arch(&ds);
    let scenario = scenario_of(data);

    let mut cells = Vec::new();
    for variant in VariantId::ALL {
        for &seed in seeds {
            let mut cfg = cfg_file.distill.clone();
            cfg.variant = variant;
            cfg.seed = seed;
            cells.push((format!("{}_seed{}", variant.name(), seed), cfg));
        }
    }
    let mut lines = run_grid(
        &ds,
        &scenario,
        &teacher_model,
        &student_arch,
        cells,
        out,
        "ablate",
    )?;
    lines.extend(aggregate_lines(&lines));
    write_results_csv(&out.join(RESULTS_FILE), &lines)?;
    print!("{}", render_table(&lines));
    Ok(())
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_sweep_beta(
    data: &Path,
    teacher: &Path,
    config: Option<&Path>,
    values: &[f64],
    seeds: &[u64],
    out: &Path,
) -> Result<()> {
    if values.is_empty() {
        return Err(Error::config("--values must list at least one beta"));
    }
    if seeds.is_empty() {
        return Err(Error::config("--seeds must list at least one seed"));
    }
    for &b in values {
        if b < 0.0 || !b.is_finite() {
            return Err(Error::config(format!("invalid beta {b}")));
        }
    }
    let (betas, dropped) = dedup_betas(values);
    for d in dropped {
        eprintln!("warning: duplicate beta {d} ignored");
    }
    let ds = load_normalized(data)?;
    let cfg_file = ConfigFile::load(config)?;
    let (teacher_model, _) = load_teacher_checkpoint(teacher)?;
    let student_arch = cfg_file.arch.student_arch(&ds);
    let scenario = scenario_of(data);

    let mut cells = Vec::new();
    for &beta in &betas {
        for &seed in seeds {
            let mut cfg = cfg_file.distill.clone();
            cfg.variant = VariantId::Full;
            cfg.beta = beta;
            cfg.seed = seed;
            cells.push((format!("beta{beta}_seed{seed}"), cfg));
        }
    }
    let mut lines = run_grid(
        &ds,
        &scenario,
        &teacher_model,
        &student_arch,
        cells,
        out,
        "sweep-beta",
    )?;
    lines.extend(aggregate_lines(&lines));
    write_results_csv(&out.join(RESULTS_FILE), &lines)?;
    print!("{}", render_table(&lines));
    Ok(())
}

pub fn cmd_dump_features(
    data: &Path,
    checkpoint: &Path,
    split: &str,
    out: &Path,
) -> Result<()> {
    let ds = load_normalized(data)?;
    let indices: Vec<usize> = match split {
        "source" => ds.source_indices().collect(),
        "target" => ds.target_indices().collect(),
        "all" => (0..ds.len()).collect(),
        other => {
            return Err(Error::config(format!(
                "unknown split {other:?}; expected source, target, or all"
            )))
        }
    };

    let meta_path = checkpoint.join(unikd_core::train::checkpoint::CHECKPOINT_META);
    let meta: unikd_core::train::CheckpointMeta = serde_json::from_str(
        &std::fs::read_to_string(&meta_path)
            .map_err(|e| Error::config(format!("cannot read {}: {e}", meta_path.display())))?,
    )?;
    match meta.kind {
        CheckpointKind::Teacher => {
            let (mut teacher, _) = load_teacher_checkpoint(checkpoint)?;
            export_features(&mut teacher, &ds, &indices, out)?;
        }
        CheckpointKind::Student => {
            let mut bundle = load_student_checkpoint(checkpoint)?;
            export_features(&mut bundle.student, &ds, &indices, out)?;
        }
    }
    println!("wrote {} rows to {}", indices.len(), out.display());
    Ok(())
}
