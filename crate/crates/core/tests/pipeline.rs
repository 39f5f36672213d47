//! Cross-module pipeline tests on desk-scale data.

use unikd_core::data::{
    batch_iterator, generate_synthetic, load_dataset, normalize, save_dataset, DomainDataset,
    SyntheticShiftSpec,
};
use unikd_core::eval::evaluate_target;
use unikd_core::losses::{loss_dc, loss_dc_grad};
use unikd_core::nets::{build_discriminator, zero_grad, Adam, BackboneConfig, Mode};
use unikd_core::train::{
    distill_unikd, pretrain_teacher_dann, train_source_only, DistillConfig, TeacherConfig,
    VariantId,
};

fn tiny_teacher_arch(ds: &DomainDataset) -> BackboneConfig {
    BackboneConfig {
        in_channels: ds.channels(),
        timesteps: ds.timesteps(),
        widths: [8, 12, 16],
        kernels: [5, 3, 3],
        strides: [1, 1, 1],
        pool: 2,
        feature_dim: 16,
        n_classes: ds.n_classes(),
    }
}

fn tiny_student_arch(teacher: &BackboneConfig) -> BackboneConfig {
    BackboneConfig {
        widths: [4, 6, 8],
        feature_dim: 8,
        ..teacher.clone()
    }
}

/// Generate -> save -> load -> normalize -> pretrain -> distill ->
/// evaluate, asserting the hidden-label tripwire stays silent until
/// evaluation touches it.
#[test]
fn end_to_end_pipeline_respects_the_label_tripwire() {
    let mut spec = SyntheticShiftSpec::identity(3, 2, 32, 90, 77);
    spec.amplitude_scale = 1.5;
    spec.phase_offset = 0.8;
    spec.additive_noise_std = 0.1;
    let generated = generate_synthetic(&spec).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ds");
    save_dataset(&generated, &path).unwrap();
    let ds = normalize(&load_dataset(&path).unwrap()).unwrap();

    let teacher_arch = tiny_teacher_arch(&ds);
    let tcfg = TeacherConfig {
        epochs: 4,
        batch_size: 16,
        ..TeacherConfig::default()
    };
    let (teacher, tstate) = pretrain_teacher_dann(&ds, &teacher_arch, &tcfg).unwrap();
    assert_eq!(tstate.traces.len(), 4);

    let cfg = DistillConfig {
        epochs: 3,
        batch_size: 16,
        ..DistillConfig::default()
    };
    let student_arch = tiny_student_arch(&teacher_arch);
    let mut out = distill_unikd(&teacher, &ds, &student_arch, &cfg).unwrap();

    assert_eq!(
        ds.hidden_read_count(),
        0,
        "training read hidden target labels"
    );
    let report = evaluate_target(&mut out.student, &ds).unwrap();
    assert!(ds.hidden_read_count() > 0);
    assert!(report.macro_f1 >= 0.0 && report.macro_f1 <= 1.0);
    assert_eq!(report.n_samples, ds.n_tgt());
}

/// With every shift parameter at identity, a trained domain classifier
/// cannot separate the domains: held-out accuracy stays at chance level.
#[test]
fn zero_shift_domains_are_not_separable() {
    let train_spec = SyntheticShiftSpec::identity(3, 2, 32, 300, 100);
    let eval_spec = SyntheticShiftSpec::identity(3, 2, 32, 500, 101);
    let train = normalize(&generate_synthetic(&train_spec).unwrap()).unwrap();
    let eval_ds = normalize(&generate_synthetic(&eval_spec).unwrap()).unwrap();

    // logistic regression on flattened windows
    let flat_dim = train.channels() * train.timesteps();
    let flatten = |ds: &DomainDataset, idx: &[usize]| {
        let x = ds.gather(idx);
        let n = idx.len();
        x.into_shape_with_order((n, flat_dim)).unwrap()
    };
    let mut clf = build_discriminator(flat_dim, &[], 3).unwrap();
    let mut opt = Adam::new(0.05);
    for epoch in 0..40 {
        for batch in batch_iterator(&train, 50, 5, epoch).unwrap() {
            let x = flatten(&train, &batch.combined_indices());
            let l_d = batch.domain_labels();
            let p = clf.forward(&x, Mode::Train).unwrap();
            let g = loss_dc_grad(p.view(), &l_d);
            clf.backward(&g);
            opt.step(&mut clf);
            zero_grad(&mut clf);
            let _ = loss_dc(p.view(), &l_d).unwrap();
        }
    }

    let idx: Vec<usize> = (0..eval_ds.len()).collect();
    let x = flatten(&eval_ds, &idx);
    let p = clf.forward(&x, Mode::Eval).unwrap();
    let correct = idx
        .iter()
        .zip(p.iter())
        .filter(|(&i, &prob)| {
            let is_target = i >= eval_ds.n_src();
            (prob > 0.5) == is_target
        })
        .count();
    let accuracy = correct as f64 / idx.len() as f64;
    assert!(
        accuracy <= 0.55,
        "domain classifier reached {accuracy} on identically distributed domains"
    );
}

/// The moderate-shift generator does produce a real gap for a source-only
/// model, and the same training code closes part of it — the cheap smoke
/// version of the full experiment the acceptance suite runs.
#[test]
fn moderate_shift_hurts_source_only_students() {
    let mut spec = SyntheticShiftSpec::identity(4, 2, 48, 160, 55);
    spec.amplitude_scale = 1.5;
    spec.phase_offset = 0.8;
    spec.additive_noise_std = 0.1;
    let ds = normalize(&generate_synthetic(&spec).unwrap()).unwrap();

    let arch = tiny_teacher_arch(&ds);
    let student_arch = tiny_student_arch(&arch);
    let cfg = DistillConfig {
        epochs: 12,
        batch_size: 16,
        variant: VariantId::SourceOnly,
        ..DistillConfig::default()
    };
    let mut out = train_source_only(&ds, &student_arch, &cfg).unwrap();
    let target = evaluate_target(&mut out.student, &ds).unwrap().macro_f1;
    let source_val = out.state.source_val_macro_f1.unwrap();
    assert!(
        target < source_val,
        "expected a domain gap, got target {target} vs source-val {source_val}"
    );
}

/// Oversized batches and empty variants fail loudly end to end.
#[test]
fn configuration_errors_surface() {
    let spec = SyntheticShiftSpec::identity(2, 1, 16, 10, 1);
    let ds = generate_synthetic(&spec).unwrap();
    assert!(batch_iterator(&ds, 11, 0, 0).is_err());

    let arch = BackboneConfig {
        in_channels: 1,
        timesteps: 16,
        widths: [2, 3, 4],
        kernels: [3, 3, 2],
        strides: [1, 1, 1],
        pool: 2,
        feature_dim: 4,
        n_classes: 2,
    };
    let cfg = DistillConfig {
        batch_size: 64,
        ..DistillConfig::default()
    };
    assert!(train_source_only(&ds, &arch, &cfg).is_err());
}
