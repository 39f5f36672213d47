//! Training objectives, all as pure functions with analytic gradients.
//!
//! ```text
//! L_DIS = -E[ log D_f(f^teacher) + log(1 - D_f(f^student)) ]     discriminator
//! L_GEN =  E[ log(1 - D_f(f^student)) ]                          feature alignment
//! w_i   =  1 - |p_src_i - p_tgt_i|                               joint weight
//! L_JKD =  tau^2 / N * sum_i w_i * KL(q_i^s || q_i^t)            weighted logit KD
//! L_DC  = -E[ l_d log p_tgt + (1 - l_d) log(1 - p_tgt) ]         domain BCE
//! L_CE  = -E[ log q_c ]                                          source CE
//! L     =  L_GEN + (1-alpha) L_DC + alpha L_JKD + beta L_CE      student objective
//! alpha =  a * exp((m/M) * ln(b/a))                              epoch schedule
//! ```
//!
//! Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before every log,
//! so no input can produce log(0). Gradients are analytic; `numdiff` provides
//! the finite-difference oracle the tests check them against.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Clamp bound applied to probabilities before any logarithm.
pub const PROB_EPS: f64 = 1e-7;

/// Clamp a probability into `[PROB_EPS, 1 - PROB_EPS]`.
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn inside_clamp(p: f64) -> bool {
    p > PROB_EPS && p < 1.0 - PROB_EPS
}

fn require_nonempty(n: usize, what: &str) -> Result<()> {
    if n == 0 {
        return Err(Error::config(format!("{what}: empty batch")));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Temperature softmax
// ---------------------------------------------------------------------------

/// A temperature-softened class distribution together with the temperature
/// that produced it.
#[derive(Debug, Clone)]
pub struct SoftDistribution {
    pub probs: Array1<f64>,
    pub temperature: f64,
}

/// Softmax of `z / tau`, computed with max-subtraction.
pub fn soften(z: ArrayView1<'_, f64>, tau: f64) -> Result<SoftDistribution> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::config(format!("temperature must be > 0, got {tau}")));
    }
    require_nonempty(z.len(), "soften")?;
    let z2 = z.insert_axis(Axis(0));
    let probs = softmax_rows(z2, tau);
    Ok(SoftDistribution {
        probs: probs.row(0).to_owned(),
        temperature: tau,
    })
}

/// Row-wise softmax of `z / tau` with max-subtraction. `tau` must be
/// validated by the caller.
pub fn softmax_rows(z: ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    let mut out = Array2::zeros(z.raw_dim());
    for (zi, mut oi) in z.outer_iter().zip(out.outer_iter_mut()) {
        let m = zi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for (o, &v) in oi.iter_mut().zip(zi.iter()) {
            let e = ((v - m) / tau).exp();
            *o = e;
            sum += e;
        }
        oi.mapv_inplace(|v| v / sum);
    }
    out
}

/// Row-wise log-softmax of `z / tau`, stable for large logit gaps.
pub fn log_softmax_rows(z: ArrayView2<'_, f64>, tau: f64) -> Array2<f64> {
    let mut out = Array2::zeros(z.raw_dim());
    for (zi, mut oi) in z.outer_iter().zip(out.outer_iter_mut()) {
        let m = zi.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = zi
            .iter()
            .map(|&v| ((v - m) / tau).exp())
            .sum::<f64>()
            .ln();
        for (o, &v) in oi.iter_mut().zip(zi.iter()) {
            *o = (v - m) / tau - lse;
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Feature-domain discriminator losses
// ---------------------------------------------------------------------------

/// Discriminator objective: `-mean[log d_real] - mean[log(1 - d_fake)]`.
///
/// `d_real` are D_f outputs on teacher features, `d_fake` on student
/// features, each over the combined source+target batch.
pub fn loss_dis(d_real: ArrayView1<'_, f64>, d_fake: ArrayView1<'_, f64>) -> Result<f64> {
    require_nonempty(d_real.len(), "loss_dis")?;
    require_nonempty(d_fake.len(), "loss_dis")?;
    if d_real.len() != d_fake.len() {
        return Err(Error::config(format!(
            "loss_dis: batch sizes differ ({} vs {})",
            d_real.len(),
            d_fake.len()
        )));
    }
    let real = d_real.mapv(clamp_prob).mapv(f64::ln).mean().unwrap();
    let fake = d_fake
        .mapv(|p| (1.0 - clamp_prob(p)).ln())
        .mean()
        .unwrap();
    Ok(-real - fake)
}

/// Gradient of the `-mean[log d_real]` half of [`loss_dis`]. Coordinates in
/// the clamp zone get zero gradient.
pub fn loss_dis_grad_real(d_real: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = d_real.len() as f64;
    d_real.mapv(|p| if inside_clamp(p) { -1.0 / (n * p) } else { 0.0 })
}

/// Gradient of the `-mean[log(1 - d_fake)]` half of [`loss_dis`].
pub fn loss_dis_grad_fake(d_fake: ArrayView1<'_, f64>) -> Array1<f64> {
    let m = d_fake.len() as f64;
    d_fake.mapv(|p| {
        if inside_clamp(p) {
            1.0 / (m * (1.0 - p))
        } else {
            0.0
        }
    })
}

/// Gradients of [`loss_dis`] w.r.t. `d_real` and `d_fake`.
pub fn loss_dis_grad(
    d_real: ArrayView1<'_, f64>,
    d_fake: ArrayView1<'_, f64>,
) -> (Array1<f64>, Array1<f64>) {
    (loss_dis_grad_real(d_real), loss_dis_grad_fake(d_fake))
}

/// Feature-alignment objective minimized by the student:
/// `mean[log(1 - d_fake)]`. Decreases as the discriminator is fooled.
pub fn loss_gen(d_fake: ArrayView1<'_, f64>) -> Result<f64> {
    require_nonempty(d_fake.len(), "loss_gen")?;
    Ok(d_fake
        .mapv(|p| (1.0 - clamp_prob(p)).ln())
        .mean()
        .unwrap())
}

/// Gradient of [`loss_gen`] w.r.t. `d_fake`.
pub fn loss_gen_grad(d_fake: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = d_fake.len() as f64;
    d_fake.mapv(|p| {
        if inside_clamp(p) {
            -1.0 / (n * (1.0 - p))
        } else {
            0.0
        }
    })
}

/// Non-saturating variant of the alignment objective: `-mean[log d_fake]`.
/// Same fixed points, stronger gradient while the discriminator wins early.
pub fn loss_gen_nonsaturating(d_fake: ArrayView1<'_, f64>) -> Result<f64> {
    require_nonempty(d_fake.len(), "loss_gen")?;
    Ok(-d_fake.mapv(|p| clamp_prob(p).ln()).mean().unwrap())
}

/// Gradient of [`loss_gen_nonsaturating`] w.r.t. `d_fake`.
pub fn loss_gen_nonsaturating_grad(d_fake: ArrayView1<'_, f64>) -> Array1<f64> {
    let n = d_fake.len() as f64;
    d_fake.mapv(|p| if inside_clamp(p) { -1.0 / (n * p) } else { 0.0 })
}

// ---------------------------------------------------------------------------
// Data-domain discriminator: per-sample weights and domain BCE
// ---------------------------------------------------------------------------

/// Two-class output of the data-domain discriminator for one sample:
/// probability of source (`c = 0`) and target (`c = 1`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DomainProbability {
    pub p_source: f64,
    pub p_target: f64,
}

impl DomainProbability {
    /// Build from the discriminator's target-class probability.
    pub fn from_target_prob(p_target: f64) -> Self {
        let p = clamp_prob(p_target);
        DomainProbability {
            p_source: 1.0 - p,
            p_target: p,
        }
    }
}

/// Per-sample distillation weight: `w = 1 - |p_src - p_tgt|`.
///
/// 1 on the domain decision boundary, 0 at fully confident extremes.
pub fn joint_weight(p: DomainProbability) -> f64 {
    1.0 - (p.p_source - p.p_target).abs()
}

/// Batch of per-sample weights in `[0, 1]`, treated as constants by every
/// gradient path (the weights carry no gradient back into the
/// discriminator that produced them).
pub fn joint_weights(p_target: ArrayView1<'_, f64>) -> Array1<f64> {
    p_target.mapv(|p| joint_weight(DomainProbability::from_target_prob(p)))
}

/// Domain-classification BCE over the combined batch:
/// `-mean[l_d log p_tgt + (1 - l_d) log(1 - p_tgt)]` with `l_d` in `{0, 1}`
/// (0 = source, 1 = target).
pub fn loss_dc(p_target: ArrayView1<'_, f64>, l_d: &[u8]) -> Result<f64> {
    require_nonempty(p_target.len(), "loss_dc")?;
    if p_target.len() != l_d.len() {
        return Err(Error::config(format!(
            "loss_dc: {} probabilities vs {} labels",
            p_target.len(),
            l_d.len()
        )));
    }
    if let Some(bad) = l_d.iter().find(|&&l| l > 1) {
        return Err(Error::config(format!(
            "loss_dc: domain labels must be 0 or 1, got {bad}"
        )));
    }
    let mut acc = 0.0;
    for (&p, &l) in p_target.iter().zip(l_d) {
        let p = clamp_prob(p);
        acc += if l == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    Ok(-acc / p_target.len() as f64)
}

/// Gradient of [`loss_dc`] w.r.t. `p_target`.
pub fn loss_dc_grad(p_target: ArrayView1<'_, f64>, l_d: &[u8]) -> Array1<f64> {
    let n = p_target.len() as f64;
    let mut grad = Array1::zeros(p_target.len());
    for (g, (&p, &l)) in grad.iter_mut().zip(p_target.iter().zip(l_d)) {
        if inside_clamp(p) {
            *g = if l == 1 { -1.0 / p } else { 1.0 / (1.0 - p) } / n;
        }
    }
    grad
}

// ---------------------------------------------------------------------------
// Weighted logit distillation
// ---------------------------------------------------------------------------

/// Which distribution leads the KL divergence in the distillation term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(q^student || q^teacher)` — the method's written form; default.
    StudentToTeacher,
    /// `KL(q^teacher || q^student)` — the conventional distillation
    /// direction, used by the standard-KD baseline.
    TeacherToStudent,
}

fn check_jkd_inputs(
    z_student: ArrayView2<'_, f64>,
    z_teacher: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    tau: f64,
) -> Result<()> {
    if tau <= 0.0 || !tau.is_finite() {
        return Err(Error::config(format!("temperature must be > 0, got {tau}")));
    }
    require_nonempty(z_student.nrows(), "loss_jkd")?;
    if z_student.dim() != z_teacher.dim() {
        return Err(Error::config(format!(
            "loss_jkd: logit shapes differ ({:?} vs {:?})",
            z_student.dim(),
            z_teacher.dim()
        )));
    }
    if weights.len() != z_student.nrows() {
        return Err(Error::config(format!(
            "loss_jkd: {} weights for {} rows",
            weights.len(),
            z_student.nrows()
        )));
    }
    Ok(())
}

/// Weighted, temperature-scaled logit distillation over the combined batch:
/// `tau^2 / N * sum_i w_i * KL_i`. Teacher logits are constants for the
/// training path; [`loss_jkd_grad_teacher`] exists for gradient checking
/// only.
pub fn loss_jkd(
    z_student: ArrayView2<'_, f64>,
    z_teacher: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    tau: f64,
    direction: KlDirection,
) -> Result<f64> {
    check_jkd_inputs(z_student, z_teacher, weights, tau)?;
    let (lead, follow) = match direction {
        KlDirection::StudentToTeacher => (z_student, z_teacher),
        KlDirection::TeacherToStudent => (z_teacher, z_student),
    };
    let q_lead = softmax_rows(lead, tau);
    let log_lead = log_softmax_rows(lead, tau);
    let log_follow = log_softmax_rows(follow, tau);
    let n = z_student.nrows() as f64;
    let mut acc = 0.0;
    for i in 0..z_student.nrows() {
        let mut kl = 0.0;
        for j in 0..z_student.ncols() {
            kl += q_lead[[i, j]] * (log_lead[[i, j]] - log_follow[[i, j]]);
        }
        acc += weights[i] * kl;
    }
    Ok(tau * tau * acc / n)
}

/// Gradient of [`loss_jkd`] w.r.t. the student logits.
pub fn loss_jkd_grad_student(
    z_student: ArrayView2<'_, f64>,
    z_teacher: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    tau: f64,
    direction: KlDirection,
) -> Array2<f64> {
    let n = z_student.nrows() as f64;
    let q_s = softmax_rows(z_student, tau);
    let q_t = softmax_rows(z_teacher, tau);
    let mut grad = Array2::zeros(z_student.raw_dim());
    match direction {
        KlDirection::StudentToTeacher => {
            let log_s = log_softmax_rows(z_student, tau);
            let log_t = log_softmax_rows(z_teacher, tau);
            for i in 0..z_student.nrows() {
                let kl: f64 = (0..z_student.ncols())
                    .map(|j| q_s[[i, j]] * (log_s[[i, j]] - log_t[[i, j]]))
                    .sum();
                for j in 0..z_student.ncols() {
                    grad[[i, j]] = tau / n
                        * weights[i]
                        * q_s[[i, j]]
                        * (log_s[[i, j]] - log_t[[i, j]] - kl);
                }
            }
        }
        KlDirection::TeacherToStudent => {
            for i in 0..z_student.nrows() {
                for j in 0..z_student.ncols() {
                    grad[[i, j]] = tau / n * weights[i] * (q_s[[i, j]] - q_t[[i, j]]);
                }
            }
        }
    }
    grad
}

/// Gradient of [`loss_jkd`] w.r.t. the teacher logits. Not used by training
/// (the teacher is frozen); provided so the finite-difference oracle can
/// check every input.
pub fn loss_jkd_grad_teacher(
    z_student: ArrayView2<'_, f64>,
    z_teacher: ArrayView2<'_, f64>,
    weights: ArrayView1<'_, f64>,
    tau: f64,
    direction: KlDirection,
) -> Array2<f64> {
    // KL is symmetric in the roles here: the gradient w.r.t. the follower's
    // logits of KL(lead || follow) is tau/N * w * (q_follow - q_lead), and
    // w.r.t. the leader's logits it is the full product-rule expression.
    // Swapping arguments and direction reuses the student-side code.
    let flipped = match direction {
        KlDirection::StudentToTeacher => KlDirection::TeacherToStudent,
        KlDirection::TeacherToStudent => KlDirection::StudentToTeacher,
    };
    loss_jkd_grad_student(z_teacher, z_student, weights, tau, flipped)
}

// ---------------------------------------------------------------------------
// Source cross-entropy
// ---------------------------------------------------------------------------

/// Source-domain cross-entropy at temperature 1:
/// `mean_i[-log softmax(z_i)[y_i]]`.
pub fn loss_ce(z_source: ArrayView2<'_, f64>, labels: &[usize]) -> Result<f64> {
    require_nonempty(z_source.nrows(), "loss_ce")?;
    if z_source.nrows() != labels.len() {
        return Err(Error::config(format!(
            "loss_ce: {} rows vs {} labels",
            z_source.nrows(),
            labels.len()
        )));
    }
    let c = z_source.ncols();
    if let Some(bad) = labels.iter().find(|&&y| y >= c) {
        return Err(Error::config(format!(
            "loss_ce: label {bad} out of range for {c} classes"
        )));
    }
    let log_q = log_softmax_rows(z_source, 1.0);
    let n = labels.len() as f64;
    let mut acc = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        acc -= log_q[[i, y]];
    }
    Ok(acc / n)
}

/// Gradient of [`loss_ce`] w.r.t. the logits: `(q - onehot(y)) / N`.
pub fn loss_ce_grad(z_source: ArrayView2<'_, f64>, labels: &[usize]) -> Array2<f64> {
    let n = labels.len() as f64;
    let mut grad = softmax_rows(z_source, 1.0);
    for (i, &y) in labels.iter().enumerate() {
        grad[[i, y]] -= 1.0;
    }
    grad.mapv_inplace(|g| g / n);
    grad
}

// ---------------------------------------------------------------------------
// Composite objective and schedule
// ---------------------------------------------------------------------------

/// All loss terms of one student update, plus the mixing coefficients used.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub l_dis: f64,
    pub l_gen: f64,
    pub l_jkd: f64,
    pub l_dc: f64,
    pub l_ce: f64,
    pub total: f64,
    pub alpha: f64,
    pub beta: f64,
}

/// Student objective: `l_gen + (1 - alpha) l_dc + alpha l_jkd + beta l_ce`.
/// `l_dis` is recorded in the breakdown for tracing but is not part of the
/// student total.
pub fn total_student_loss(
    l_gen: f64,
    l_dc: f64,
    l_jkd: f64,
    l_ce: f64,
    alpha: f64,
    beta: f64,
) -> Result<LossBreakdown> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config(format!("alpha must be in [0,1], got {alpha}")));
    }
    if beta < 0.0 {
        return Err(Error::config(format!("beta must be >= 0, got {beta}")));
    }
    Ok(LossBreakdown {
        l_dis: 0.0,
        l_gen,
        l_jkd,
        l_dc,
        l_ce,
        total: l_gen + (1.0 - alpha) * l_dc + alpha * l_jkd + beta * l_ce,
        alpha,
        beta,
    })
}

/// Exponential epoch schedule for the JKD/DC mixing coefficient, rising from
/// `start` at epoch 0 to `end` at epoch `epochs`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaSchedule {
    pub start: f64,
    pub end: f64,
    pub epochs: usize,
}

impl AlphaSchedule {
    pub fn new(start: f64, end: f64, epochs: usize) -> Result<Self> {
        if !(start > 0.0 && start <= end && end < 1.0) {
            return Err(Error::config(format!(
                "alpha schedule requires 0 < start <= end < 1, got ({start}, {end})"
            )));
        }
        if epochs == 0 {
            return Err(Error::config("alpha schedule requires epochs >= 1"));
        }
        Ok(AlphaSchedule { start, end, epochs })
    }

    /// `alpha(m) = start * exp((m / epochs) * ln(end / start))`.
    pub fn alpha_at_epoch(&self, m: usize) -> Result<f64> {
        if m > self.epochs {
            return Err(Error::config(format!(
                "epoch {m} beyond schedule length {}",
                self.epochs
            )));
        }
        let t = m as f64 / self.epochs as f64;
        Ok(self.start * (t * (self.end / self.start).ln()).exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numdiff::{central_gradient, max_relative_error};
    use ndarray::{arr1, arr2, Array};
    use proptest::prelude::*;
    use rand::Rng;

    const TOL: f64 = 1e-6;

    #[test]
    fn soften_symmetric_pair() {
        let q = soften(arr1(&[0.0, 0.0]).view(), 1.0).unwrap();
        assert!((q.probs[0] - 0.5).abs() < TOL && (q.probs[1] - 0.5).abs() < TOL);
    }

    #[test]
    fn soften_constant_logits_any_tau() {
        for tau in [0.5, 1.0, 7.3] {
            let q = soften(arr1(&[3.1, 3.1, 3.1, 3.1]).view(), tau).unwrap();
            for &p in q.probs.iter() {
                assert!((p - 0.25).abs() < TOL);
            }
        }
    }

    #[test]
    fn soften_hand_case() {
        // softmax([2,0]/2) = softmax([1,0]) = [e/(e+1), 1/(e+1)]
        let q = soften(arr1(&[2.0, 0.0]).view(), 2.0).unwrap();
        assert!((q.probs[0] - 0.731_058_578_630_004_9).abs() < TOL);
        assert!((q.probs[1] - 0.268_941_421_369_995_1).abs() < TOL);
    }

    #[test]
    fn soften_rejects_bad_temperature() {
        assert!(soften(arr1(&[1.0]).view(), 0.0).is_err());
        assert!(soften(arr1(&[1.0]).view(), -2.0).is_err());
    }

    #[test]
    fn soften_gap_shrinks_with_temperature() {
        let mut rng = crate::rng::stream_rng(11, "soften-gap");
        for _ in 0..20 {
            let z: Array1<f64> = Array::from_iter((0..6).map(|_| rng.random_range(-4.0..4.0)));
            let mut last_gap = f64::INFINITY;
            for tau in [1.0, 2.0, 4.0, 8.0, 16.0] {
                let q = soften(z.view(), tau).unwrap().probs;
                let gap = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
                    - q.iter().cloned().fold(f64::INFINITY, f64::min);
                assert!(gap <= last_gap + 1e-12);
                last_gap = gap;
            }
        }
    }

    #[test]
    fn loss_dis_uniform_discriminator() {
        let d = arr1(&[0.5, 0.5, 0.5]);
        let v = loss_dis(d.view(), d.view()).unwrap();
        assert!((v - 2.0 * std::f64::consts::LN_2).abs() < TOL);
    }

    #[test]
    fn loss_dis_perfect_discriminator() {
        let real = arr1(&[1.0 - PROB_EPS; 4]);
        let fake = arr1(&[PROB_EPS; 4]);
        assert!(loss_dis(real.view(), fake.view()).unwrap().abs() < TOL);
    }

    #[test]
    fn loss_dis_hand_case() {
        let v = loss_dis(arr1(&[0.9, 0.8]).view(), arr1(&[0.4, 0.5]).view()).unwrap();
        assert!((v - 0.766_238_435_648_986).abs() < TOL);
    }

    #[test]
    fn loss_dis_rejects_empty_and_mismatch() {
        let empty = Array1::<f64>::zeros(0);
        let two = arr1(&[0.5, 0.5]);
        assert!(loss_dis(empty.view(), empty.view()).is_err());
        assert!(loss_dis(two.view(), arr1(&[0.5]).view()).is_err());
    }

    #[test]
    fn loss_gen_values() {
        assert!(
            (loss_gen(arr1(&[0.5, 0.5]).view()).unwrap() + std::f64::consts::LN_2).abs() < TOL
        );
        assert!(loss_gen(arr1(&[PROB_EPS; 3]).view()).unwrap().abs() < TOL);
        let v = loss_gen(arr1(&[0.2, 0.8]).view()).unwrap();
        assert!((v + 0.916_290_731_874_155).abs() < TOL);
        assert!(loss_gen(Array1::<f64>::zeros(0).view()).is_err());
    }

    #[test]
    fn joint_weight_cases() {
        let w = |p| joint_weight(DomainProbability::from_target_prob(p));
        assert!((w(0.5) - 1.0).abs() < TOL);
        assert!(w(0.0) < 1e-6 && w(1.0) < 1e-6);
        assert!((w(0.2) - 0.4).abs() < TOL); // p = [0.8, 0.2]
    }

    #[test]
    fn loss_jkd_zero_cases() {
        let z = arr2(&[[1.0, -0.5, 2.0], [0.0, 0.0, 1.0]]);
        let w = arr1(&[1.0, 1.0]);
        let v = loss_jkd(z.view(), z.view(), w.view(), 2.0, KlDirection::StudentToTeacher);
        assert!(v.unwrap().abs() < TOL);

        let zt = arr2(&[[3.0, 0.0, -1.0], [0.5, 0.5, 0.5]]);
        let zero_w = arr1(&[0.0, 0.0]);
        let v = loss_jkd(z.view(), zt.view(), zero_w.view(), 2.0, KlDirection::StudentToTeacher);
        assert!(v.unwrap().abs() < TOL);
    }

    #[test]
    fn loss_jkd_hand_case() {
        // q^s = softmax([0,0]) = [1/2, 1/2]; q^t = softmax([ln 3, 0]) = [3/4, 1/4]
        let z_s = arr2(&[[0.0, 0.0]]);
        let z_t = arr2(&[[3.0_f64.ln(), 0.0]]);
        let w = arr1(&[1.0]);
        let v = loss_jkd(z_s.view(), z_t.view(), w.view(), 1.0, KlDirection::StudentToTeacher)
            .unwrap();
        assert!((v - 0.143_841_036_225_890_45).abs() < TOL);
    }

    #[test]
    fn loss_jkd_rejects_bad_inputs() {
        let z = arr2(&[[0.0, 1.0]]);
        let z3 = arr2(&[[0.0, 1.0, 2.0]]);
        let w = arr1(&[1.0]);
        assert!(loss_jkd(z.view(), z3.view(), w.view(), 1.0, KlDirection::StudentToTeacher)
            .is_err());
        assert!(loss_jkd(z.view(), z.view(), w.view(), 0.0, KlDirection::StudentToTeacher)
            .is_err());
        let w2 = arr1(&[1.0, 1.0]);
        assert!(loss_jkd(z.view(), z.view(), w2.view(), 1.0, KlDirection::StudentToTeacher)
            .is_err());
    }

    #[test]
    fn loss_dc_values() {
        let half = arr1(&[0.5, 0.5, 0.5, 0.5]);
        let labels = [0u8, 1, 0, 1];
        let v = loss_dc(half.view(), &labels).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < TOL);

        let perfect = arr1(&[PROB_EPS, 1.0 - PROB_EPS]);
        assert!(loss_dc(perfect.view(), &[0, 1]).unwrap().abs() < TOL);

        let v = loss_dc(arr1(&[0.3, 0.6]).view(), &[0, 1]).unwrap();
        // -(ln 0.7 + ln 0.6)/2
        assert!((v - 0.433_750_283_852_361_6).abs() < TOL);
    }

    #[test]
    fn loss_dc_rejects_bad_labels() {
        assert!(loss_dc(arr1(&[0.5]).view(), &[2]).is_err());
        assert!(loss_dc(arr1(&[0.5]).view(), &[0, 1]).is_err());
        assert!(loss_dc(Array1::<f64>::zeros(0).view(), &[]).is_err());
    }

    #[test]
    fn loss_ce_values() {
        // Mass on the true class -> ~0.
        let z = arr2(&[[40.0, 0.0]]);
        assert!(loss_ce(z.view(), &[0]).unwrap().abs() < TOL);

        let uniform = arr2(&[[1.0, 1.0, 1.0]]);
        assert!((loss_ce(uniform.view(), &[1]).unwrap() - 3.0_f64.ln()).abs() < TOL);

        let z = arr2(&[[2.0, 0.0]]);
        assert!((loss_ce(z.view(), &[1]).unwrap() - 2.126_928_011_042_972_7).abs() < TOL);
    }

    #[test]
    fn loss_ce_rejects_out_of_range_label() {
        let z = arr2(&[[0.0, 1.0]]);
        assert!(loss_ce(z.view(), &[2]).is_err());
        assert!(loss_ce(z.view(), &[0, 1]).is_err());
    }

    #[test]
    fn total_loss_endpoints_and_arithmetic() {
        let at = |a, b| total_student_loss(-0.5, 0.6, 0.2, 1.0, a, b).unwrap().total;
        assert!((at(0.0, 0.5) - (-0.5 + 0.6 + 0.5)).abs() < TOL);
        assert!((at(1.0, 0.0) - (-0.5 + 0.2)).abs() < TOL);
        assert!((at(0.5, 0.5) - 0.4).abs() < TOL);
        assert!(total_student_loss(0.0, 0.0, 0.0, 0.0, 1.5, 0.5).is_err());
        assert!(total_student_loss(0.0, 0.0, 0.0, 0.0, 0.5, -0.1).is_err());
    }

    #[test]
    fn alpha_schedule_endpoints_and_midpoint() {
        let s = AlphaSchedule::new(0.1, 0.9, 10).unwrap();
        assert_eq!(s.alpha_at_epoch(0).unwrap(), 0.1);
        assert!((s.alpha_at_epoch(10).unwrap() - 0.9).abs() < 1e-12);
        assert!((s.alpha_at_epoch(5).unwrap() - 0.3).abs() < 1e-15);
        assert!(s.alpha_at_epoch(11).is_err());
    }

    #[test]
    fn alpha_schedule_validation() {
        assert!(AlphaSchedule::new(0.0, 0.9, 10).is_err());
        assert!(AlphaSchedule::new(0.5, 0.4, 10).is_err());
        assert!(AlphaSchedule::new(0.1, 1.0, 10).is_err());
        assert!(AlphaSchedule::new(0.1, 0.9, 0).is_err());
        // Constant schedule is allowed.
        let s = AlphaSchedule::new(0.3, 0.3, 5).unwrap();
        assert_eq!(s.alpha_at_epoch(2).unwrap(), 0.3);
    }

    // ---- gradient spot checks (the exhaustive sweep lives in the
    // acceptance suite) ----

    fn rand_probs(rng: &mut impl Rng, n: usize) -> Array1<f64> {
        Array::from_iter((0..n).map(|_| rng.random_range(0.05..0.95)))
    }

    #[test]
    fn grad_check_discriminator_losses() {
        let mut rng = crate::rng::stream_rng(3, "grad-dis");
        for _ in 0..5 {
            let real = rand_probs(&mut rng, 4);
            let fake = rand_probs(&mut rng, 4);
            let (g_real, g_fake) = loss_dis_grad(real.view(), fake.view());
            let fd_real = central_gradient(
                |x| loss_dis(arr1(x).view(), fake.view()).unwrap(),
                real.as_slice().unwrap(),
                1e-5,
            );
            let fd_fake = central_gradient(
                |x| loss_dis(real.view(), arr1(x).view()).unwrap(),
                fake.as_slice().unwrap(),
                1e-5,
            );
            assert!(max_relative_error(g_real.as_slice().unwrap(), &fd_real) < 1e-4);
            assert!(max_relative_error(g_fake.as_slice().unwrap(), &fd_fake) < 1e-4);

            let g = loss_gen_grad(fake.view());
            let fd = central_gradient(
                |x| loss_gen(arr1(x).view()).unwrap(),
                fake.as_slice().unwrap(),
                1e-5,
            );
            assert!(max_relative_error(g.as_slice().unwrap(), &fd) < 1e-4);

            let g = loss_gen_nonsaturating_grad(fake.view());
            let fd = central_gradient(
                |x| loss_gen_nonsaturating(arr1(x).view()).unwrap(),
                fake.as_slice().unwrap(),
                1e-5,
            );
            assert!(max_relative_error(g.as_slice().unwrap(), &fd) < 1e-4);
        }
    }

    #[test]
    fn grad_check_jkd_both_directions() {
        let mut rng = crate::rng::stream_rng(4, "grad-jkd");
        for direction in [KlDirection::StudentToTeacher, KlDirection::TeacherToStudent] {
            for _ in 0..5 {
                let z_s: Array2<f64> =
                    Array::from_shape_fn((2, 4), |_| rng.random_range(-2.0..2.0));
                let z_t: Array2<f64> =
                    Array::from_shape_fn((2, 4), |_| rng.random_range(-2.0..2.0));
                let w = rand_probs(&mut rng, 2);
                let tau = rng.random_range(0.5..4.0);

                let g_s = loss_jkd_grad_student(z_s.view(), z_t.view(), w.view(), tau, direction);
                let flat_s = z_s.iter().cloned().collect::<Vec<_>>();
                let fd_s = central_gradient(
                    |x| {
                        let z = Array2::from_shape_vec((2, 4), x.to_vec()).unwrap();
                        loss_jkd(z.view(), z_t.view(), w.view(), tau, direction).unwrap()
                    },
                    &flat_s,
                    1e-5,
                );
                let flat_g: Vec<f64> = g_s.iter().cloned().collect();
                assert!(max_relative_error(&flat_g, &fd_s) < 1e-4);

                let g_t = loss_jkd_grad_teacher(z_s.view(), z_t.view(), w.view(), tau, direction);
                let flat_t = z_t.iter().cloned().collect::<Vec<_>>();
                let fd_t = central_gradient(
                    |x| {
                        let z = Array2::from_shape_vec((2, 4), x.to_vec()).unwrap();
                        loss_jkd(z_s.view(), z.view(), w.view(), tau, direction).unwrap()
                    },
                    &flat_t,
                    1e-5,
                );
                let flat_g: Vec<f64> = g_t.iter().cloned().collect();
                assert!(max_relative_error(&flat_g, &fd_t) < 1e-4);
            }
        }
    }

    #[test]
    fn grad_check_dc_and_ce() {
        let mut rng = crate::rng::stream_rng(5, "grad-dc-ce");
        for _ in 0..5 {
            let p = rand_probs(&mut rng, 6);
            let labels: Vec<u8> = (0..6).map(|_| rng.random_range(0..2) as u8).collect();
            let g = loss_dc_grad(p.view(), &labels);
            let fd = central_gradient(
                |x| loss_dc(arr1(x).view(), &labels).unwrap(),
                p.as_slice().unwrap(),
                1e-5,
            );
            assert!(max_relative_error(g.as_slice().unwrap(), &fd) < 1e-4);

            let z: Array2<f64> = Array::from_shape_fn((3, 4), |_| rng.random_range(-2.0..2.0));
            let y: Vec<usize> = (0..3).map(|_| rng.random_range(0..4)).collect();
            let g = loss_ce_grad(z.view(), &y);
            let flat: Vec<f64> = z.iter().cloned().collect();
            let fd = central_gradient(
                |x| {
                    let z = Array2::from_shape_vec((3, 4), x.to_vec()).unwrap();
                    loss_ce(z.view(), &y).unwrap()
                },
                &flat,
                1e-5,
            );
            let flat_g: Vec<f64> = g.iter().cloned().collect();
            assert!(max_relative_error(&flat_g, &fd) < 1e-4);
        }
    }

    proptest! {
        #[test]
        fn soften_sums_to_one_and_is_shift_invariant(
            zs in proptest::collection::vec(-15.0..15.0f64, 2..8),
            shift in -10.0..10.0f64,
            tau in 0.25..16.0f64,
        ) {
            let z = Array1::from_vec(zs.clone());
            let q = soften(z.view(), tau).unwrap().probs;
            prop_assert!((q.sum() - 1.0).abs() < 1e-6);

            let shifted = z.mapv(|v| v + shift);
            let q2 = soften(shifted.view(), tau).unwrap().probs;
            for (a, b) in q.iter().zip(q2.iter()) {
                prop_assert!((a - b).abs() < 1e-6);
            }

            // argmax preserved
            let arg = |v: &Array1<f64>| {
                v.iter().enumerate().fold((0usize, f64::NEG_INFINITY), |acc, (i, &x)| {
                    if x > acc.1 { (i, x) } else { acc }
                }).0
            };
            prop_assert_eq!(arg(&z), arg(&q));
        }

        #[test]
        fn jkd_is_nonnegative(
            s in proptest::collection::vec(-5.0..5.0f64, 8),
            t in proptest::collection::vec(-5.0..5.0f64, 8),
            w in proptest::collection::vec(0.0..1.0f64, 2),
            tau in 0.5..8.0f64,
        ) {
            let z_s = Array2::from_shape_vec((2, 4), s).unwrap();
            let z_t = Array2::from_shape_vec((2, 4), t).unwrap();
            let w = Array1::from_vec(w);
            let v = loss_jkd(z_s.view(), z_t.view(), w.view(), tau,
                             KlDirection::StudentToTeacher).unwrap();
            prop_assert!(v >= -1e-12);
        }

        #[test]
        fn joint_weight_range_and_symmetry(p in 0.0..1.0f64) {
            let w = joint_weight(DomainProbability::from_target_prob(p));
            prop_assert!((0.0..=1.0).contains(&w));
            let swapped = joint_weight(DomainProbability {
                p_source: clamp_prob(p),
                p_target: 1.0 - clamp_prob(p),
            });
            prop_assert!((w - swapped).abs() < 1e-12);
        }

        #[test]
        fn loss_dis_decreases_as_discriminator_improves(
            r in 0.1..0.8f64, f in 0.2..0.9f64,
        ) {
            let base = loss_dis(arr1(&[r]).view(), arr1(&[f]).view()).unwrap();
            let better = loss_dis(arr1(&[r + 0.1]).view(), arr1(&[f - 0.1]).view()).unwrap();
            prop_assert!(better < base);
        }

        #[test]
        fn alpha_monotone_and_geometric(
            a in 0.01..0.9f64, gap in 0.0..0.5f64, epochs in 1usize..200,
        ) {
            let b = (a + gap).min(0.99);
            let sched = AlphaSchedule::new(a, b, epochs).unwrap();
            let mut last = 0.0;
            for m in 0..=epochs {
                let v = sched.alpha_at_epoch(m).unwrap();
                prop_assert!(v >= last - 1e-12);
                // geometric interpolation identity: a^(1-t) * b^t
                let t = m as f64 / epochs as f64;
                let geo = a.powf(1.0 - t) * b.powf(t);
                prop_assert!((v - geo).abs() < 1e-12);
                last = v;
            }
        }

        #[test]
        fn total_loss_linear_in_each_term(
            l_gen in -2.0..2.0f64, l_dc in 0.0..2.0f64, l_jkd in 0.0..2.0f64,
            l_ce in 0.0..3.0f64, alpha in 0.0..1.0f64, beta in 0.0..3.0f64,
            k in 0.1..5.0f64,
        ) {
            let base = total_student_loss(l_gen, l_dc, l_jkd, l_ce, alpha, beta).unwrap();
            let scaled = total_student_loss(l_gen, l_dc, l_jkd, k * l_ce, alpha, beta).unwrap();
            prop_assert!(((scaled.total - base.total) - beta * (k - 1.0) * l_ce).abs() < 1e-9);
        }
    }
}
