//! 1D-CNN backbones: the teacher, and its narrower student counterpart.
//!
//! Topology for both: three blocks of conv1d -> batch norm -> ReLU ->
//! max-pool, then global average pooling over time into a feature vector,
//! then a linear classifier. The student additionally owns a linear
//! projection from its feature space into the teacher's, used only to feed
//! the discriminators during distillation; the classifier always consumes
//! the unprojected features, and the projection is not part of the deployed
//! model.

use ndarray::{Array2, Array3, ArrayViewD, ArrayViewMutD};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::stream_rng;

use super::layers::{BatchNorm1d, Conv1d, GlobalAvgPool, Linear, MaxPool1d, Mode, Relu};
use super::params::{Network, ParamVisitorMut};

/// Architecture of one backbone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub in_channels: usize,
    /// Input window length; the conv/pool chain must fit inside it.
    pub timesteps: usize,
    /// Conv block output channels.
    pub widths: [usize; 3],
    pub kernels: [usize; 3],
    pub strides: [usize; 3],
    /// Max-pool window (= stride) after each block.
    pub pool: usize,
    /// Feature vector width after global average pooling; must equal
    /// `widths[2]`.
    pub feature_dim: usize,
    pub n_classes: usize,
}

impl BackboneConfig {
    /// Default teacher: widths [64, 128, 256], kernels [8, 5, 3].
    pub fn teacher_default(in_channels: usize, timesteps: usize, n_classes: usize) -> Self {
        BackboneConfig {
            in_channels,
            timesteps,
            widths: [64, 128, 256],
            kernels: [8, 5, 3],
            strides: [1, 1, 1],
            pool: 2,
            feature_dim: 256,
            n_classes,
        }
    }

    /// Default student: widths [16, 32, 64], same kernels as the teacher.
    pub fn student_default(in_channels: usize, timesteps: usize, n_classes: usize) -> Self {
        BackboneConfig {
            in_channels,
            timesteps,
            widths: [16, 32, 64],
            kernels: [8, 5, 3],
            strides: [1, 1, 1],
            pool: 2,
            feature_dim: 64,
            n_classes,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.timesteps == 0 || self.n_classes == 0 {
            return Err(Error::config("backbone dims must be positive"));
        }
        if self.widths.contains(&0) || self.kernels.contains(&0) {
            return Err(Error::config("widths and kernels must be positive"));
        }
        if self.strides.contains(&0) || self.pool == 0 {
            return Err(Error::config("strides and pool must be positive"));
        }
        if self.feature_dim != self.widths[2] {
            return Err(Error::config(format!(
                "feature_dim {} must equal the last width {}",
                self.feature_dim, self.widths[2]
            )));
        }
        // Walk the length chain so a too-short window fails at build time.
        let mut t = self.timesteps;
        for i in 0..3 {
            if t < self.kernels[i] {
                return Err(Error::config(format!(
                    "timesteps too short: block {i} sees length {t} < kernel {}",
                    self.kernels[i]
                )));
            }
            t = (t - self.kernels[i]) / self.strides[i] + 1;
            if t < self.pool {
                return Err(Error::config(format!(
                    "timesteps too short: block {i} sees length {t} < pool {}",
                    self.pool
                )));
            }
            t /= self.pool;
        }
        Ok(())
    }

    /// Time-axis length after each block, ending with the GAP input length.
    pub fn block_out_lens(&self) -> Vec<usize> {
        let mut t = self.timesteps;
        let mut lens = Vec::with_capacity(3);
        for i in 0..3 {
            t = (t - self.kernels[i]) / self.strides[i] + 1;
            t /= self.pool;
            lens.push(t);
        }
        lens
    }
}

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv1d,
    bn: BatchNorm1d,
    relu: Relu<ndarray::Ix3>,
    pool: MaxPool1d,
}

impl ConvBlock {
    fn new(c_in: usize, c_out: usize, k: usize, stride: usize, pool: usize, rng: &mut rand_chacha::ChaCha8Rng) -> Self {
        ConvBlock {
            conv: Conv1d::new(c_in, c_out, k, stride, rng),
            bn: BatchNorm1d::new(c_out),
            relu: Relu::new(),
            pool: MaxPool1d::new(pool),
        }
    }

    fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        let y = self.conv.forward(x, mode)?;
        let y = self.bn.forward(&y, mode);
        let y = self.relu.forward(&y, mode);
        self.pool.forward(&y, mode)
    }

    fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let d = self.pool.backward(dy);
        let d = self.relu.backward(&d);
        let d = self.bn.backward(&d);
        self.conv.backward(&d)
    }

    fn visit_params(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(&format!("{prefix}.conv.w"), self.conv.w.view().into_dyn());
        f(&format!("{prefix}.conv.b"), self.conv.b.view().into_dyn());
        f(&format!("{prefix}.bn.gamma"), self.bn.gamma.view().into_dyn());
        f(&format!("{prefix}.bn.beta"), self.bn.beta.view().into_dyn());
    }

    fn visit_params_mut(&mut self, prefix: &str, f: &mut ParamVisitorMut<'_>) {
        f(
            &format!("{prefix}.conv.w"),
            self.conv.w.view_mut().into_dyn(),
            self.conv.gw.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.conv.b"),
            self.conv.b.view_mut().into_dyn(),
            self.conv.gb.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.bn.gamma"),
            self.bn.gamma.view_mut().into_dyn(),
            self.bn.g_gamma.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.bn.beta"),
            self.bn.beta.view_mut().into_dyn(),
            self.bn.g_beta.view_mut().into_dyn(),
        );
    }

    fn visit_buffers(&self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        f(
            &format!("{prefix}.bn.running_mean"),
            self.bn.running_mean.view().into_dyn(),
        );
        f(
            &format!("{prefix}.bn.running_var"),
            self.bn.running_var.view().into_dyn(),
        );
    }

    fn visit_buffers_mut(&mut self, prefix: &str, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        f(
            &format!("{prefix}.bn.running_mean"),
            self.bn.running_mean.view_mut().into_dyn(),
        );
        f(
            &format!("{prefix}.bn.running_var"),
            self.bn.running_var.view_mut().into_dyn(),
        );
    }
}

/// Three conv blocks plus global average pooling; emits `[n, feature_dim]`.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    blocks: Vec<ConvBlock>,
    gap: GlobalAvgPool,
}

impl Backbone {
    pub fn new(config: &BackboneConfig, rng: &mut rand_chacha::ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let mut blocks = Vec::with_capacity(3);
        let mut c_in = config.in_channels;
        for i in 0..3 {
            blocks.push(ConvBlock::new(
                c_in,
                config.widths[i],
                config.kernels[i],
                config.strides[i],
                config.pool,
                rng,
            ));
            c_in = config.widths[i];
        }
        Ok(Backbone {
            config: config.clone(),
            blocks,
            gap: GlobalAvgPool::new(),
        })
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array2<f64>> {
        let mut y = x.clone();
        for block in &mut self.blocks {
            y = block.forward(&y, mode)?;
        }
        Ok(self.gap.forward(&y))
    }

    pub fn backward(&mut self, d_features: &Array2<f64>) -> Array3<f64> {
        let mut d = self.gap.backward(d_features);
        for block in self.blocks.iter_mut().rev() {
            d = block.backward(&d);
        }
        d
    }
}

impl Network for Backbone {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_params(&format!("block{i}"), f);
        }
    }
    fn visit_params_mut(&mut self, f: &mut ParamVisitorMut<'_>) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_params_mut(&format!("block{i}"), f);
        }
    }
    fn visit_buffers(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (i, b) in self.blocks.iter().enumerate() {
            b.visit_buffers(&format!("block{i}"), f);
        }
    }
    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        for (i, b) in self.blocks.iter_mut().enumerate() {
            b.visit_buffers_mut(&format!("block{i}"), f);
        }
    }
}

/// Anything that maps a sample batch to `(features, logits)`.
pub trait ModelHandle {
    fn forward_batch(&mut self, x: &Array3<f64>, mode: Mode)
        -> Result<(Array2<f64>, Array2<f64>)>;
    fn n_classes(&self) -> usize;
    fn feature_dim(&self) -> usize;
}

/// Teacher: backbone plus classifier. Forward yields `(features, logits)`.
#[derive(Debug, Clone)]
pub struct TeacherModel {
    pub backbone: Backbone,
    pub classifier: Linear,
}

/// Build a seeded teacher.
pub fn build_teacher(config: &BackboneConfig, seed: u64) -> Result<TeacherModel> {
    let mut rng = stream_rng(seed, "teacher-init");
    let backbone = Backbone::new(config, &mut rng)?;
    let classifier = Linear::new(config.feature_dim, config.n_classes, &mut rng);
    Ok(TeacherModel {
        backbone,
        classifier,
    })
}

impl TeacherModel {
    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<(Array2<f64>, Array2<f64>)> {
        let features = self.backbone.forward(x, mode)?;
        let logits = self.classifier.forward(&features, mode)?;
        Ok((features, logits))
    }

    /// Accumulate gradients from both heads and push them through the
    /// backbone. Either head's gradient may be zero.
    pub fn backward(&mut self, d_features: &Array2<f64>, d_logits: &Array2<f64>) {
        let mut df = self.classifier.backward(d_logits);
        df += d_features;
        self.backbone.backward(&df);
    }
}

impl ModelHandle for TeacherModel {
    fn forward_batch(
        &mut self,
        x: &Array3<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        self.forward(x, mode)
    }
    fn n_classes(&self) -> usize {
        self.backbone.config.n_classes
    }
    fn feature_dim(&self) -> usize {
        self.backbone.config.feature_dim
    }
}

impl Network for TeacherModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.backbone.visit_params(f);
        f("classifier.w", self.classifier.w.view().into_dyn());
        f("classifier.b", self.classifier.b.view().into_dyn());
    }
    fn visit_params_mut(&mut self, f: &mut ParamVisitorMut<'_>) {
        self.backbone.visit_params_mut(f);
        f(
            "classifier.w",
            self.classifier.w.view_mut().into_dyn(),
            self.classifier.gw.view_mut().into_dyn(),
        );
        f(
            "classifier.b",
            self.classifier.b.view_mut().into_dyn(),
            self.classifier.gb.view_mut().into_dyn(),
        );
    }
    fn visit_buffers(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.backbone.visit_buffers(f);
    }
    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.backbone.visit_buffers_mut(f);
    }
}

/// One student forward pass: pooled features, class logits, and the
/// projection of the features into the teacher's feature space.
#[derive(Debug, Clone)]
pub struct StudentForward {
    pub features: Array2<f64>,
    pub logits: Array2<f64>,
    pub projected: Array2<f64>,
}

/// Student: narrower backbone, classifier on its own features, and a
/// linear projection into the teacher feature space for the discriminators.
#[derive(Debug, Clone)]
pub struct StudentModel {
    pub backbone: Backbone,
    pub classifier: Linear,
    pub projection: Linear,
}

/// Build a seeded student. Every block width must be strictly smaller than
/// the teacher's, and the projection maps into the teacher's feature width.
pub fn build_student(
    config: &BackboneConfig,
    teacher: &BackboneConfig,
    seed: u64,
) -> Result<StudentModel> {
    for i in 0..3 {
        if config.widths[i] >= teacher.widths[i] {
            return Err(Error::config(format!(
                "student width {} at block {i} is not smaller than teacher width {}",
                config.widths[i], teacher.widths[i]
            )));
        }
    }
    build_student_with_projection(config, teacher.feature_dim, seed)
}

/// Student without a teacher context (the source-only baseline): the
/// projection degenerates to feature_dim -> feature_dim and is never
/// trained. Backbone and classifier init draws are identical to
/// [`build_student`] for the same seed, so baselines start from the same
/// weights as distilled students.
pub fn build_student_standalone(config: &BackboneConfig, seed: u64) -> Result<StudentModel> {
    build_student_with_projection(config, config.feature_dim, seed)
}

fn build_student_with_projection(
    config: &BackboneConfig,
    projection_dim: usize,
    seed: u64,
) -> Result<StudentModel> {
    let mut rng = stream_rng(seed, "student-init");
    let backbone = Backbone::new(config, &mut rng)?;
    let classifier = Linear::new(config.feature_dim, config.n_classes, &mut rng);
    let projection = Linear::new(config.feature_dim, projection_dim, &mut rng);
    Ok(StudentModel {
        backbone,
        classifier,
        projection,
    })
}

impl StudentModel {
    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<StudentForward> {
        let features = self.backbone.forward(x, mode)?;
        let logits = self.classifier.forward(&features, mode)?;
        let projected = self.projection.forward(&features, mode)?;
        Ok(StudentForward {
            features,
            logits,
            projected,
        })
    }

    /// Push head gradients through the shared backbone. `d_projected` feeds
    /// the projection head, `d_logits` the classifier; either may be zero.
    pub fn backward(&mut self, d_projected: &Array2<f64>, d_logits: &Array2<f64>) {
        let mut df = self.projection.backward(d_projected);
        df += &self.classifier.backward(d_logits);
        self.backbone.backward(&df);
    }

    /// View of the parameters that ship at deployment (backbone +
    /// classifier; the projection is a distillation-time adapter).
    pub fn deployed(&self) -> DeployedStudent<'_> {
        DeployedStudent { student: self }
    }
}

impl ModelHandle for StudentModel {
    fn forward_batch(
        &mut self,
        x: &Array3<f64>,
        mode: Mode,
    ) -> Result<(Array2<f64>, Array2<f64>)> {
        let features = self.backbone.forward(x, mode)?;
        let logits = self.classifier.forward(&features, mode)?;
        Ok((features, logits))
    }
    fn n_classes(&self) -> usize {
        self.backbone.config.n_classes
    }
    fn feature_dim(&self) -> usize {
        self.backbone.config.feature_dim
    }
}

impl Network for StudentModel {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.backbone.visit_params(f);
        f("classifier.w", self.classifier.w.view().into_dyn());
        f("classifier.b", self.classifier.b.view().into_dyn());
        f("projection.w", self.projection.w.view().into_dyn());
        f("projection.b", self.projection.b.view().into_dyn());
    }
    fn visit_params_mut(&mut self, f: &mut ParamVisitorMut<'_>) {
        self.backbone.visit_params_mut(f);
        f(
            "classifier.w",
            self.classifier.w.view_mut().into_dyn(),
            self.classifier.gw.view_mut().into_dyn(),
        );
        f(
            "classifier.b",
            self.classifier.b.view_mut().into_dyn(),
            self.classifier.gb.view_mut().into_dyn(),
        );
        f(
            "projection.w",
            self.projection.w.view_mut().into_dyn(),
            self.projection.gw.view_mut().into_dyn(),
        );
        f(
            "projection.b",
            self.projection.b.view_mut().into_dyn(),
            self.projection.gb.view_mut().into_dyn(),
        );
    }
    fn visit_buffers(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.backbone.visit_buffers(f);
    }
    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        self.backbone.visit_buffers_mut(f);
    }
}

/// Deployment view of a student: the projection is excluded, matching what
/// actually runs at inference.
pub struct DeployedStudent<'a> {
    student: &'a StudentModel,
}

impl Network for DeployedStudent<'_> {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        self.student.backbone.visit_params(f);
        f("classifier.w", self.student.classifier.w.view().into_dyn());
        f("classifier.b", self.student.classifier.b.view().into_dyn());
    }
    fn visit_params_mut(&mut self, _f: &mut ParamVisitorMut<'_>) {
        unreachable!("deployment view is read-only");
    }
}
