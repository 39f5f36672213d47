//! Differentiable components: backbones, discriminators, gradient reversal,
//! the optimizer, and parameter/FLOP accounting.

pub mod backbone;
pub mod discriminator;
pub mod flops;
pub mod layers;
pub mod params;
pub mod weights_io;

pub use backbone::{
    build_student, build_student_standalone, build_teacher, Backbone, BackboneConfig,
    DeployedStudent, ModelHandle, StudentForward,
    StudentModel, TeacherModel,
};
pub use discriminator::{build_discriminator, Discriminator};
pub use flops::{backbone_flops, conv1d_flops, linear_flops};
pub use layers::{GradientReversal, Mode};
pub use params::{count_parameters, zero_grad, Adam, Network};
pub use weights_io::{load_weights, save_weights, weights_to_bytes};

use serde::{Deserialize, Serialize};

/// Teacher-vs-student size comparison. Student numbers describe the
/// deployed model (backbone + classifier); the feature projection only
/// exists during distillation.
///
/// FLOP convention: 2 per multiply-add, 1 per pooling/activation output
/// element, 2 per batch-norm output element (see [`flops`]).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ComplexityReport {
    pub n_params_teacher: usize,
    pub n_params_student: usize,
    pub flops_teacher: u64,
    pub flops_student: u64,
    pub compression_rate_params: f64,
    pub compression_rate_flops: f64,
}

impl ComplexityReport {
    pub fn compare(teacher: &TeacherModel, student: &StudentModel) -> Self {
        let n_params_teacher = count_parameters(teacher);
        let n_params_student = count_parameters(&student.deployed());
        let flops_teacher = backbone_flops(&teacher.backbone.config);
        let flops_student = backbone_flops(&student.backbone.config);
        ComplexityReport {
            n_params_teacher,
            n_params_student,
            flops_teacher,
            flops_student,
            compression_rate_params: n_params_teacher as f64 / n_params_student as f64,
            compression_rate_flops: flops_teacher as f64 / flops_student as f64,
        }
    }
}
