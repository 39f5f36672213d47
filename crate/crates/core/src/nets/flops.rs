//! Analytic per-forward FLOP counts.
//!
//! Convention (documented here and echoed into complexity reports):
//! a multiply-add is 2 FLOPs, so conv1d costs `2 * c_in * c_out * k * t_out`
//! and a linear layer `2 * in * out`; pooling and activations cost 1 op per
//! output element; batch norm costs 2 per element (scale and shift, eval
//! form). Counts are per input sample.

use super::backbone::BackboneConfig;

/// FLOPs of one conv layer: `2 * c_in * c_out * k * t_out`.
pub fn conv1d_flops(c_in: usize, c_out: usize, k: usize, t_out: usize) -> u64 {
    2 * (c_in * c_out * k * t_out) as u64
}

/// FLOPs of one linear layer: `2 * in * out`.
pub fn linear_flops(in_dim: usize, out_dim: usize) -> u64 {
    2 * (in_dim * out_dim) as u64
}

/// Per-sample forward FLOPs of a backbone-plus-classifier model.
pub fn backbone_flops(cfg: &BackboneConfig) -> u64 {
    let mut total = 0u64;
    let mut t = cfg.timesteps;
    let mut c_in = cfg.in_channels;
    for i in 0..3 {
        let t_conv = (t - cfg.kernels[i]) / cfg.strides[i] + 1;
        let c_out = cfg.widths[i];
        total += conv1d_flops(c_in, c_out, cfg.kernels[i], t_conv);
        total += 2 * (c_out * t_conv) as u64; // batch norm
        total += (c_out * t_conv) as u64; // relu
        let t_pool = t_conv / cfg.pool;
        total += (c_out * t_pool) as u64; // max pool, per output element
        t = t_pool;
        c_in = c_out;
    }
    total += cfg.feature_dim as u64; // global average pool outputs
    total += linear_flops(cfg.feature_dim, cfg.n_classes);
    total
}
