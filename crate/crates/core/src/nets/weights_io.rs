//! Portable weights: `weights.json` index plus `weights.bin` blob.
//!
//! The index lists every tensor (trainable parameters first, then buffers)
//! with name, shape, dtype, and byte offset; the blob is the concatenation
//! of the tensors as little-endian float32. Loading a file and saving it
//! again reproduces the bytes exactly, since f32 -> f64 -> f32 round-trips
//! losslessly.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::params::Network;

pub const WEIGHTS_INDEX: &str = "weights.json";
pub const WEIGHTS_BLOB: &str = "weights.bin";

#[derive(Debug, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
    pub offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct WeightsIndex {
    pub version: u32,
    pub tensors: Vec<TensorEntry>,
}

/// Serialize a network's parameters and buffers into (index, blob) bytes.
pub fn weights_to_bytes(net: &dyn Network) -> Result<(String, Vec<u8>)> {
    let mut tensors = Vec::new();
    let mut blob = Vec::new();
    {
        let mut push = |name: &str, v: ndarray::ArrayViewD<'_, f64>| {
            tensors.push(TensorEntry {
                name: name.to_string(),
                shape: v.shape().to_vec(),
                dtype: "f32".to_string(),
                offset: blob.len(),
            });
            for &x in v.iter() {
                blob.extend_from_slice(&(x as f32).to_le_bytes());
            }
        };
        net.visit_params(&mut push);
        net.visit_buffers(&mut push);
    }
    let index = serde_json::to_string_pretty(&WeightsIndex {
        version: 1,
        tensors,
    })?;
    Ok((index, blob))
}

/// Write `weights.json` + `weights.bin` into `dir`.
pub fn save_weights(net: &dyn Network, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let (index, blob) = weights_to_bytes(net)?;
    fs::write(dir.join(WEIGHTS_INDEX), index)?;
    fs::write(dir.join(WEIGHTS_BLOB), blob)?;
    Ok(())
}

/// Load weights from `dir` into an already-built network. Every tensor the
/// network visits must be present with a matching shape.
pub fn load_weights(net: &mut dyn Network, dir: &Path) -> Result<()> {
    let index: WeightsIndex = serde_json::from_str(&fs::read_to_string(dir.join(WEIGHTS_INDEX))?)?;
    let blob = fs::read(dir.join(WEIGHTS_BLOB))?;

    let mut by_name = std::collections::HashMap::new();
    for t in &index.tensors {
        if t.dtype != "f32" {
            return Err(Error::config(format!(
                "tensor {}: unsupported dtype {}",
                t.name, t.dtype
            )));
        }
        by_name.insert(t.name.clone(), t);
    }

    let mut missing = Vec::new();
    let mut fill = |name: &str, mut v: ndarray::ArrayViewMutD<'_, f64>| {
        let Some(entry) = by_name.get(name) else {
            missing.push(name.to_string());
            return;
        };
        let n: usize = entry.shape.iter().product();
        if entry.shape != v.shape() {
            missing.push(format!("{name} (shape mismatch)"));
            return;
        }
        let end = entry.offset + 4 * n;
        if end > blob.len() {
            missing.push(format!("{name} (blob truncated)"));
            return;
        }
        for (i, x) in v.iter_mut().enumerate() {
            let o = entry.offset + 4 * i;
            *x = f32::from_le_bytes([blob[o], blob[o + 1], blob[o + 2], blob[o + 3]]) as f64;
        }
    };
    net.visit_params_mut(&mut |name, v, _| fill(name, v));
    net.visit_buffers_mut(&mut |name, v| fill(name, v));

    if missing.is_empty() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "weights file does not match network: {}",
            missing.join(", ")
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::backbone::{build_teacher, BackboneConfig};
    use crate::nets::layers::Mode;
    use ndarray::Array3;

    fn cfg() -> BackboneConfig {
        BackboneConfig {
            in_channels: 2,
            timesteps: 20,
            widths: [2, 3, 4],
            kernels: [3, 3, 2],
            strides: [1, 1, 1],
            pool: 2,
            feature_dim: 4,
            n_classes: 3,
        }
    }

    #[test]
    fn save_load_save_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let teacher = build_teacher(&cfg(), 5).unwrap();
        save_weights(&teacher, dir.path()).unwrap();
        let first_bin = fs::read(dir.path().join(WEIGHTS_BLOB)).unwrap();
        let first_idx = fs::read(dir.path().join(WEIGHTS_INDEX)).unwrap();

        let mut loaded = build_teacher(&cfg(), 99).unwrap();
        load_weights(&mut loaded, dir.path()).unwrap();

        let dir2 = tempfile::tempdir().unwrap();
        save_weights(&loaded, dir2.path()).unwrap();
        assert_eq!(first_bin, fs::read(dir2.path().join(WEIGHTS_BLOB)).unwrap());
        assert_eq!(first_idx, fs::read(dir2.path().join(WEIGHTS_INDEX)).unwrap());
    }

    #[test]
    fn loaded_model_reproduces_eval_outputs_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let mut teacher = build_teacher(&cfg(), 5).unwrap();
        // push the running stats off their init values
        let x = Array3::from_shape_fn((4, 2, 20), |(i, j, k)| ((i + 2 * j + k) as f64).sin());
        teacher.forward(&x, Mode::Train).unwrap();
        save_weights(&teacher, dir.path()).unwrap();

        let mut a = build_teacher(&cfg(), 1).unwrap();
        let mut b = build_teacher(&cfg(), 2).unwrap();
        load_weights(&mut a, dir.path()).unwrap();
        load_weights(&mut b, dir.path()).unwrap();
        let (fa, za) = a.forward(&x, Mode::Eval).unwrap();
        let (fb, zb) = b.forward(&x, Mode::Eval).unwrap();
        assert_eq!(fa, fb);
        assert_eq!(za, zb);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let teacher = build_teacher(&cfg(), 5).unwrap();
        save_weights(&teacher, dir.path()).unwrap();
        let mut other_cfg = cfg();
        other_cfg.widths = [3, 4, 5];
        other_cfg.feature_dim = 5;
        let mut other = build_teacher(&other_cfg, 0).unwrap();
        assert!(load_weights(&mut other, dir.path()).is_err());
    }
}
