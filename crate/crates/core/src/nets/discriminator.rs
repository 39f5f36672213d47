//! Binary MLP discriminators.
//!
//! The same network shape serves both adversarial roles: telling teacher
//! features from student features, and telling source-domain features from
//! target-domain ones. Output is a sigmoid probability clamped to
//! `[1e-7, 1 - 1e-7]` so downstream logs are always finite.

use ndarray::{Array1, Array2, ArrayViewD};

use crate::error::Result;
use crate::losses::{clamp_prob, PROB_EPS};
use crate::rng::stream_rng;

use super::layers::{Linear, Mode, Relu};
use super::params::{Network, ParamVisitorMut};

/// MLP `input_dim -> hidden (ReLU) -> 1 (sigmoid, clamped)`.
#[derive(Debug, Clone)]
pub struct Discriminator {
    layers: Vec<Linear>,
    relus: Vec<Relu<ndarray::Ix2>>,
    sigmoid_cache: Option<Array1<f64>>,
    pub input_dim: usize,
}

/// Build a seeded discriminator; `hidden` defaults to `[128]` at call sites.
pub fn build_discriminator(input_dim: usize, hidden: &[usize], seed: u64) -> Result<Discriminator> {
    if input_dim == 0 {
        return Err(crate::error::Error::config("discriminator input_dim must be >= 1"));
    }
    if hidden.contains(&0) {
        return Err(crate::error::Error::config("hidden widths must be >= 1"));
    }
    let mut rng = stream_rng(seed, "discriminator-init");
    let mut layers = Vec::new();
    let mut relus = Vec::new();
    let mut d = input_dim;
    for &h in hidden {
        layers.push(Linear::new(d, h, &mut rng));
        relus.push(Relu::new());
        d = h;
    }
    layers.push(Linear::new(d, 1, &mut rng));
    Ok(Discriminator {
        layers,
        relus,
        sigmoid_cache: None,
        input_dim,
    })
}

impl Discriminator {
    /// Probability per row of `x`, strictly inside `(0, 1)`.
    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array1<f64>> {
        let mut y = x.clone();
        let last = self.layers.len() - 1;
        for i in 0..last {
            y = self.layers[i].forward(&y, mode)?;
            y = self.relus[i].forward(&y, mode);
        }
        let s = self.layers[last].forward(&y, mode)?; // [n, 1]
        let raw = s.column(0).mapv(|v| 1.0 / (1.0 + (-v).exp()));
        if mode == Mode::Train {
            self.sigmoid_cache = Some(raw.clone());
        }
        Ok(raw.mapv(clamp_prob))
    }

    /// Backprop `dL/dprob` through the clamp, sigmoid, and MLP; accumulates
    /// parameter gradients and returns `dL/dx`.
    pub fn backward(&mut self, d_prob: &Array1<f64>) -> Array2<f64> {
        let raw = self
            .sigmoid_cache
            .take()
            .expect("discriminator backward without forward cache");
        // clamped coordinates are constants, elsewhere d sigmoid = s(1-s)
        let ds = ndarray::Zip::from(d_prob).and(&raw).map_collect(|&d, &s| {
            if s <= PROB_EPS || s >= 1.0 - PROB_EPS {
                0.0
            } else {
                d * s * (1.0 - s)
            }
        });
        let n = ds.len();
        let mut d = ds.into_shape_with_order((n, 1)).unwrap();
        let last = self.layers.len() - 1;
        let mut dx = self.layers[last].backward(&d);
        for i in (0..last).rev() {
            d = self.relus[i].backward(&dx);
            dx = self.layers[i].backward(&d);
        }
        dx
    }

    /// Zero the final layer so the output starts at exactly 0.5.
    pub fn neutralize_output(&mut self) {
        self.layers.last_mut().unwrap().zero_params();
    }
}

impl Network for Discriminator {
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        for (i, l) in self.layers.iter().enumerate() {
            f(&format!("layer{i}.w"), l.w.view().into_dyn());
            f(&format!("layer{i}.b"), l.b.view().into_dyn());
        }
    }
    fn visit_params_mut(&mut self, f: &mut ParamVisitorMut<'_>) {
        for (i, l) in self.layers.iter_mut().enumerate() {
            f(
                &format!("layer{i}.w"),
                l.w.view_mut().into_dyn(),
                l.gw.view_mut().into_dyn(),
            );
            f(
                &format!("layer{i}.b"),
                l.b.view_mut().into_dyn(),
                l.gb.view_mut().into_dyn(),
            );
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{loss_dis, loss_dis_grad};
    use crate::numdiff::{central_gradient, max_relative_error};
    use rand::Rng;

    #[test]
    fn zeroed_output_layer_gives_half() {
        let mut d = build_discriminator(5, &[8], 0).unwrap();
        d.neutralize_output();
        let x = Array2::from_shape_fn((3, 5), |(i, j)| (i * 5 + j) as f64);
        let p = d.forward(&x, Mode::Eval).unwrap();
        assert!(p.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn output_is_clamped() {
        let mut d = build_discriminator(1, &[4], 1).unwrap();
        // saturate by scaling weights up
        d.visit_params_mut(&mut |_, mut v, _| v.mapv_inplace(|x| x * 1e4));
        for sign in [-1.0, 1.0] {
            let x = Array2::from_elem((1, 1), sign * 100.0);
            let p = d.forward(&x, Mode::Eval).unwrap();
            assert!(p[0] >= PROB_EPS && p[0] <= 1.0 - PROB_EPS);
        }
    }

    #[test]
    fn input_dim_mismatch_is_an_error() {
        let mut d = build_discriminator(4, &[8], 0).unwrap();
        let x = Array2::zeros((2, 3));
        assert!(d.forward(&x, Mode::Eval).is_err());
        assert!(build_discriminator(0, &[8], 0).is_err());
    }

    /// Discriminator loss gradient, end to end through the MLP parameters.
    #[test]
    fn parameter_gradients_match_finite_differences() {
        let mut rng = crate::rng::stream_rng(9, "disc-grad");
        let disc = build_discriminator(3, &[4], 2).unwrap();
        let x_real = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));
        let x_fake = Array2::from_shape_fn((2, 3), |_| rng.random_range(-1.0..1.0));

        let loss = |d: &mut Discriminator| {
            let p_real = d.forward(&x_real, Mode::Train).unwrap();
            let p_fake = d.forward(&x_fake, Mode::Train).unwrap();
            loss_dis(p_real.view(), p_fake.view()).unwrap()
        };

        let mut d = disc.clone();
        // two forwards: keep caches for each backward separately
        let p_real = d.forward(&x_real, Mode::Train).unwrap();
        let (g_real, _) = loss_dis_grad(p_real.view(), p_real.view());
        d.backward(&g_real);
        let p_fake = d.forward(&x_fake, Mode::Train).unwrap();
        let (_, g_fake) = loss_dis_grad(p_real.view(), p_fake.view());
        d.backward(&g_fake);
        let mut analytic = Vec::new();
        d.visit_params_mut(&mut |_, _, g| analytic.extend(g.iter().cloned()));

        let mut theta = Vec::new();
        disc.visit_params(&mut |_, v| theta.extend(v.iter().cloned()));
        let fd = central_gradient(
            |th| {
                let mut dc = disc.clone();
                let mut k = 0;
                dc.visit_params_mut(&mut |_, mut v, _| {
                    for p in v.iter_mut() {
                        *p = th[k];
                        k += 1;
                    }
                });
                loss(&mut dc)
            },
            &theta,
            1e-5,
        );
        assert!(max_relative_error(&analytic, &fd) < 1e-4);
    }
}
