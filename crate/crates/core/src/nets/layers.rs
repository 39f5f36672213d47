//! Differentiable building blocks with hand-written backward passes.
//!
//! Each layer owns its parameters, their gradient accumulators, and the
//! forward cache needed by `backward`. Forward in [`Mode::Train`] stores the
//! cache; [`Mode::Eval`] skips it and, for batch norm, switches to running
//! statistics. `backward` consumes the most recent cache and accumulates
//! parameter gradients, returning the gradient w.r.t. the layer input.

use ndarray::{Array1, Array2, Array3, Axis, Dimension, Zip};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Forward-pass mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Fan-in-scaled uniform init on `[-sqrt(1/fan_in), sqrt(1/fan_in)]`.
fn init_uniform(rng: &mut ChaCha8Rng, n: usize, fan_in: usize) -> Vec<f64> {
    let bound = (1.0 / fan_in as f64).sqrt();
    (0..n).map(|_| rng.random_range(-bound..bound)).collect()
}

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------

/// 1D convolution, valid padding. Input `[n, c_in, t]`, output
/// `[n, c_out, t_out]` with `t_out = (t - k)/stride + 1`.
///
/// Forward lowers the input to a `[n*t_out, c_in*k]` patch matrix so both
/// directions run as matrix products.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: Array3<f64>, // [c_out, c_in, k]
    pub b: Array1<f64>,
    pub gw: Array3<f64>,
    pub gb: Array1<f64>,
    pub stride: usize,
    cache: Option<ConvCache>,
}

#[derive(Debug, Clone)]
struct ConvCache {
    cols: Array2<f64>,
    n: usize,
    t: usize,
}

impl Conv1d {
    pub fn new(c_in: usize, c_out: usize, k: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let fan_in = c_in * k;
        let w = Array3::from_shape_vec(
            (c_out, c_in, k),
            init_uniform(rng, c_out * c_in * k, fan_in),
        )
        .unwrap();
        let b = Array1::from_vec(init_uniform(rng, c_out, fan_in));
        Conv1d {
            gw: Array3::zeros(w.raw_dim()),
            gb: Array1::zeros(c_out),
            w,
            b,
            stride,
            cache: None,
        }
    }

    pub fn out_len(&self, t: usize) -> Result<usize> {
        let k = self.w.dim().2;
        if t < k {
            return Err(Error::config(format!(
                "input length {t} shorter than kernel {k}"
            )));
        }
        Ok((t - k) / self.stride + 1)
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        let (n, c_in, t) = x.dim();
        let (c_out, w_cin, k) = self.w.dim();
        if c_in != w_cin {
            return Err(Error::config(format!(
                "conv expects {w_cin} input channels, got {c_in}"
            )));
        }
        let t_out = self.out_len(t)?;

        let mut cols = Array2::zeros((n * t_out, c_in * k));
        for i in 0..n {
            for to in 0..t_out {
                let row = i * t_out + to;
                for ci in 0..c_in {
                    for kk in 0..k {
                        cols[[row, ci * k + kk]] = x[[i, ci, to * self.stride + kk]];
                    }
                }
            }
        }

        let w2 = self.w.to_shape((c_out, c_in * k)).unwrap();
        let y2 = cols.dot(&w2.t()); // [n*t_out, c_out]

        let mut y = Array3::zeros((n, c_out, t_out));
        for i in 0..n {
            for co in 0..c_out {
                for to in 0..t_out {
                    y[[i, co, to]] = y2[[i * t_out + to, co]] + self.b[co];
                }
            }
        }

        self.cache = match mode {
            Mode::Train => Some(ConvCache { cols, n, t }),
            Mode::Eval => None,
        };
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.take().expect("conv backward without forward cache");
        let (n, c_out, t_out) = dy.dim();
        let (_, c_in, k) = self.w.dim();
        assert_eq!(n, cache.n);

        let mut dy2 = Array2::zeros((n * t_out, c_out));
        for i in 0..n {
            for co in 0..c_out {
                for to in 0..t_out {
                    dy2[[i * t_out + to, co]] = dy[[i, co, to]];
                }
            }
        }

        let dw2 = dy2.t().dot(&cache.cols); // [c_out, c_in*k]
        let dw = dw2.into_shape_with_order((c_out, c_in, k)).unwrap();
        self.gw += &dw;
        self.gb += &dy2.sum_axis(Axis(0));

        let w2 = self.w.to_shape((c_out, c_in * k)).unwrap();
        let dcols = dy2.dot(&w2); // [n*t_out, c_in*k]

        let mut dx = Array3::zeros((n, c_in, cache.t));
        for i in 0..n {
            for to in 0..t_out {
                let row = i * t_out + to;
                for ci in 0..c_in {
                    for kk in 0..k {
                        dx[[i, ci, to * self.stride + kk]] += dcols[[row, ci * k + kk]];
                    }
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// BatchNorm1d
// ---------------------------------------------------------------------------

/// Per-channel batch normalization over `[n, c, t]`.
///
/// Train mode normalizes with biased batch statistics and folds them into
/// the running averages (momentum 0.1); eval mode normalizes with the
/// running averages. Both conventions use the same biased variance so a
/// checkpointed model is self-consistent.
#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub g_gamma: Array1<f64>,
    pub g_beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache>,
}

#[derive(Debug, Clone)]
struct BnCache {
    xhat: Array3<f64>,
    inv_std: Array1<f64>,
    mode: Mode,
}

impl BatchNorm1d {
    pub fn new(channels: usize) -> Self {
        BatchNorm1d {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            g_gamma: Array1::zeros(channels),
            g_beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Array3<f64> {
        let (n, c, t) = x.dim();
        let m = (n * t) as f64;

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = Array1::zeros(c);
                let mut var = Array1::zeros(c);
                for ch in 0..c {
                    let slice = x.index_axis(Axis(1), ch);
                    let mu = slice.sum() / m;
                    let v = slice.mapv(|v| (v - mu) * (v - mu)).sum() / m;
                    mean[ch] = mu;
                    var[ch] = v;
                }
                Zip::from(&mut self.running_mean)
                    .and(&mean)
                    .for_each(|r, &b| *r = (1.0 - self.momentum) * *r + self.momentum * b);
                Zip::from(&mut self.running_var)
                    .and(&var)
                    .for_each(|r, &b| *r = (1.0 - self.momentum) * *r + self.momentum * b);
                (mean, var)
            }
            Mode::Eval => (self.running_mean.clone(), self.running_var.clone()),
        };

        let inv_std = var.mapv(|v| 1.0 / (v + self.eps).sqrt());
        let mut xhat = x.clone();
        for ch in 0..c {
            let mu = mean[ch];
            let is = inv_std[ch];
            xhat.index_axis_mut(Axis(1), ch)
                .mapv_inplace(|v| (v - mu) * is);
        }

        let mut y = xhat.clone();
        for ch in 0..c {
            let g = self.gamma[ch];
            let b = self.beta[ch];
            y.index_axis_mut(Axis(1), ch).mapv_inplace(|v| g * v + b);
        }

        self.cache = Some(BnCache { xhat, inv_std, mode });
        y
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let cache = self.cache.take().expect("bn backward without forward cache");
        let (n, c, t) = dy.dim();
        let m = (n * t) as f64;
        let mut dx = Array3::zeros((n, c, t));

        for ch in 0..c {
            let dy_c = dy.index_axis(Axis(1), ch);
            let xhat_c = cache.xhat.index_axis(Axis(1), ch);
            let sum_dy: f64 = dy_c.sum();
            let sum_dy_xhat: f64 = Zip::from(&dy_c).and(&xhat_c).fold(0.0, |a, &d, &h| a + d * h);
            self.g_beta[ch] += sum_dy;
            self.g_gamma[ch] += sum_dy_xhat;

            let g = self.gamma[ch];
            let is = cache.inv_std[ch];
            let mut dx_c = dx.index_axis_mut(Axis(1), ch);
            match cache.mode {
                Mode::Train => {
                    // dx = gamma * inv_std / m * (m*dxhat' - sum(dxhat') - xhat*sum(dxhat'*xhat))
                    // with dxhat' = dy (gamma factored out front).
                    Zip::from(&mut dx_c).and(&dy_c).and(&xhat_c).for_each(|o, &d, &h| {
                        *o = g * is / m * (m * d - sum_dy - h * sum_dy_xhat);
                    });
                }
                Mode::Eval => {
                    // Statistics are constants in eval mode.
                    Zip::from(&mut dx_c).and(&dy_c).for_each(|o, &d| *o = g * is * d);
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// ReLU
// ---------------------------------------------------------------------------

/// Elementwise max(0, x) over arrays of any dimension.
#[derive(Debug, Clone, Default)]
pub struct Relu<D: Dimension> {
    mask: Option<ndarray::Array<bool, D>>,
}

impl<D: Dimension> Relu<D> {
    pub fn new() -> Self {
        Relu { mask: None }
    }

    pub fn forward(&mut self, x: &ndarray::Array<f64, D>, mode: Mode) -> ndarray::Array<f64, D> {
        if mode == Mode::Train {
            self.mask = Some(x.mapv(|v| v > 0.0));
        }
        x.mapv(|v| v.max(0.0))
    }

    pub fn backward(&mut self, dy: &ndarray::Array<f64, D>) -> ndarray::Array<f64, D> {
        let mask = self.mask.take().expect("relu backward without forward cache");
        let mut dx = dy.clone();
        Zip::from(&mut dx).and(&mask).for_each(|d, &keep| {
            if !keep {
                *d = 0.0;
            }
        });
        dx
    }
}

// ---------------------------------------------------------------------------
// MaxPool1d
// ---------------------------------------------------------------------------

/// 1D max pooling with window = stride (non-overlapping); trailing samples
/// that do not fill a window are dropped.
#[derive(Debug, Clone)]
pub struct MaxPool1d {
    pub k: usize,
    argmax: Option<Array3<usize>>,
    in_len: usize,
}

impl MaxPool1d {
    pub fn new(k: usize) -> Self {
        MaxPool1d {
            k,
            argmax: None,
            in_len: 0,
        }
    }

    pub fn out_len(&self, t: usize) -> Result<usize> {
        if t < self.k {
            return Err(Error::config(format!(
                "input length {t} shorter than pool window {}",
                self.k
            )));
        }
        Ok(t / self.k)
    }

    pub fn forward(&mut self, x: &Array3<f64>, mode: Mode) -> Result<Array3<f64>> {
        let (n, c, t) = x.dim();
        let t_out = self.out_len(t)?;
        let mut y = Array3::zeros((n, c, t_out));
        let mut arg = Array3::zeros((n, c, t_out));
        for i in 0..n {
            for ch in 0..c {
                for to in 0..t_out {
                    let base = to * self.k;
                    let mut best = x[[i, ch, base]];
                    let mut best_idx = base;
                    for kk in 1..self.k {
                        let v = x[[i, ch, base + kk]];
                        if v > best {
                            best = v;
                            best_idx = base + kk;
                        }
                    }
                    y[[i, ch, to]] = best;
                    arg[[i, ch, to]] = best_idx;
                }
            }
        }
        if mode == Mode::Train {
            self.argmax = Some(arg);
            self.in_len = t;
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array3<f64>) -> Array3<f64> {
        let arg = self.argmax.take().expect("pool backward without forward cache");
        let (n, c, t_out) = dy.dim();
        let mut dx = Array3::zeros((n, c, self.in_len));
        for i in 0..n {
            for ch in 0..c {
                for to in 0..t_out {
                    dx[[i, ch, arg[[i, ch, to]]]] += dy[[i, ch, to]];
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Global average pooling
// ---------------------------------------------------------------------------

/// Mean over the time axis: `[n, c, t]` -> `[n, c]`.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    in_len: usize,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { in_len: 0 }
    }

    pub fn forward(&mut self, x: &Array3<f64>) -> Array2<f64> {
        self.in_len = x.dim().2;
        x.mean_axis(Axis(2)).unwrap()
    }

    pub fn backward(&self, dy: &Array2<f64>) -> Array3<f64> {
        let (n, c) = dy.dim();
        let t = self.in_len;
        let mut dx = Array3::zeros((n, c, t));
        let scale = 1.0 / t as f64;
        for i in 0..n {
            for ch in 0..c {
                let d = dy[[i, ch]] * scale;
                for to in 0..t {
                    dx[[i, ch, to]] = d;
                }
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Linear
// ---------------------------------------------------------------------------

/// Fully connected layer: `y = x W^T + b` with `x: [n, in]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>, // [out, in]
    pub b: Array1<f64>,
    pub gw: Array2<f64>,
    pub gb: Array1<f64>,
    cache: Option<Array2<f64>>,
}

impl Linear {
    pub fn new(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let w = Array2::from_shape_vec(
            (out_dim, in_dim),
            init_uniform(rng, out_dim * in_dim, in_dim),
        )
        .unwrap();
        let b = Array1::from_vec(init_uniform(rng, out_dim, in_dim));
        Linear {
            gw: Array2::zeros(w.raw_dim()),
            gb: Array1::zeros(out_dim),
            w,
            b,
            cache: None,
        }
    }

    /// Zero all parameters. Handy for heads that must start neutral.
    pub fn zero_params(&mut self) {
        self.w.fill(0.0);
        self.b.fill(0.0);
    }

    pub fn forward(&mut self, x: &Array2<f64>, mode: Mode) -> Result<Array2<f64>> {
        if x.ncols() != self.w.ncols() {
            return Err(Error::config(format!(
                "linear expects input dim {}, got {}",
                self.w.ncols(),
                x.ncols()
            )));
        }
        let y = x.dot(&self.w.t()) + &self.b;
        if mode == Mode::Train {
            self.cache = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, dy: &Array2<f64>) -> Array2<f64> {
        let x = self.cache.take().expect("linear backward without forward cache");
        self.gw += &dy.t().dot(&x);
        self.gb += &dy.sum_axis(Axis(0));
        dy.dot(&self.w)
    }
}

// ---------------------------------------------------------------------------
// Gradient reversal
// ---------------------------------------------------------------------------

/// Identity forward; backward multiplies the incoming gradient by `-lambda`.
///
/// Turns minimization of a downstream classifier loss into adversarial
/// feature learning for everything upstream.
#[derive(Debug, Clone, Copy)]
pub struct GradientReversal {
    pub lambda: f64,
}

impl GradientReversal {
    pub fn new(lambda: f64) -> Self {
        GradientReversal { lambda }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.clone()
    }

    pub fn backward(&self, dy: &Array2<f64>) -> Array2<f64> {
        dy.mapv(|v| -self.lambda * v)
    }
}
