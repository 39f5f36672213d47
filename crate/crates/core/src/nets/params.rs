//! Uniform access to network parameters: counting, zeroing, optimizing,
//! exporting.
//!
//! Every trainable component implements [`Network`], which walks its
//! parameters (and non-trainable buffers such as batch-norm running
//! statistics) in a stable, name-prefixed order. The optimizer, the
//! parameter counter, and the weights files all operate through this one
//! trait, so they agree on ordering by construction.

use ndarray::{ArrayD, ArrayViewD, ArrayViewMutD, Zip};

/// Visitor over `(name, value, grad)` mutable parameter views.
pub type ParamVisitorMut<'a> = dyn FnMut(&str, ArrayViewMutD<'_, f64>, ArrayViewMutD<'_, f64>) + 'a;

/// A network component exposing named parameter tensors.
pub trait Network {
    /// Visit trainable parameters as `(name, value)` in a stable order.
    fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>));

    /// Visit trainable parameters as `(name, value, grad)` mutably, in the
    /// same order as [`Network::visit_params`].
    fn visit_params_mut(&mut self, f: &mut ParamVisitorMut<'_>);

    /// Visit non-trainable state (running statistics). Defaults to none.
    fn visit_buffers(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
        let _ = f;
    }

    /// Mutable buffer visitation, same order as [`Network::visit_buffers`].
    fn visit_buffers_mut(&mut self, f: &mut dyn FnMut(&str, ArrayViewMutD<'_, f64>)) {
        let _ = f;
    }
}

/// Total element count over all trainable parameter tensors.
pub fn count_parameters(net: &dyn Network) -> usize {
    let mut total = 0;
    net.visit_params(&mut |_, v| total += v.len());
    total
}

/// Reset all parameter gradients to zero.
pub fn zero_grad(net: &mut dyn Network) {
    net.visit_params_mut(&mut |_, _, mut g| g.fill(0.0));
}

/// Adaptive moment estimation over a [`Network`]'s parameters.
///
/// Moment buffers are keyed by visitation position, so one optimizer must
/// stay paired with one network for its lifetime.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<ArrayD<f64>>,
    v: Vec<ArrayD<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Apply one update using the gradients currently accumulated in `net`.
    pub fn step(&mut self, net: &mut dyn Network) {
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.lr, self.eps);
        let (ms, vs) = (&mut self.m, &mut self.v);
        let mut idx = 0;
        net.visit_params_mut(&mut |_, mut value, grad| {
            if ms.len() == idx {
                ms.push(ArrayD::zeros(grad.raw_dim()));
                vs.push(ArrayD::zeros(grad.raw_dim()));
            }
            let m = &mut ms[idx];
            let v = &mut vs[idx];
            Zip::from(&mut value)
                .and(&grad)
                .and(m)
                .and(v)
                .for_each(|p, &g, m, v| {
                    *m = b1 * *m + (1.0 - b1) * g;
                    *v = b2 * *v + (1.0 - b2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *p -= lr * mhat / (vhat.sqrt() + eps);
                });
            idx += 1;
        });
        assert_eq!(idx, ms.len(), "network parameter count changed under optimizer");
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array1;

    /// One-tensor toy network for optimizer tests.
    struct Scalar {
        w: Array1<f64>,
        g: Array1<f64>,
    }

    impl Network for Scalar {
        fn visit_params(&self, f: &mut dyn FnMut(&str, ArrayViewD<'_, f64>)) {
            f("w", self.w.view().into_dyn());
        }
        fn visit_params_mut(&mut self, f: &mut ParamVisitorMut<'_>) {
            f(
                "w",
                self.w.view_mut().into_dyn(),
                self.g.view_mut().into_dyn(),
            );
        }
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut net = Scalar {
            w: Array1::from_vec(vec![5.0, -3.0]),
            g: Array1::zeros(2),
        };
        let mut opt = Adam::new(0.1);
        for _ in 0..500 {
            net.g.assign(&net.w.clone()); // d/dw (w^2/2) = w
            opt.step(&mut net);
        }
        assert!(net.w.iter().all(|&v| v.abs() < 1e-3));
    }

    #[test]
    fn adam_with_zero_grads_is_identity() {
        let mut net = Scalar {
            w: Array1::from_vec(vec![1.25, -0.5]),
            g: Array1::zeros(2),
        };
        let before = net.w.clone();
        let mut opt = Adam::new(0.1);
        for _ in 0..10 {
            opt.step(&mut net);
        }
        assert_eq!(net.w, before);
    }

    #[test]
    fn count_and_zero() {
        let mut net = Scalar {
            w: Array1::zeros(7),
            g: Array1::ones(7),
        };
        assert_eq!(count_parameters(&net), 7);
        zero_grad(&mut net);
        assert_eq!(net.g.sum(), 0.0);
    }
}
