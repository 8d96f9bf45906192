//! One-hidden-layer tanh networks.
//!
//! The same type holds the dynamics surrogate `φ(x, u) = W₂ tanh(W₁[x; u] + B₁) + B₂`
//! and the Lyapunov candidate `V(x) = tanh(W₂ tanh(W₁x + B₁) + B₂)`; the
//! only difference is [`OneHiddenNet::output_tanh`].

mod adam;
mod controller;
pub mod expr;
mod io;
mod lipschitz;

pub use adam::{adam_step, AdamState};
pub use controller::SaturatingController;
pub use io::{
    controller_to_string, load_controller, load_net, net_to_string, parse_controller, parse_net, save_controller,
    save_net,
};
pub use lipschitz::{lipschitz_upper, spectral_norm};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rand::Rng;

#[derive(Clone, Debug, PartialEq)]
pub struct OneHiddenNet {
    /// hidden × in
    pub w1: DMatrix<f64>,
    /// hidden
    pub b1: DVector<f64>,
    /// out × hidden
    pub w2: DMatrix<f64>,
    /// out
    pub b2: DVector<f64>,
    pub output_tanh: bool,
}

/// Parameter gradients, laid out like the network.
#[derive(Clone, Debug, PartialEq)]
pub struct NetGrads {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
}

/// Activations kept from a batched forward pass for [`OneHiddenNet::backward`].
pub struct BatchForward {
    /// batch × hidden
    pub hidden: DMatrix<f64>,
    /// batch × out
    pub output: DMatrix<f64>,
}

impl OneHiddenNet {
    pub fn new(
        w1: DMatrix<f64>,
        b1: DVector<f64>,
        w2: DMatrix<f64>,
        b2: DVector<f64>,
        output_tanh: bool,
    ) -> Result<Self> {
        let h = w1.nrows();
        if b1.len() != h || w2.ncols() != h || b2.len() != w2.nrows() {
            return Err(Error::Dimension(format!(
                "W1 {}x{}, B1 {}, W2 {}x{}, B2 {}",
                w1.nrows(),
                w1.ncols(),
                b1.len(),
                w2.nrows(),
                w2.ncols(),
                b2.len()
            )));
        }
        let net = OneHiddenNet {
            w1,
            b1,
            w2,
            b2,
            output_tanh,
        };
        if !net.params().iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network weights".into()));
        }
        Ok(net)
    }

    pub fn zeros(input: usize, hidden: usize, output: usize, output_tanh: bool) -> Self {
        OneHiddenNet {
            w1: DMatrix::zeros(hidden, input),
            b1: DVector::zeros(hidden),
            w2: DMatrix::zeros(output, hidden),
            b2: DVector::zeros(output),
            output_tanh,
        }
    }

    /// Weights and biases uniform in `±1/√fan_in` of their layer.
    pub fn init_uniform<R: Rng>(input: usize, hidden: usize, output: usize, output_tanh: bool, rng: &mut R) -> Self {
        let a1 = 1.0 / (input as f64).sqrt();
        let a2 = 1.0 / (hidden as f64).sqrt();
        OneHiddenNet {
            w1: DMatrix::from_fn(hidden, input, |_, _| rng.gen_range(-a1..a1)),
            b1: DVector::from_fn(hidden, |_, _| rng.gen_range(-a1..a1)),
            w2: DMatrix::from_fn(output, hidden, |_, _| rng.gen_range(-a2..a2)),
            b2: DVector::from_fn(output, |_, _| rng.gen_range(-a2..a2)),
            output_tanh,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.nrows()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.len()
            )));
        }
        Ok(())
    }

    /// Hidden activations `tanh(W₁x + B₁)`.
    fn hidden(&self, x: &[f64]) -> Vec<f64> {
        (0..self.hidden_dim())
            .map(|i| {
                let mut a = self.b1[i];
                for (j, xj) in x.iter().enumerate() {
                    a += self.w1[(i, j)] * xj;
                }
                a.tanh()
            })
            .collect()
    }

    fn output_from_hidden(&self, h: &[f64]) -> Vec<f64> {
        (0..self.output_dim())
            .map(|o| {
                let mut z = self.b2[o];
                for (i, hi) in h.iter().enumerate() {
                    z += self.w2[(o, i)] * hi;
                }
                if self.output_tanh {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        Ok(self.output_from_hidden(&self.hidden(x)))
    }

    /// Forward pass without the dimension check, for hot loops.
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.output_from_hidden(&self.hidden(x))
    }

    /// Value and input Jacobian (out × in) in one pass.
    pub fn eval_with_jacobian(&self, x: &[f64]) -> (Vec<f64>, DMatrix<f64>) {
        let h = self.hidden(x);
        let y = self.output_from_hidden(&h);
        let dh: Vec<f64> = h.iter().map(|v| 1.0 - v * v).collect();
        let mut jac = DMatrix::zeros(self.output_dim(), self.input_dim());
        for o in 0..self.output_dim() {
            let outer = if self.output_tanh { 1.0 - y[o] * y[o] } else { 1.0 };
            for j in 0..self.input_dim() {
                let mut s = 0.0;
                for i in 0..self.hidden_dim() {
                    s += self.w2[(o, i)] * dh[i] * self.w1[(i, j)];
                }
                jac[(o, j)] = outer * s;
            }
        }
        (y, jac)
    }

    /// Input Jacobian `∂net/∂x` (out × in).
    pub fn gradient_x(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        self.check_input(x)?;
        Ok(self.eval_with_jacobian(x).1)
    }

    /// Batched forward pass; rows of `x` are samples.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> BatchForward {
        let mut a = x * self.w1.transpose();
        for mut row in a.row_iter_mut() {
            row += self.b1.transpose();
        }
        let hidden = a.map(f64::tanh);
        let mut z = &hidden * self.w2.transpose();
        for mut row in z.row_iter_mut() {
            row += self.b2.transpose();
        }
        let output = if self.output_tanh { z.map(f64::tanh) } else { z };
        BatchForward { hidden, output }
    }

    /// Backpropagates `loss_grads = ∂L/∂output` (batch × out) to parameter
    /// gradients. `batch_index` labels the error if the result is not finite.
    pub fn backward(
        &self,
        x: &DMatrix<f64>,
        fwd: &BatchForward,
        loss_grads: &DMatrix<f64>,
        batch_index: usize,
    ) -> Result<NetGrads> {
        if loss_grads.shape() != fwd.output.shape() || x.ncols() != self.input_dim() {
            return Err(Error::Dimension("backward: batch shapes".into()));
        }
        let gz = if self.output_tanh {
            loss_grads.zip_map(&fwd.output, |g, y| g * (1.0 - y * y))
        } else {
            loss_grads.clone()
        };
        let w2 = gz.transpose() * &fwd.hidden;
        let b2 = DVector::from_iterator(gz.ncols(), gz.column_iter().map(|c| c.sum()));
        let dh = &gz * &self.w2;
        let da = dh.zip_map(&fwd.hidden, |g, h| g * (1.0 - h * h));
        let w1 = da.transpose() * x;
        let b1 = DVector::from_iterator(da.ncols(), da.column_iter().map(|c| c.sum()));
        let grads = NetGrads { w1, b1, w2, b2 };
        if !grads.flatten().iter().all(|v| v.is_finite()) {
            return Err(Error::Training {
                batch: batch_index,
                reason: "non-finite gradient".into(),
            });
        }
        Ok(grads)
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len()
    }

    /// Parameters flattened as `W1 | B1 | W2 | B2`, each column-major.
    pub fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        p.extend(self.w1.iter());
        p.extend(self.b1.iter());
        p.extend(self.w2.iter());
        p.extend(self.b2.iter());
        p
    }

    pub fn set_params(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Dimension(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                p.len()
            )));
        }
        let mut it = p.iter().copied();
        for v in self.w1.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.b1.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.w2.iter_mut() {
            *v = it.next().unwrap();
        }
        for v in self.b2.iter_mut() {
            *v = it.next().unwrap();
        }
        Ok(())
    }
}

impl NetGrads {
    pub fn zeros_like(net: &OneHiddenNet) -> Self {
        NetGrads {
            w1: DMatrix::zeros(net.w1.nrows(), net.w1.ncols()),
            b1: DVector::zeros(net.b1.len()),
            w2: DMatrix::zeros(net.w2.nrows(), net.w2.ncols()),
            b2: DVector::zeros(net.b2.len()),
        }
    }

    /// Same layout as [`OneHiddenNet::params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut p = Vec::new();
        p.extend(self.w1.iter());
        p.extend(self.b1.iter());
        p.extend(self.w2.iter());
        p.extend(self.b2.iter());
        p
    }

    pub fn axpy(&mut self, a: f64, other: &NetGrads) {
        self.w1 += &other.w1 * a;
        self.b1 += &other.b1 * a;
        self.w2 += &other.w2 * a;
        self.b2 += &other.b2 * a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scalar_net(w1: f64, w2: f64, output_tanh: bool) -> OneHiddenNet {
        OneHiddenNet::new(
            DMatrix::from_element(1, 1, w1),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, w2),
            DVector::zeros(1),
            output_tanh,
        )
        .unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = OneHiddenNet::zeros(2, 6, 1, true);
        assert_eq!(net.forward(&[0.3, -1.2]).unwrap(), vec![0.0]);
        assert!(net.gradient_x(&[0.3, -1.2]).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn scalar_forward() {
        let net = scalar_net(1.0, 1.0, false);
        let y = net.forward(&[0.5]).unwrap()[0];
        assert!((y - 0.5f64.tanh()).abs() < 1e-15);
        assert!((y - 0.462_117_157_260_009_8).abs() < 1e-12);
    }

    #[test]
    fn scalar_gradient_at_origin_is_one() {
        let net = scalar_net(1.0, 1.0, true);
        assert_eq!(net.gradient_x(&[0.0]).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let net = OneHiddenNet::zeros(2, 3, 1, true);
        assert!(matches!(net.forward(&[1.0]), Err(Error::Dimension(_))));
        assert!(net.gradient_x(&[1.0, 2.0, 3.0]).is_err());
        assert!(OneHiddenNet::new(
            DMatrix::zeros(3, 2),
            DVector::zeros(2),
            DMatrix::zeros(1, 3),
            DVector::zeros(1),
            false
        )
        .is_err());
    }

    #[test]
    fn gradient_x_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let net = OneHiddenNet::init_uniform(3, 8, 2, trial % 2 == 0, &mut rng);
            let x: Vec<f64> = (0..3).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let jac = net.gradient_x(&x).unwrap();
            let h = 1e-5;
            for j in 0..3 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let yp = net.eval(&xp);
                let ym = net.eval(&xm);
                for o in 0..2 {
                    let fd = (yp[o] - ym[o]) / (2.0 * h);
                    let err = (fd - jac[(o, j)]).abs();
                    assert!(err <= 1e-6 * jac[(o, j)].abs().max(1.0), "{err}");
                }
            }
        }
    }

    #[test]
    fn backward_matches_finite_differences_on_2_4_2() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for output_tanh in [false, true] {
            let net = OneHiddenNet::init_uniform(2, 4, 2, output_tanh, &mut rng);
            let x = DMatrix::from_fn(7, 2, |_, _| rng.gen_range(-1.5..1.5));
            let target = DMatrix::from_fn(7, 2, |_, _| rng.gen_range(-1.0..1.0));
            let loss = |n: &OneHiddenNet| {
                let y = n.forward_batch(&x).output;
                (y - &target).map(|v| v * v).sum()
            };
            let fwd = net.forward_batch(&x);
            let g = (&fwd.output - &target) * 2.0;
            let grads = net.backward(&x, &fwd, &g, 0).unwrap().flatten();
            let p0 = net.params();
            let h = 1e-6;
            for k in 0..p0.len() {
                let mut np = net.clone();
                let mut p = p0.clone();
                p[k] += h;
                np.set_params(&p).unwrap();
                let lp = loss(&np);
                p[k] -= 2.0 * h;
                np.set_params(&p).unwrap();
                let lm = loss(&np);
                let fd = (lp - lm) / (2.0 * h);
                assert!(
                    (fd - grads[k]).abs() <= 1e-5 * grads[k].abs().max(1.0),
                    "param {k}: {fd} vs {}",
                    grads[k]
                );
            }
        }
    }

    #[test]
    fn backward_rejects_non_finite() {
        let net = OneHiddenNet::zeros(1, 2, 1, false);
        let x = DMatrix::from_element(1, 1, 0.5);
        let fwd = net.forward_batch(&x);
        let g = DMatrix::from_element(1, 1, f64::NAN);
        match net.backward(&x, &fwd, &g, 17) {
            Err(Error::Training { batch, .. }) => assert_eq!(batch, 17),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn batched_and_pointwise_forward_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = OneHiddenNet::init_uniform(3, 10, 2, false, &mut rng);
        let x = DMatrix::from_fn(5, 3, |_, _| rng.gen_range(-1.0..1.0));
        let y = net.forward_batch(&x).output;
        for r in 0..5 {
            let row: Vec<f64> = x.row(r).iter().copied().collect();
            let p = net.eval(&row);
            for o in 0..2 {
                assert!((p[o] - y[(r, o)]).abs() < 1e-14);
            }
        }
    }
}
