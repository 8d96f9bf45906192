use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// `u = C·tanh(k x + b)` with diagonal `C`. Only `k` is trained.
#[derive(Clone, Debug, PartialEq)]
pub struct SaturatingController {
    /// Diagonal of `C`.
    pub c: DVector<f64>,
    /// m × n
    pub k: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl SaturatingController {
    pub fn new(c: DVector<f64>, k: DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        if c.len() != k.nrows() || b.len() != k.nrows() {
            return Err(Error::Dimension(format!(
                "controller: C {}, k {}x{}, b {}",
                c.len(),
                k.nrows(),
                k.ncols(),
                b.len()
            )));
        }
        if c.iter().any(|v| *v <= 0.0) {
            return Err(Error::Config("saturation bounds must be positive".into()));
        }
        if !c.iter().chain(k.iter()).chain(b.iter()).all(|v| v.is_finite()) {
            return Err(Error::NonFinite("controller parameters".into()));
        }
        Ok(SaturatingController { c, k, b })
    }

    /// Single-input convenience constructor.
    pub fn scalar(c: f64, k: &[f64], b: f64) -> Result<Self> {
        Self::new(
            DVector::from_element(1, c),
            DMatrix::from_row_slice(1, k.len(), k),
            DVector::from_element(1, b),
        )
    }

    pub fn state_dim(&self) -> usize {
        self.k.ncols()
    }

    pub fn input_dim(&self) -> usize {
        self.k.nrows()
    }

    /// Pre-activations `k x + b`.
    pub fn preactivation(&self, x: &[f64]) -> Vec<f64> {
        (0..self.input_dim())
            .map(|l| {
                let mut z = self.b[l];
                for (j, xj) in x.iter().enumerate() {
                    z += self.k[(l, j)] * xj;
                }
                z
            })
            .collect()
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.preactivation(x)
            .iter()
            .enumerate()
            .map(|(l, z)| self.c[l] * z.tanh())
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.state_dim() {
            return Err(Error::Dimension(format!(
                "controller expects {} states, got {}",
                self.state_dim(),
                x.len()
            )));
        }
        Ok(self.eval(x))
    }

    /// `∂u/∂x` (m × n).
    pub fn jacobian(&self, x: &[f64]) -> DMatrix<f64> {
        let z = self.preactivation(x);
        DMatrix::from_fn(self.input_dim(), self.state_dim(), |l, j| {
            let t = z[l].tanh();
            self.c[l] * (1.0 - t * t) * self.k[(l, j)]
        })
    }

    /// Per-channel bounds `[−C_l, C_l]`.
    pub fn input_bounds(&self) -> Vec<(f64, f64)> {
        self.c.iter().map(|&c| (-c, c)).collect()
    }

    /// Solves `b` so that `f(0, C tanh(b)) = 0` and returns it.
    ///
    /// `rhs0(u)` is the plant at the origin. Channel `l` is matched to the
    /// state component most sensitive to `u_l` and bisected on that
    /// component's sign, holding the other channels at their current value.
    pub fn solve_bias<F>(c: &DVector<f64>, rhs0: F) -> Result<DVector<f64>>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let m = c.len();
        let mut u = vec![0.0; m];
        for l in 0..m {
            let mut up = u.clone();
            up[l] = 1e-3 * c[l];
            let f_hi = rhs0(&up);
            let f_lo = rhs0(&u);
            let (row, _) = f_hi
                .iter()
                .zip(&f_lo)
                .map(|(a, b)| (a - b).abs())
                .enumerate()
                .fold((0, 0.0), |best, (i, d)| if d > best.1 { (i, d) } else { best });
            let residual = |v: f64, u: &mut Vec<f64>| {
                u[l] = v;
                rhs0(u)[row]
            };
            // Bisect in u-space, strictly inside the saturation range.
            let lim = c[l] * (1.0 - 1e-12);
            let mut lo = -lim;
            let mut hi = lim;
            let r_lo = residual(lo, &mut u);
            let r_hi = residual(hi, &mut u);
            if r_lo == 0.0 {
                hi = lo;
            } else if r_hi == 0.0 {
                lo = hi;
            } else if r_lo.signum() == r_hi.signum() {
                return Err(Error::Config(format!(
                    "no equilibrium input for channel {l} inside the saturation bound {}",
                    c[l]
                )));
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if mid == lo || mid == hi {
                    break;
                }
                let r = residual(mid, &mut u);
                if r == 0.0 {
                    lo = mid;
                    hi = mid;
                    break;
                }
                if r.signum() == r_lo.signum() {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            u[l] = 0.5 * (lo + hi);
        }
        Ok(DVector::from_iterator(
            m,
            u.iter().zip(c.iter()).map(|(ui, ci)| (ui / ci).atanh()),
        ))
    }

    /// Gain initialisation from a linear feedback `u ≈ −K x`:
    /// `k = −diag(1/(C sech²(b))) K`, the first-order match at the origin.
    pub fn from_linear_gain(c: DVector<f64>, gain: &DMatrix<f64>, b: DVector<f64>) -> Result<Self> {
        let k = DMatrix::from_fn(gain.nrows(), gain.ncols(), |l, j| {
            let t = b[l].tanh();
            -gain[(l, j)] / (c[l] * (1.0 - t * t))
        });
        Self::new(c, k, b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn bias_matches_feedforward() {
        // f(0, u) = (0, u - 1): needs C tanh(b) = 1.
        let c = DVector::from_element(1, 5.0);
        let b = SaturatingController::solve_bias(&c, |u| vec![0.0, u[0] - 1.0]).unwrap();
        assert!((5.0 * b[0].tanh() - 1.0).abs() < 1e-12);
        assert!((b[0] - 0.2f64.atanh()).abs() < 1e-12);
    }

    #[test]
    fn bias_zero_for_symmetric_plant() {
        let c = DVector::from_element(1, 20.0);
        let b = SaturatingController::solve_bias(&c, |u| vec![0.0, u[0] / 0.0375]).unwrap();
        assert!(b[0].abs() < 1e-12);
    }

    #[test]
    fn unreachable_equilibrium_is_an_error() {
        let c = DVector::from_element(1, 0.5);
        assert!(SaturatingController::solve_bias(&c, |u| vec![u[0] - 1.0]).is_err());
    }

    #[test]
    fn linear_gain_matches_at_origin() {
        let gain = DMatrix::from_row_slice(1, 2, &[3.0, -1.5]);
        let ctl =
            SaturatingController::from_linear_gain(DVector::from_element(1, 5.0), &gain, DVector::from_element(1, 0.3))
                .unwrap();
        let j = ctl.jacobian(&[0.0, 0.0]);
        assert!((j[(0, 0)] + 3.0).abs() < 1e-12);
        assert!((j[(0, 1)] - 1.5).abs() < 1e-12);
    }

    #[test]
    fn dimension_errors() {
        let ctl = SaturatingController::scalar(5.0, &[1.0, 2.0], 0.0).unwrap();
        assert!(ctl.forward(&[1.0]).is_err());
        assert!(
            SaturatingController::new(DVector::from_element(2, 1.0), DMatrix::zeros(1, 2), DVector::zeros(1)).is_err()
        );
    }

    proptest! {
        #[test]
        fn output_within_saturation(
            c in 0.1f64..50.0,
            k1 in -100.0f64..100.0,
            k2 in -100.0f64..100.0,
            b in -3.0f64..3.0,
            x1 in -10.0f64..10.0,
            x2 in -10.0f64..10.0,
        ) {
            let ctl = SaturatingController::scalar(c, &[k1, k2], b).unwrap();
            let u = ctl.eval(&[x1, x2])[0];
            prop_assert!(u.abs() <= c);
        }

        #[test]
        fn jacobian_matches_differences(
            k1 in -5.0f64..5.0, k2 in -5.0f64..5.0, x1 in -1.0f64..1.0, x2 in -1.0f64..1.0,
        ) {
            let ctl = SaturatingController::scalar(3.0, &[k1, k2], 0.1).unwrap();
            let j = ctl.jacobian(&[x1, x2]);
            let h = 1e-6;
            let fd = (ctl.eval(&[x1 + h, x2])[0] - ctl.eval(&[x1 - h, x2])[0]) / (2.0 * h);
            prop_assert!((fd - j[(0, 0)]).abs() <= 1e-6 * j[(0, 0)].abs().max(1.0));
        }
    }
}
