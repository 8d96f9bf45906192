//! Linearisation, continuous-time LQR and the quadratic comparison ROA.

mod care;
mod roa;

pub use care::{lyapunov_equation, solve_care, LqrSolution};
pub use roa::{lqr_roa, LqrRoa, LqrRoaConfig};

use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use nalgebra::DMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Linearization {
    pub a: DMatrix<f64>,
    /// n × m; zero columns for autonomous systems.
    pub b: DMatrix<f64>,
}

const FD_STEP: f64 = 1e-6;

/// Central differences of `f` at `(0, u₀)`.
pub fn linearize(sys: &ControlSystem) -> Result<Linearization> {
    let n = sys.state_dim;
    let m = sys.input_dim;
    let x0 = vec![0.0; n];
    let u0 = sys.equilibrium_shift.clone();
    let mut a = DMatrix::zeros(n, n);
    let mut b = DMatrix::zeros(n, m);
    for j in 0..n {
        let mut xp = x0.clone();
        let mut xm = x0.clone();
        xp[j] += FD_STEP;
        xm[j] -= FD_STEP;
        let fp = sys.rhs(&xp, &u0)?;
        let fm = sys.rhs(&xm, &u0)?;
        for i in 0..n {
            a[(i, j)] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
        }
    }
    for l in 0..m {
        let mut up = u0.clone();
        let mut um = u0.clone();
        up[l] += FD_STEP;
        um[l] -= FD_STEP;
        let fp = sys.rhs(&x0, &up)?;
        let fm = sys.rhs(&x0, &um)?;
        for i in 0..n {
            b[(i, l)] = (fp[i] - fm[i]) / (2.0 * FD_STEP);
        }
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("linearization of {}", sys.name)));
    }
    Ok(Linearization { a, b })
}
