//! Benchmark plants, closed loops, simulation and training data.

mod closed_loop;
mod lipschitz;
mod sampling;
mod simulate;

pub use closed_loop::{close_loop, ClosedLoopSystem, VectorField};
pub use lipschitz::{empirical_lipschitz, jacobian_norm_bound, JacobianBound};
pub use sampling::{sample_data, sample_data_on, sample_grid, SampleSet};
pub use simulate::{integrate, rk4_step, simulate, Trajectory};

use crate::error::{Error, Result};
use crate::verifier::{ExprGraph, ExprId, IntervalBox, Region};
use nalgebra::DMatrix;

/// Distance error at which the unicycle model is treated as singular.
pub const UNICYCLE_SINGULAR_DE: f64 = 0.95;

/// The right-hand side `f(x, u)` of a plant.
#[derive(Clone, Debug, PartialEq)]
pub enum Plant {
    /// `ẋ₁ = −x₂`, `ẋ₂ = x₁ + (x₁² − 1)x₂` (time-reversed oscillator).
    VanDerPol,
    /// Path-following error dynamics on a path of constant curvature.
    Unicycle { speed: f64, curvature: f64 },
    /// `θ̈ = (m g ℓ sin θ + u − friction·θ̇) / (m ℓ²)`.
    Pendulum {
        gravity: f64,
        mass: f64,
        length: f64,
        friction: f64,
    },
    /// `ẋ = A x + B u`.
    Linear { a: DMatrix<f64>, b: DMatrix<f64> },
}

#[derive(Clone, Debug)]
pub struct ControlSystem {
    pub name: String,
    pub plant: Plant,
    pub state_dim: usize,
    pub input_dim: usize,
    /// Valid region `D`.
    pub domain: Region,
    /// Per-channel input bounds `U`.
    pub input_box: Vec<(f64, f64)>,
    /// Lipschitz constant `K_f` of `f` over `D × U`.
    pub jacobian_bound: f64,
    /// `u₀` with `f(0, u₀) = 0`.
    pub equilibrium_shift: Vec<f64>,
}

pub fn vanderpol() -> ControlSystem {
    ControlSystem {
        name: "vanderpol".into(),
        plant: Plant::VanDerPol,
        state_dim: 2,
        input_dim: 0,
        domain: Region::ball(2, 1.2),
        input_box: vec![],
        jacobian_bound: 3.4599,
        equilibrium_shift: vec![],
    }
}

/// Unicycle following the unit circle at speed `v = 1`.
pub fn unicycle() -> ControlSystem {
    unicycle_with_speed(1.0)
}

pub fn unicycle_with_speed(speed: f64) -> ControlSystem {
    let curvature = 1.0;
    ControlSystem {
        name: "unicycle".into(),
        plant: Plant::Unicycle { speed, curvature },
        state_dim: 2,
        input_dim: 1,
        domain: Region::ball(2, 0.8),
        input_box: vec![(-5.0, 5.0)],
        jacobian_bound: 45.0,
        equilibrium_shift: vec![speed * curvature],
    }
}

pub fn pendulum() -> ControlSystem {
    ControlSystem {
        name: "pendulum".into(),
        plant: Plant::Pendulum {
            gravity: 9.81,
            mass: 0.15,
            length: 0.5,
            friction: 0.1,
        },
        state_dim: 2,
        input_dim: 1,
        domain: Region::ball(2, 4.0),
        input_box: vec![(-20.0, 20.0)],
        jacobian_bound: 33.214,
        equilibrium_shift: vec![0.0],
    }
}

/// `ẋ = A x + B u` on the cube `[−r, r]^n` with inputs in `[−u_max, u_max]`.
/// `K_f` is the exact `‖[A B]‖₂`.
pub fn linear(a: DMatrix<f64>, b: DMatrix<f64>, r: f64, u_max: f64) -> Result<ControlSystem> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::Dimension(format!(
            "A {}x{}, B {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let m = b.ncols();
    let ab = DMatrix::from_fn(n, n + m, |i, j| if j < n { a[(i, j)] } else { b[(i, j - n)] });
    let k = crate::network::spectral_norm(&ab);
    Ok(ControlSystem {
        name: "linear".into(),
        plant: Plant::Linear { a, b },
        state_dim: n,
        input_dim: m,
        domain: Region::boxed(IntervalBox::cube(n, r)),
        input_box: vec![(-u_max, u_max); m],
        jacobian_bound: k,
        equilibrium_shift: vec![0.0; m],
    })
}

pub fn by_name(name: &str) -> Result<ControlSystem> {
    match name {
        "vanderpol" => Ok(vanderpol()),
        "unicycle" => Ok(unicycle()),
        "pendulum" => Ok(pendulum()),
        other => Err(Error::Config(format!(
            "unknown system `{other}` (expected vanderpol, unicycle or pendulum)"
        ))),
    }
}

pub const SYSTEM_NAMES: [&str; 3] = ["vanderpol", "unicycle", "pendulum"];

impl ControlSystem {
    fn check(&self, x: &[f64], u: &[f64]) -> Result<()> {
        if x.len() != self.state_dim || u.len() != self.input_dim {
            return Err(Error::Dimension(format!(
                "{} expects {} states and {} inputs, got {} and {}",
                self.name,
                self.state_dim,
                self.input_dim,
                x.len(),
                u.len()
            )));
        }
        Ok(())
    }

    /// `f(x, u)`.
    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check(x, u)?;
        if let Plant::Unicycle { curvature, .. } = self.plant {
            if (x[0] * curvature).abs() > UNICYCLE_SINGULAR_DE {
                return Err(Error::Singularity(format!(
                    "unicycle evaluated at d_e = {} (|d_e κ| > {UNICYCLE_SINGULAR_DE})",
                    x[0]
                )));
            }
        }
        let f = self.rhs_unchecked(x, u);
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("{} rhs at {x:?}", self.name)));
        }
        Ok(f)
    }

    /// `f(x, u)` without dimension or singularity checks.
    pub fn rhs_unchecked(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        match &self.plant {
            Plant::VanDerPol => vec![-x[1], x[0] + (x[0] * x[0] - 1.0) * x[1]],
            Plant::Unicycle { speed, curvature } => vec![
                speed * x[1].sin(),
                u[0] - speed * curvature * x[1].cos() / (1.0 - x[0] * curvature),
            ],
            Plant::Pendulum {
                gravity,
                mass,
                length,
                friction,
            } => {
                let inertia = mass * length * length;
                vec![
                    x[1],
                    (mass * gravity * length * x[0].sin() + u[0] - friction * x[1]) / inertia,
                ]
            }
            Plant::Linear { a, b } => (0..self.state_dim)
                .map(|i| {
                    let mut s = 0.0;
                    for j in 0..self.state_dim {
                        s += a[(i, j)] * x[j];
                    }
                    for l in 0..self.input_dim {
                        s += b[(i, l)] * u[l];
                    }
                    s
                })
                .collect(),
        }
    }

    /// `f` as expressions over `x` and `u`.
    pub fn rhs_exprs(&self, g: &mut ExprGraph, x: &[ExprId], u: &[ExprId]) -> Vec<ExprId> {
        assert_eq!(x.len(), self.state_dim);
        assert_eq!(u.len(), self.input_dim);
        match &self.plant {
            Plant::VanDerPol => {
                let f1 = g.neg(x[1]);
                let x1sq = g.sqr(x[0]);
                let c = g.add_const(x1sq, -1.0);
                let cx2 = g.mul(c, x[1]);
                let f2 = g.add(x[0], cx2);
                vec![f1, f2]
            }
            Plant::Unicycle { speed, curvature } => {
                let s = g.sin(x[1]);
                let f1 = g.scale(*speed, s);
                let c = g.cos(x[1]);
                let one = g.constant(1.0);
                let dk = g.scale(*curvature, x[0]);
                let den = g.sub(one, dk);
                let q = g.div(c, den);
                let drift = g.scale(speed * curvature, q);
                let f2 = g.sub(u[0], drift);
                vec![f1, f2]
            }
            Plant::Pendulum {
                gravity,
                mass,
                length,
                friction,
            } => {
                let inertia = mass * length * length;
                let s = g.sin(x[0]);
                let terms = [
                    (mass * gravity * length / inertia, s),
                    (1.0 / inertia, u[0]),
                    (-friction / inertia, x[1]),
                ];
                let coeffs: Vec<f64> = terms.iter().map(|t| t.0).collect();
                let ids: Vec<ExprId> = terms.iter().map(|t| t.1).collect();
                let f2 = g.affine(&coeffs, &ids, 0.0);
                vec![x[1], f2]
            }
            Plant::Linear { a, b } => (0..self.state_dim)
                .map(|i| {
                    let mut coeffs: Vec<f64> = a.row(i).iter().copied().collect();
                    coeffs.extend(b.row(i).iter());
                    let mut ids = x.to_vec();
                    ids.extend_from_slice(u);
                    g.affine(&coeffs, &ids, 0.0)
                })
                .collect(),
        }
    }

    /// Bounding box of `D × U`, states first.
    pub fn state_input_bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = self.domain.bounds.lo();
        let mut hi = self.domain.bounds.hi();
        for &(a, b) in &self.input_box {
            lo.push(a);
            hi.push(b);
        }
        (lo, hi)
    }

    /// Largest absolute coordinate of the domain box.
    pub fn domain_extent(&self) -> f64 {
        self.domain
            .bounds
            .0
            .iter()
            .map(|i| i.lo.abs().max(i.hi.abs()))
            .fold(0.0, f64::max)
    }
}
