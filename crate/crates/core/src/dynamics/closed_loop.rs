use super::ControlSystem;
use crate::error::{Error, Result};
use crate::network::expr::controller_exprs;
use crate::network::SaturatingController;
use crate::verifier::{ExprGraph, ExprId};

/// An autonomous vector field `ẋ = F(x)` usable both pointwise and as a
/// verifier expression.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn exprs(&self, g: &mut ExprGraph, x: &[ExprId]) -> Vec<ExprId>;
}

/// `ẋ = f(x, κ(x))`. Without a controller the input is held at `u₀`.
#[derive(Clone, Debug)]
pub struct ClosedLoopSystem {
    pub plant: ControlSystem,
    pub controller: Option<SaturatingController>,
}

pub fn close_loop(plant: ControlSystem, controller: Option<SaturatingController>) -> Result<ClosedLoopSystem> {
    if let Some(c) = &controller {
        if c.state_dim() != plant.state_dim || c.input_dim() != plant.input_dim {
            return Err(Error::Dimension(format!(
                "controller maps {} states to {} inputs; {} has {} states and {} inputs",
                c.state_dim(),
                c.input_dim(),
                plant.name,
                plant.state_dim,
                plant.input_dim
            )));
        }
    }
    Ok(ClosedLoopSystem { plant, controller })
}

impl ClosedLoopSystem {
    pub fn input(&self, x: &[f64]) -> Vec<f64> {
        match &self.controller {
            Some(c) => c.eval(x),
            None => self.plant.equilibrium_shift.clone(),
        }
    }

    /// `‖F(0)‖₂`.
    pub fn origin_residual(&self) -> f64 {
        let z = vec![0.0; self.plant.state_dim];
        let u = self.input(&z);
        self.plant
            .rhs_unchecked(&z, &u)
            .iter()
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

impl VectorField for ClosedLoopSystem {
    fn dim(&self) -> usize {
        self.plant.state_dim
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.plant.state_dim {
            return Err(Error::Dimension(format!(
                "closed loop expects {} states, got {}",
                self.plant.state_dim,
                x.len()
            )));
        }
        self.plant.rhs(x, &self.input(x))
    }

    fn exprs(&self, g: &mut ExprGraph, x: &[ExprId]) -> Vec<ExprId> {
        let u = match &self.controller {
            Some(c) => controller_exprs(g, c, x),
            None => self.plant.equilibrium_shift.iter().map(|&u0| g.constant(u0)).collect(),
        };
        self.plant.rhs_exprs(g, x, &u)
    }
}

#[cfg(test)]
mod tests {
    use super::super::{pendulum, unicycle, vanderpol};
    use super::*;

    #[test]
    fn zero_gain_pendulum_rests_at_origin() {
        let ctl = SaturatingController::scalar(20.0, &[0.0, 0.0], 0.0).unwrap();
        let cl = close_loop(pendulum(), Some(ctl)).unwrap();
        assert_eq!(cl.eval(&[0.0, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn published_unicycle_controller_is_near_equilibrium() {
        let ctl = SaturatingController::scalar(5.0, &[-5.95539, -4.03426], 0.19740).unwrap();
        let cl = close_loop(unicycle(), Some(ctl)).unwrap();
        let r = cl.origin_residual();
        assert!(r < 0.05, "{r}");
        // 1 − 5 tanh(0.1974)
        assert!((r - 0.025_69).abs() < 1e-4, "{r}");
    }

    #[test]
    fn solved_bias_gives_exact_equilibrium() {
        let plant = unicycle();
        let c = nalgebra::DVector::from_element(1, 5.0);
        let b = SaturatingController::solve_bias(&c, |u| plant.rhs_unchecked(&[0.0, 0.0], u)).unwrap();
        let ctl =
            SaturatingController::new(c, nalgebra::DMatrix::from_row_slice(1, 2, &[-5.95539, -4.03426]), b).unwrap();
        let cl = close_loop(plant, Some(ctl)).unwrap();
        assert!(cl.origin_residual() < 1e-12);
    }

    #[test]
    fn published_controllers_and_autonomous_loop() {
        let ctl = SaturatingController::scalar(20.0, &[-23.28632, -5.27055], 0.0).unwrap();
        assert!(close_loop(pendulum(), Some(ctl)).unwrap().origin_residual() < 1e-12);
        assert!(close_loop(vanderpol(), None).unwrap().origin_residual() < 1e-12);
    }

    #[test]
    fn wrong_dimensions_rejected() {
        let ctl = SaturatingController::scalar(20.0, &[1.0, 2.0, 3.0], 0.0).unwrap();
        assert!(close_loop(pendulum(), Some(ctl.clone())).is_err());
        let ctl2 = SaturatingController::scalar(20.0, &[1.0, 2.0], 0.0).unwrap();
        assert!(close_loop(vanderpol(), Some(ctl2)).is_err());
    }

    #[test]
    fn expression_matches_eval() {
        let ctl = SaturatingController::scalar(5.0, &[-5.95539, -4.03426], 0.19740).unwrap();
        let cl = close_loop(unicycle(), Some(ctl)).unwrap();
        let mut g = ExprGraph::new(2);
        let x = g.vars();
        let f = cl.exprs(&mut g, &x);
        let p = [0.3, -0.4];
        let vals = g.eval_point(&p);
        let r = cl.eval(&p).unwrap();
        assert!((vals[f[1].index()] - r[1]).abs() < 1e-12);
    }
}
