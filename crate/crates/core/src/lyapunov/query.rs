use crate::dynamics::VectorField;
use crate::error::{Error, Result};
use crate::network::expr::{controller_exprs, lyapunov_exprs, net_exprs};
use crate::network::{OneHiddenNet, SaturatingController};
use crate::verifier::{ExprGraph, LyapunovQuery, Region};

/// The learned closed loop `ẋ = φ(x, κ(x))`; without a controller the
/// input is held at `u₀`.
#[derive(Clone, Debug)]
pub struct LearnedLoop {
    pub model: OneHiddenNet,
    pub controller: Option<SaturatingController>,
    pub u0: Vec<f64>,
}

impl LearnedLoop {
    pub fn new(model: OneHiddenNet, controller: Option<SaturatingController>, u0: Vec<f64>) -> Result<Self> {
        let m = controller.as_ref().map_or(u0.len(), |c| c.input_dim());
        let n = model.output_dim();
        if model.input_dim() != n + m {
            return Err(Error::Dimension(format!(
                "model takes {} inputs but {n} states and {m} controls were given",
                model.input_dim()
            )));
        }
        if let Some(c) = &controller {
            if c.state_dim() != n {
                return Err(Error::Dimension("controller state dimension".into()));
            }
        }
        Ok(LearnedLoop { model, controller, u0 })
    }

    fn input(&self, x: &[f64]) -> Vec<f64> {
        match &self.controller {
            Some(c) => c.eval(x),
            None => self.u0.clone(),
        }
    }
}

impl VectorField for LearnedLoop {
    fn dim(&self) -> usize {
        self.model.output_dim()
    }

    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::Dimension(format!(
                "learned loop expects {} states, got {}",
                self.dim(),
                x.len()
            )));
        }
        let mut z = x.to_vec();
        z.extend(self.input(x));
        Ok(self.model.eval(&z))
    }

    fn exprs(&self, g: &mut crate::verifier::ExprGraph, x: &[crate::verifier::ExprId]) -> Vec<crate::verifier::ExprId> {
        let mut z = x.to_vec();
        match &self.controller {
            Some(c) => z.extend(controller_exprs(g, c, x)),
            None => z.extend(self.u0.iter().map(|&u| g.constant(u))),
        }
        net_exprs(g, &self.model, &z)
    }
}

/// The falsification problem for `V` along `field` on `domain ∖ B_ε`.
pub fn lyapunov_query(
    v: &OneHiddenNet,
    field: &dyn VectorField,
    domain: &Region,
    eps: f64,
    beta: f64,
) -> Result<LyapunovQuery> {
    if v.input_dim() != field.dim() || domain.dim() != field.dim() {
        return Err(Error::Dimension(format!(
            "V on {} states, field on {}, domain on {}",
            v.input_dim(),
            field.dim(),
            domain.dim()
        )));
    }
    let mut g = ExprGraph::new(field.dim());
    let x = g.vars();
    let f = field.exprs(&mut g, &x);
    let ly = lyapunov_exprs(&mut g, v, &x);
    let lie = ly.lie(&mut g, v, &f);
    Ok(LyapunovQuery {
        graph: g,
        v: ly.v,
        lie,
        domain: domain.clone(),
        eps,
        beta,
    })
}
