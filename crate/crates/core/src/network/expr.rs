//! Networks and controllers as verifier expressions.

use super::{OneHiddenNet, SaturatingController};
use crate::verifier::{ExprGraph, ExprId};

/// Expression nodes of a Lyapunov candidate and its input gradient.
#[derive(Clone, Debug)]
pub struct LyapunovExprs {
    pub v: ExprId,
    pub grad: Vec<ExprId>,
    /// `tanh(W₁x + B₁)`
    pub hidden: Vec<ExprId>,
    /// `1 − h_i²`
    pub hidden_slope: Vec<ExprId>,
    /// `1 − V²`
    pub outer_slope: ExprId,
}

fn hidden_layer(g: &mut ExprGraph, net: &OneHiddenNet, x: &[ExprId]) -> Vec<ExprId> {
    (0..net.hidden_dim())
        .map(|i| {
            let w: Vec<f64> = net.w1.row(i).iter().copied().collect();
            let a = g.affine(&w, x, net.b1[i]);
            g.tanh(a)
        })
        .collect()
}

/// Output nodes of `net` applied to the expressions `x`.
pub fn net_exprs(g: &mut ExprGraph, net: &OneHiddenNet, x: &[ExprId]) -> Vec<ExprId> {
    assert_eq!(x.len(), net.input_dim());
    let h = hidden_layer(g, net, x);
    (0..net.output_dim())
        .map(|o| {
            let w: Vec<f64> = net.w2.row(o).iter().copied().collect();
            let z = g.affine(&w, &h, net.b2[o]);
            if net.output_tanh {
                g.tanh(z)
            } else {
                z
            }
        })
        .collect()
}

/// `V` and `∂V/∂x` for a scalar-output net with output tanh.
pub fn lyapunov_exprs(g: &mut ExprGraph, net: &OneHiddenNet, x: &[ExprId]) -> LyapunovExprs {
    assert_eq!(net.output_dim(), 1, "Lyapunov nets are scalar");
    assert!(net.output_tanh, "Lyapunov nets end in tanh");
    let h = hidden_layer(g, net, x);
    let w2: Vec<f64> = net.w2.row(0).iter().copied().collect();
    let z = g.affine(&w2, &h, net.b2[0]);
    let v = g.tanh(z);
    let one = g.constant(1.0);
    let slope: Vec<ExprId> = h
        .iter()
        .map(|&hi| {
            let s = g.sqr(hi);
            g.sub(one, s)
        })
        .collect();
    let v2 = g.sqr(v);
    let outer = g.sub(one, v2);
    let grad = (0..net.input_dim())
        .map(|j| {
            let c: Vec<f64> = (0..net.hidden_dim()).map(|i| net.w2[(0, i)] * net.w1[(i, j)]).collect();
            let inner = g.affine(&c, &slope, 0.0);
            g.mul(outer, inner)
        })
        .collect();
    LyapunovExprs {
        v,
        grad,
        hidden: h,
        hidden_slope: slope,
        outer_slope: outer,
    }
}

impl LyapunovExprs {
    /// `∇V·f` written as `(1 − V²) Σ_i (1 − h_i²) W₂_i (W₁_i·f)`, which keeps
    /// each hidden unit's projection of `f` as one affine node.
    pub fn lie(&self, g: &mut ExprGraph, net: &OneHiddenNet, f: &[ExprId]) -> ExprId {
        assert_eq!(f.len(), net.input_dim());
        let terms: Vec<(ExprId, ExprId)> = (0..net.hidden_dim())
            .map(|i| {
                let c: Vec<f64> = net.w1.row(i).iter().map(|w| w * net.w2[(0, i)]).collect();
                let s = g.affine(&c, f, 0.0);
                (self.hidden_slope[i], s)
            })
            .collect();
        let q = g.dot(terms);
        g.mul(self.outer_slope, q)
    }

    /// `‖∂V/∂x‖₂²`.
    pub fn grad_norm_sq(&self, g: &mut ExprGraph) -> ExprId {
        let sq: Vec<ExprId> = self.grad.iter().map(|&d| g.sqr(d)).collect();
        let one = g.constant(1.0);
        g.dot(sq.into_iter().map(|s| (one, s)).collect())
    }
}

/// `C_l tanh(k_l·x + b_l)` for every input channel.
pub fn controller_exprs(g: &mut ExprGraph, ctl: &SaturatingController, x: &[ExprId]) -> Vec<ExprId> {
    assert_eq!(x.len(), ctl.state_dim());
    (0..ctl.input_dim())
        .map(|l| {
            let k: Vec<f64> = ctl.k.row(l).iter().copied().collect();
            let z = g.affine(&k, x, ctl.b[l]);
            let t = g.tanh(z);
            g.scale(ctl.c[l], t)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verifier::{Interval, IntervalBox};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn expressions_match_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10 {
            let v = OneHiddenNet::init_uniform(2, 6, 1, true, &mut rng);
            let phi = OneHiddenNet::init_uniform(3, 12, 2, false, &mut rng);
            let ctl = SaturatingController::scalar(2.0, &[rng.gen_range(-3.0..3.0), 0.7], 0.1).unwrap();
            let mut g = ExprGraph::new(2);
            let x = g.vars();
            let u = controller_exprs(&mut g, &ctl, &x);
            let inp = vec![x[0], x[1], u[0]];
            let f = net_exprs(&mut g, &phi, &inp);
            let ly = lyapunov_exprs(&mut g, &v, &x);
            let lie = ly.lie(&mut g, &v, &f);
            let gn = ly.grad_norm_sq(&mut g);
            for _ in 0..20 {
                let p = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
                let vals = g.eval_point(&p);
                let uu = ctl.eval(&p);
                let ff = phi.eval(&[p[0], p[1], uu[0]]);
                let (vv, jac) = v.eval_with_jacobian(&p);
                let lie_ref = jac[(0, 0)] * ff[0] + jac[(0, 1)] * ff[1];
                assert!((vals[ly.v.index()] - vv[0]).abs() < 1e-14);
                assert!((vals[u[0].index()] - uu[0]).abs() < 1e-14);
                assert!((vals[lie.index()] - lie_ref).abs() < 1e-12);
                let gn_ref = jac[(0, 0)].powi(2) + jac[(0, 1)].powi(2);
                assert!((vals[gn.index()] - gn_ref).abs() < 1e-12);
            }
            let b = IntervalBox::new(vec![Interval::new(-0.3, 0.1), Interval::new(0.5, 0.6)]);
            let enc = g.eval_interval(&b);
            for _ in 0..50 {
                let p = [rng.gen_range(-0.3..0.1), rng.gen_range(0.5..0.6)];
                let vals = g.eval_point(&p);
                assert!(enc[lie.index()].contains(vals[lie.index()]));
                assert!(enc[ly.v.index()].contains(vals[ly.v.index()]));
            }
        }
    }
}
