use crate::dynamics::VectorField;
use crate::error::{Error, Result};
use crate::network::{OneHiddenNet, SaturatingController};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Weights of the Lyapunov risk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LyapRiskConfig {
    /// Positivity hinge `max(−V, 0)`.
    pub c1: f64,
    /// Decrease hinge `max(0, ∇_φV + β)`.
    pub c2: f64,
    /// `V(0)²`.
    pub c3: f64,
    /// Batch maximum of `‖∂V/∂x‖₂`.
    pub c4: f64,
    /// Adds `mean(‖x‖₂ − a·V(x))` to push level sets outward.
    pub roa_term: bool,
    pub roa_weight: f64,
    /// Fresh uniform points per epoch.
    pub batch: usize,
    /// Decrease margin; set by the learner each round, never read from files.
    #[serde(skip)]
    pub beta: f64,
}

impl Default for LyapRiskConfig {
    fn default() -> Self {
        LyapRiskConfig {
            c1: 1.0,
            c2: 1.0,
            c3: 1.0,
            c4: 0.01,
            roa_term: false,
            roa_weight: 0.1,
            batch: 500,
            beta: 0.0,
        }
    }
}

impl LyapRiskConfig {
    pub fn validate(&self) -> Result<()> {
        if [self.c1, self.c2, self.c3, self.c4, self.roa_weight]
            .iter()
            .any(|c| !(*c >= 0.0))
        {
            return Err(Error::Config("risk weights must be non-negative".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("risk batch must be positive".into()));
        }
        Ok(())
    }
}

/// The learned dynamics seen by the risk: `φ(x, u)` with optional feedback.
pub struct RiskDynamics<'a> {
    pub model: &'a OneHiddenNet,
    pub controller: Option<&'a SaturatingController>,
    /// Input used when there is no controller.
    pub u0: &'a [f64],
}

#[derive(Clone, Debug)]
pub struct RiskEval {
    pub value: f64,
    /// Same layout as [`OneHiddenNet::params`].
    pub grad_v: Vec<f64>,
    /// m × n, zero-sized without a controller.
    pub grad_k: DMatrix<f64>,
    /// Largest `‖∂V/∂x‖₂` on the batch.
    pub max_grad_norm: f64,
    /// Number of batch points violating a condition.
    pub violations: usize,
}

/// Forward state of a scalar tanh-output network at one point.
struct VPoint {
    h: Vec<f64>,
    d: Vec<f64>,
    v: f64,
}

fn v_point(net: &OneHiddenNet, x: &[f64]) -> VPoint {
    let hn = net.hidden_dim();
    let mut h = Vec::with_capacity(hn);
    for i in 0..hn {
        let mut a = net.b1[i];
        for (j, xj) in x.iter().enumerate() {
            a += net.w1[(i, j)] * xj;
        }
        h.push(a.tanh());
    }
    let d: Vec<f64> = h.iter().map(|t| 1.0 - t * t).collect();
    let mut z = net.b2[0];
    for i in 0..hn {
        z += net.w2[(0, i)] * h[i];
    }
    VPoint { h, d, v: z.tanh() }
}

fn layout(net: &OneHiddenNet) -> (usize, usize, usize, usize) {
    let hn = net.hidden_dim();
    let n = net.input_dim();
    let w1 = 0;
    let b1 = hn * n;
    let w2 = b1 + hn;
    let b2 = w2 + hn;
    (w1, b1, w2, b2)
}

/// Adds `s · ∂V/∂θ` at `x` to `grad`.
fn add_v_grad(net: &OneHiddenNet, x: &[f64], p: &VPoint, s: f64, grad: &mut [f64]) {
    let hn = net.hidden_dim();
    let (ow1, ob1, ow2, ob2) = layout(net);
    let dz = s * (1.0 - p.v * p.v);
    grad[ob2] += dz;
    for i in 0..hn {
        grad[ow2 + i] += dz * p.h[i];
        let db = dz * net.w2[(0, i)] * p.d[i];
        grad[ob1 + i] += db;
        for (j, xj) in x.iter().enumerate() {
            grad[ow1 + i + hn * j] += db * xj;
        }
    }
}

/// `∂V/∂x · w` at `x`, and adds `s` times its parameter gradient (with `w`
/// held fixed) to `grad`.
fn directional(net: &OneHiddenNet, x: &[f64], p: &VPoint, w: &[f64], s: f64, grad: Option<&mut [f64]>) -> f64 {
    let hn = net.hidden_dim();
    let proj: Vec<f64> = (0..hn)
        .map(|i| w.iter().enumerate().map(|(j, wj)| net.w1[(i, j)] * wj).sum())
        .collect();
    let q: f64 = (0..hn).map(|i| net.w2[(0, i)] * p.d[i] * proj[i]).sum();
    let outer = 1.0 - p.v * p.v;
    let val = outer * q;
    if let Some(grad) = grad {
        let (ow1, ob1, ow2, ob2) = layout(net);
        // ∂(1 − V²)/∂z = −2V(1 − V²)
        let dz = -2.0 * p.v * outer * q * s;
        grad[ob2] += dz;
        for i in 0..hn {
            let w2 = net.w2[(0, i)];
            grad[ow2 + i] += dz * p.h[i] + s * outer * p.d[i] * proj[i];
            // through z: W2_i d_i; through d_i = 1 − h_i²: −2 h_i d_i
            let db = dz * w2 * p.d[i] - s * outer * w2 * 2.0 * p.h[i] * p.d[i] * proj[i];
            grad[ob1 + i] += db;
            for (j, xj) in x.iter().enumerate() {
                grad[ow1 + i + hn * j] += db * xj + s * outer * w2 * p.d[i] * w[j];
            }
        }
    }
    val
}

/// `∂V/∂x` at `x`.
pub fn v_gradient(net: &OneHiddenNet, x: &[f64]) -> Vec<f64> {
    let p = v_point(net, x);
    let n = net.input_dim();
    let outer = 1.0 - p.v * p.v;
    (0..n)
        .map(|j| {
            outer
                * (0..net.hidden_dim())
                    .map(|i| net.w2[(0, i)] * p.d[i] * net.w1[(i, j)])
                    .sum::<f64>()
        })
        .collect()
}

/// `∇V · F(x)` for any scalar network.
pub fn lie_derivative(v: &OneHiddenNet, field: &dyn VectorField, x: &[f64]) -> Result<f64> {
    if v.output_dim() != 1 {
        return Err(Error::Dimension("V must be scalar".into()));
    }
    let g = v.gradient_x(x)?;
    let f = field.eval(x)?;
    Ok(g.iter().zip(&f).map(|(a, b)| a * b).sum())
}

/// The Lyapunov risk on `batch` and its exact gradients with respect to
/// the parameters of `V` and the controller gain `k`.
pub fn lyapunov_risk(
    v: &OneHiddenNet,
    dynamics: &RiskDynamics<'_>,
    batch: &[Vec<f64>],
    cfg: &LyapRiskConfig,
) -> Result<RiskEval> {
    if batch.is_empty() {
        return Err(Error::Config("empty risk batch".into()));
    }
    if v.output_dim() != 1 || !v.output_tanh {
        return Err(Error::Dimension("Lyapunov candidates are scalar tanh nets".into()));
    }
    let n = v.input_dim();
    let m = dynamics.controller.map_or(dynamics.u0.len(), |c| c.input_dim());
    if dynamics.model.input_dim() != n + m || dynamics.model.output_dim() != n {
        return Err(Error::Dimension("learned dynamics shape".into()));
    }
    let inv_n = 1.0 / batch.len() as f64;
    let mut value = 0.0;
    let mut grad = vec![0.0; v.param_count()];
    let mut grad_k = match dynamics.controller {
        Some(c) => DMatrix::zeros(c.input_dim(), c.state_dim()),
        None => DMatrix::zeros(0, 0),
    };
    let mut best_norm = -1.0;
    let mut best_idx = 0;
    let mut violations = 0;
    for (idx, x) in batch.iter().enumerate() {
        if x.len() != n {
            return Err(Error::Dimension(format!("batch point {idx} has dim {}", x.len())));
        }
        let p = v_point(v, x);
        let u = match dynamics.controller {
            Some(c) => c.eval(x),
            None => dynamics.u0.to_vec(),
        };
        let mut z = x.clone();
        z.extend(&u);
        let (f, jac) = dynamics.model.eval_with_jacobian(&z);
        let g = v_gradient(v, x);
        let gnorm = g.iter().map(|a| a * a).sum::<f64>().sqrt();
        if gnorm > best_norm {
            best_norm = gnorm;
            best_idx = idx;
        }
        let mut violated = false;
        if cfg.c1 > 0.0 && p.v < 0.0 {
            value += cfg.c1 * inv_n * -p.v;
            add_v_grad(v, x, &p, -cfg.c1 * inv_n, &mut grad);
        }
        if p.v <= 0.0 {
            violated = true;
        }
        let lie = directional(v, x, &p, &f, 0.0, None);
        if lie >= -cfg.beta {
            violated = true;
        }
        if cfg.c2 > 0.0 && lie + cfg.beta > 0.0 {
            value += cfg.c2 * inv_n * (lie + cfg.beta);
            directional(v, x, &p, &f, cfg.c2 * inv_n, Some(&mut grad));
            if let Some(c) = dynamics.controller {
                let pre = c.preactivation(x);
                for l in 0..c.input_dim() {
                    let gju: f64 = (0..n).map(|i| g[i] * jac[(i, n + l)]).sum();
                    let t = pre[l].tanh();
                    let du = c.c[l] * (1.0 - t * t);
                    for j in 0..n {
                        grad_k[(l, j)] += cfg.c2 * inv_n * gju * du * x[j];
                    }
                }
            }
        }
        if cfg.roa_term {
            let nx = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            value += inv_n * (nx - cfg.roa_weight * p.v);
            add_v_grad(v, x, &p, -cfg.roa_weight * inv_n, &mut grad);
        }
        if violated {
            violations += 1;
        }
    }
    if cfg.c3 > 0.0 {
        let zero = vec![0.0; n];
        let p0 = v_point(v, &zero);
        value += cfg.c3 * p0.v * p0.v;
        add_v_grad(v, &zero, &p0, 2.0 * cfg.c3 * p0.v, &mut grad);
    }
    if cfg.c4 > 0.0 && best_norm > 0.0 {
        let x = &batch[best_idx];
        let p = v_point(v, x);
        let e: Vec<f64> = v_gradient(v, x).iter().map(|a| a / best_norm).collect();
        value += cfg.c4 * best_norm;
        directional(v, x, &p, &e, cfg.c4, Some(&mut grad));
    }
    if !value.is_finite() || grad.iter().chain(grad_k.iter()).any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("Lyapunov risk".into()));
    }
    Ok(RiskEval {
        value,
        grad_v: grad,
        grad_k,
        max_grad_norm: best_norm.max(0.0),
        violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{close_loop, linear};
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_risk() {
        let v = OneHiddenNet::zeros(2, 6, 1, true);
        let phi = OneHiddenNet::zeros(2, 3, 2, false);
        let dynamics = RiskDynamics {
            model: &phi,
            controller: None,
            u0: &[],
        };
        let cfg = LyapRiskConfig {
            beta: 0.05,
            c2: 2.0,
            ..LyapRiskConfig::default()
        };
        let batch = vec![vec![0.3, 0.1], vec![-0.5, 0.9]];
        let r = lyapunov_risk(&v, &dynamics, &batch, &cfg).unwrap();
        assert!((r.value - 2.0 * 0.05).abs() < 1e-15);
        assert_eq!(r.max_grad_norm, 0.0);
    }

    #[test]
    fn c3_term_alone() {
        // V(0) = tanh(B₂) = 0.1
        let mut v = OneHiddenNet::zeros(2, 6, 1, true);
        v.b2[0] = 0.1f64.atanh();
        let phi = OneHiddenNet::zeros(2, 3, 2, false);
        let dynamics = RiskDynamics {
            model: &phi,
            controller: None,
            u0: &[],
        };
        let cfg = LyapRiskConfig {
            c1: 0.0,
            c2: 0.0,
            c3: 1.0,
            c4: 0.0,
            ..LyapRiskConfig::default()
        };
        let r = lyapunov_risk(&v, &dynamics, &[vec![0.0, 0.0]], &cfg).unwrap();
        assert!((r.value - 0.01).abs() < 1e-15);
    }

    /// A 1-6-1 net without output tanh fitted to `x²` on `[−2, 2]`.
    fn quadratic_surrogate() -> OneHiddenNet {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut net = OneHiddenNet::init_uniform(1, 6, 1, false, &mut rng);
        let mut params = net.params();
        let mut adam = crate::network::AdamState::new(params.len(), 0.01);
        let xs = DMatrix::from_fn(81, 1, |r, _| -2.0 + r as f64 * 0.05);
        let target = xs.map(|x| x * x);
        for _ in 0..20_000 {
            net.set_params(&params).unwrap();
            let fwd = net.forward_batch(&xs);
            let g = (&fwd.output - &target) * (2.0 / 81.0);
            let gr = net.backward(&xs, &fwd, &g, 0).unwrap();
            crate::network::adam_step(&mut params, &gr.flatten(), &mut adam).unwrap();
        }
        net.set_params(&params).unwrap();
        net
    }

    #[test]
    fn lie_derivative_of_quadratic_surrogate() {
        // ∇(x²)·(−x) = −2 at x = 1.
        let v = quadratic_surrogate();
        let sys = close_loop(
            linear(DMatrix::from_element(1, 1, -1.0), DMatrix::zeros(1, 0), 2.0, 0.0).unwrap(),
            None,
        )
        .unwrap();
        let lie = lie_derivative(&v, &sys, &[1.0]).unwrap();
        assert!((lie + 2.0).abs() < 0.05, "{lie}");
    }

    #[test]
    fn lie_derivative_vanishes_at_equilibrium() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v = OneHiddenNet::init_uniform(2, 6, 1, true, &mut rng);
        let sys = close_loop(crate::dynamics::vanderpol(), None).unwrap();
        assert_eq!(lie_derivative(&v, &sys, &[0.0, 0.0]).unwrap(), 0.0);
    }

    fn random_problem(rng: &mut ChaCha8Rng) -> (OneHiddenNet, OneHiddenNet, SaturatingController, Vec<Vec<f64>>) {
        let v = OneHiddenNet::init_uniform(2, 6, 1, true, rng);
        let mut v = v;
        // Larger weights exercise the nonlinearity.
        let p: Vec<f64> = v.params().iter().map(|a| a * 3.0).collect();
        v.set_params(&p).unwrap();
        let phi = OneHiddenNet::init_uniform(3, 10, 2, false, rng);
        let ctl = SaturatingController::new(
            DVector::from_element(1, 2.0),
            DMatrix::from_fn(1, 2, |_, _| rng.gen_range(-2.0..2.0)),
            DVector::from_element(1, rng.gen_range(-0.5..0.5)),
        )
        .unwrap();
        let batch: Vec<Vec<f64>> = (0..16)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        (v, phi, ctl, batch)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for trial in 0..20 {
            let (v, phi, ctl, batch) = random_problem(&mut rng);
            let cfg = LyapRiskConfig {
                c1: 1.0,
                c2: 1.0,
                c3: 0.5,
                c4: 0.3,
                roa_term: trial % 2 == 0,
                roa_weight: 0.7,
                beta: 0.05,
                batch: 16,
            };
            let risk = |v: &OneHiddenNet, c: &SaturatingController| {
                let d = RiskDynamics {
                    model: &phi,
                    controller: Some(c),
                    u0: &[],
                };
                lyapunov_risk(v, &d, &batch, &cfg).unwrap()
            };
            let base = risk(&v, &ctl);
            let h = 1e-6;
            let p0 = v.params();
            for k in 0..p0.len() {
                let mut vp = v.clone();
                let mut p = p0.clone();
                p[k] += h;
                vp.set_params(&p).unwrap();
                let up = risk(&vp, &ctl).value;
                p[k] -= 2.0 * h;
                vp.set_params(&p).unwrap();
                let dn = risk(&vp, &ctl).value;
                let fd = (up - dn) / (2.0 * h);
                let an = base.grad_v[k];
                assert!(
                    (fd - an).abs() <= 1e-5 * an.abs().max(1.0),
                    "trial {trial} param {k}: fd {fd} vs {an}"
                );
            }
            for j in 0..2 {
                let mut cp = ctl.clone();
                cp.k[(0, j)] += h;
                let up = risk(&v, &cp).value;
                cp.k[(0, j)] -= 2.0 * h;
                let dn = risk(&v, &cp).value;
                let fd = (up - dn) / (2.0 * h);
                let an = base.grad_k[(0, j)];
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "k{j}: {fd} vs {an}");
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let v = OneHiddenNet::zeros(2, 6, 1, true);
        let phi = OneHiddenNet::zeros(2, 3, 2, false);
        let d = RiskDynamics {
            model: &phi,
            controller: None,
            u0: &[],
        };
        assert!(lyapunov_risk(&v, &d, &[], &LyapRiskConfig::default()).is_err());
        assert!(lyapunov_risk(&v, &d, &[vec![1.0]], &LyapRiskConfig::default()).is_err());
        let bad = LyapRiskConfig {
            c2: -1.0,
            ..LyapRiskConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
