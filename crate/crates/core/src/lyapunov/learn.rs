use super::gradnorm::{gradient_norm_bound, GradNormBound};
use super::query::{lyapunov_query, LearnedLoop};
use super::risk::{lyapunov_risk, v_gradient, LyapRiskConfig, RiskDynamics};
use crate::dynamics::ControlSystem;
use crate::error::{Error, Result};
use crate::lqr::linearize;
use crate::network::{adam_step, AdamState, OneHiddenNet, SaturatingController};
use crate::sysid::generalization_bound;
use crate::verifier::{FalsifyConfig, FalsifyReport, Region, Verdict};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnConfig {
    pub risk: LyapRiskConfig,
    pub hidden: usize,
    pub lr: f64,
    pub epochs_per_round: usize,
    pub max_rounds: usize,
    /// Radius of the excluded ball around the origin.
    pub eps: f64,
    /// Falsifier δ.
    pub precision: f64,
    pub falsify_budget: u64,
    /// Lower bound on β; the risk collapses to `V ≈ 0` as β → 0.
    pub beta_min: f64,
    /// β is set to `beta_margin · M · bound`.
    pub beta_margin: f64,
    /// Extra points drawn around each counterexample.
    pub counterexample_neighbours: usize,
    pub train_controller: bool,
    pub seed: u64,
}

impl Default for LearnConfig {
    fn default() -> Self {
        LearnConfig {
            risk: LyapRiskConfig::default(),
            hidden: 6,
            lr: 0.01,
            epochs_per_round: 100,
            max_rounds: 50,
            eps: 0.2,
            precision: 0.01,
            falsify_budget: 5_000_000,
            beta_min: 0.02,
            beta_margin: 1.1,
            counterexample_neighbours: 9,
            train_controller: true,
            seed: 0,
        }
    }
}

/// The quantities of the model-error bound `K_f δ + α + K_φ δ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBound {
    pub k_f: f64,
    pub k_phi: f64,
    pub sample_gap: f64,
    pub alpha: f64,
}

impl ErrorBound {
    pub fn value(&self) -> f64 {
        generalization_bound(self.k_f, self.sample_gap, self.alpha, self.k_phi)
    }
}

#[derive(Clone, Debug)]
pub struct LyapResult {
    pub v: OneHiddenNet,
    pub controller: Option<SaturatingController>,
    pub beta: f64,
    /// Certified when `m_bound` is present, else the batch surrogate.
    pub m: f64,
    pub m_bound: Option<GradNormBound>,
    pub risk_history: Vec<f64>,
    pub certified: bool,
    pub rounds: usize,
    pub last_check: Option<FalsifyReport>,
    pub counterexamples: Vec<Vec<f64>>,
}

/// Per-round instrumentation.
pub struct RoundInfo<'a> {
    pub round: usize,
    pub beta: f64,
    /// Every point the round trained on, fresh samples first.
    pub training_points: &'a [Vec<f64>],
    pub verdict: &'a Verdict,
    pub new_counterexamples: &'a [Vec<f64>],
}

/// Uniform sample from `region` by rejection from its box.
pub fn sample_region(region: &Region, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let lo = region.bounds.lo();
    let hi = region.bounds.hi();
    loop {
        let p: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if region.contains(&p) {
            return p;
        }
    }
}

/// Saturation bounds, bias and gain for the initial controller.
fn initial_controller(phi: &OneHiddenNet, sys: &ControlSystem, k_init: &DMatrix<f64>) -> Result<SaturatingController> {
    let n = sys.state_dim;
    let m = sys.input_dim;
    if k_init.shape() != (m, n) {
        return Err(Error::Dimension(format!(
            "initial gain is {}x{}, need {m}x{n}",
            k_init.nrows(),
            k_init.ncols()
        )));
    }
    let lin = linearize(sys)?;
    let acl = &lin.a - &lin.b * k_init;
    if acl.complex_eigenvalues().iter().any(|l| l.re >= 0.0) {
        return Err(Error::NotStabilizing(
            "initial gain does not stabilize the linearization".into(),
        ));
    }
    let c = DVector::from_iterator(m, sys.input_box.iter().map(|b| b.1.min(-b.0)));
    let b = SaturatingController::solve_bias(&c, |u| {
        let mut z = vec![0.0; n];
        z.extend_from_slice(u);
        phi.eval(&z)
    })?;
    SaturatingController::from_linear_gain(c, k_init, b)
}

pub fn learn_lyapunov(
    phi: &OneHiddenNet,
    sys: &ControlSystem,
    bound: &ErrorBound,
    k_init: Option<&DMatrix<f64>>,
    cfg: &LearnConfig,
) -> Result<LyapResult> {
    learn_lyapunov_with(phi, sys, bound, k_init, cfg, &mut |_| {})
}

/// Counterexample-guided training of `V` and the controller gain against
/// the learned dynamics `phi`.
///
/// Each round trains for `epochs_per_round` epochs, recomputes `β` from the
/// batch gradient surrogate of `M`, and asks the falsifier for a point of
/// `D ∖ B_ε` with `V ≤ 0` or `∇_φV ≥ −β`. Counterexamples and a few
/// neighbours join every later training set. On UNSAT the gradient bound
/// `M` is certified and the round is accepted when `β > M · bound`;
/// otherwise `β` is raised and training continues.
pub fn learn_lyapunov_with(
    phi: &OneHiddenNet,
    sys: &ControlSystem,
    bound: &ErrorBound,
    k_init: Option<&DMatrix<f64>>,
    cfg: &LearnConfig,
    observer: &mut dyn FnMut(&RoundInfo<'_>),
) -> Result<LyapResult> {
    cfg.risk.validate()?;
    let n = sys.state_dim;
    let m = sys.input_dim;
    if phi.input_dim() != n + m || phi.output_dim() != n {
        return Err(Error::Dimension(format!(
            "model maps {} → {}, system has {n} states and {m} inputs",
            phi.input_dim(),
            phi.output_dim()
        )));
    }
    let mut controller = match (m, k_init) {
        (0, _) => None,
        (_, Some(k)) => Some(initial_controller(phi, sys, k)?),
        (_, None) => {
            return Err(Error::Config("a controlled system needs an initial gain".into()));
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut v = OneHiddenNet::init_uniform(n, cfg.hidden, 1, true, &mut rng);
    let nv = v.param_count();
    let nk = if cfg.train_controller { n * m } else { 0 };
    let mut params = v.params();
    if let Some(c) = &controller {
        if cfg.train_controller {
            params.extend(c.k.iter());
        }
    }
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let region = sys.domain.clone().with_inner(cfg.eps.max(sys.domain.inner));
    let gen = bound.value();
    let fcfg = FalsifyConfig {
        precision: cfg.precision,
        budget: cfg.falsify_budget,
        workers: None,
    };
    let mut beta = cfg.beta_min;
    let mut counterexamples: Vec<Vec<f64>> = Vec::new();
    let mut history = Vec::new();
    let mut result_m = 0.0;
    let mut m_bound = None;
    let mut last_check = None;
    let mut certified = false;
    let mut rounds = 0;
    let u0 = sys.equilibrium_shift.clone();

    for round in 0..cfg.max_rounds {
        rounds = round + 1;
        let mut training: Vec<Vec<f64>> = Vec::new();
        let mut rcfg = cfg.risk.clone();
        // The falsifier accepts anything within δ of a violation.
        rcfg.beta = beta + 2.0 * cfg.precision;
        let mut surrogate: f64 = 0.0;
        for epoch in 0..cfg.epochs_per_round {
            let mut batch: Vec<Vec<f64>> = (0..cfg.risk.batch).map(|_| sample_region(&region, &mut rng)).collect();
            batch.extend(counterexamples.iter().cloned());
            let dynamics = RiskDynamics {
                model: phi,
                controller: controller.as_ref(),
                u0: &u0,
            };
            let r = lyapunov_risk(&v, &dynamics, &batch, &rcfg).map_err(|e| Error::Training {
                batch: round * cfg.epochs_per_round + epoch,
                reason: e.to_string(),
            })?;
            history.push(r.value);
            surrogate = r.max_grad_norm;
            let mut grads = r.grad_v;
            if nk > 0 {
                grads.extend(r.grad_k.iter());
            }
            adam_step(&mut params, &grads, &mut adam)?;
            v.set_params(&params[..nv])?;
            if let Some(c) = controller.as_mut() {
                if nk > 0 {
                    c.k = DMatrix::from_column_slice(m, n, &params[nv..]);
                }
            }
            if epoch + 1 == cfg.epochs_per_round {
                training = batch;
            }
        }
        if cfg.epochs_per_round == 0 {
            training = counterexamples.clone();
        }
        if cfg.epochs_per_round > 0 {
            let probe: f64 = (0..2000)
                .map(|_| {
                    let p = sample_region(&sys.domain, &mut rng);
                    v_gradient(&v, &p).iter().map(|g| g * g).sum::<f64>().sqrt()
                })
                .fold(surrogate, f64::max);
            result_m = probe;
            beta = (cfg.beta_margin * probe * gen).max(cfg.beta_min);
        }
        let learned = LearnedLoop::new(phi.clone(), controller.clone(), u0.clone())?;
        let query = lyapunov_query(&v, &learned, &sys.domain, cfg.eps, beta)?;
        let report = query.falsify(&fcfg);
        let mut fresh = Vec::new();
        match &report.verdict {
            Verdict::DeltaSat { point, witness_box, .. } => {
                fresh.push(point.clone());
                for _ in 0..cfg.counterexample_neighbours {
                    let p: Vec<f64> = witness_box
                        .0
                        .iter()
                        .map(|iv| {
                            let r = (iv.hi - iv.lo).max(cfg.precision);
                            iv.mid() + rng.gen_range(-r..r)
                        })
                        .collect();
                    if let Some(p) = region.feasible_near(&p) {
                        fresh.push(p);
                    }
                }
            }
            Verdict::Unsat { .. } => {
                let mb = gradient_norm_bound(&v, &sys.domain, &fcfg);
                result_m = mb.m;
                m_bound = Some(mb);
                if beta > mb.m * gen {
                    certified = true;
                } else {
                    beta = (cfg.beta_margin * mb.m * gen).max(cfg.beta_min);
                }
            }
            Verdict::Unknown { .. } => {}
        }
        observer(&RoundInfo {
            round,
            beta,
            training_points: &training,
            verdict: &report.verdict,
            new_counterexamples: &fresh,
        });
        counterexamples.extend(fresh);
        last_check = Some(report);
        if certified {
            break;
        }
        m_bound = None;
    }
    Ok(LyapResult {
        v,
        controller,
        beta,
        m: result_m,
        m_bound,
        risk_history: history,
        certified,
        rounds,
        last_check,
        counterexamples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{linear, vanderpol};

    /// `φ(x) = W₂ tanh(W₁x)` with tiny `W₁` behaves like `−x` on the unit box.
    fn near_linear_model(n: usize, m: usize, scale: f64) -> OneHiddenNet {
        let h = n;
        let w1 = DMatrix::from_fn(h, n + m, |i, j| if i == j { scale } else { 0.0 });
        let w2 = DMatrix::from_fn(n, h, |i, j| if i == j { -1.0 / scale } else { 0.0 });
        OneHiddenNet::new(w1, DVector::zeros(h), w2, DVector::zeros(n), false).unwrap()
    }

    #[test]
    fn zero_rounds_returns_initial_candidate() {
        let sys = vanderpol();
        let phi = near_linear_model(2, 0, 0.01);
        let cfg = LearnConfig {
            max_rounds: 0,
            ..LearnConfig::default()
        };
        let bound = ErrorBound {
            k_f: 1.0,
            k_phi: 1.0,
            sample_gap: 0.0,
            alpha: 0.0,
        };
        let r = learn_lyapunov(&phi, &sys, &bound, None, &cfg).unwrap();
        assert!(!r.certified);
        assert_eq!(r.rounds, 0);
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let init = OneHiddenNet::init_uniform(2, 6, 1, true, &mut rng);
        assert_eq!(r.v, init);
    }

    #[test]
    fn certifies_a_stable_linear_model() {
        let sys = linear(DMatrix::identity(2, 2) * -1.0, DMatrix::zeros(2, 0), 1.0, 0.0).unwrap();
        let phi = near_linear_model(2, 0, 0.01);
        let cfg = LearnConfig {
            eps: 0.2,
            epochs_per_round: 200,
            max_rounds: 20,
            ..LearnConfig::default()
        };
        let bound = ErrorBound {
            k_f: 1.0,
            k_phi: 1.0,
            sample_gap: 0.0,
            alpha: 0.0,
        };
        let r = learn_lyapunov(&phi, &sys, &bound, None, &cfg).unwrap();
        assert!(r.certified, "rounds {}", r.rounds);
        assert!(r.last_check.unwrap().verdict.is_unsat());
    }

    #[test]
    fn counterexamples_feed_the_next_round() {
        let sys = vanderpol();
        let phi = near_linear_model(2, 0, 0.01);
        // ẋ = −x is not what φ models here for x₂; a handful of rounds with
        // very few epochs leaves V uncertified and produces counterexamples.
        let cfg = LearnConfig {
            epochs_per_round: 1,
            max_rounds: 4,
            ..LearnConfig::default()
        };
        let bound = ErrorBound {
            k_f: 1.0,
            k_phi: 1.0,
            sample_gap: 0.0,
            alpha: 0.0,
        };
        let mut pending: Vec<Vec<f64>> = Vec::new();
        let mut checked = 0;
        learn_lyapunov_with(&phi, &sys, &bound, None, &cfg, &mut |info| {
            for ce in &pending {
                assert!(info.training_points.contains(ce));
                checked += 1;
            }
            pending = info.new_counterexamples.to_vec();
        })
        .unwrap();
        assert!(checked > 0);
    }

    #[test]
    fn destabilizing_gain_is_rejected() {
        let sys = crate::dynamics::pendulum();
        let phi = OneHiddenNet::zeros(3, 4, 2, false);
        let k = DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]);
        let bound = ErrorBound {
            k_f: 1.0,
            k_phi: 1.0,
            sample_gap: 0.0,
            alpha: 0.0,
        };
        match learn_lyapunov(&phi, &sys, &bound, Some(&k), &LearnConfig::default()) {
            Err(Error::NotStabilizing(_)) => {}
            other => panic!("{other:?}"),
        }
    }
}
