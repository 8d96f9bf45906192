//! Learning the dynamics surrogate `φ` and bounding its error.

use crate::dynamics::{sample_data, sample_data_on, ControlSystem, SampleSet};
use crate::error::{Error, Result};
use crate::network::{adam_step, lipschitz_upper, AdamState, OneHiddenNet};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hidden: usize,
    /// Training grid size.
    pub samples: usize,
    /// Evaluation grid size used for `α` and `δ`.
    pub eval_samples: usize,
    pub max_epochs: usize,
    pub batch: usize,
    pub lr: f64,
    pub lr_min: f64,
    /// Epochs without improvement before the rate drops tenfold.
    pub plateau: usize,
    pub target_mse: f64,
    pub seed: u64,
    /// Optional state-input sampling box overriding `D × U`, states first.
    pub sample_lo: Option<Vec<f64>>,
    pub sample_hi: Option<Vec<f64>>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            hidden: 100,
            samples: 250_000,
            eval_samples: 1_000_000,
            max_epochs: 200,
            batch: 256,
            lr: 0.01,
            lr_min: 1e-5,
            plateau: 10,
            target_mse: 1e-7,
            seed: 0,
            sample_lo: None,
            sample_hi: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SysIdResult {
    pub model: OneHiddenNet,
    /// Largest `‖f(p) − φ(p)‖₂` over the training and evaluation grids.
    pub alpha: f64,
    /// Covering radius `δ` of the evaluated samples.
    pub sample_gap: f64,
    /// `lipschitz_upper(model)`.
    pub k_phi: f64,
    /// Largest sampled difference quotient of the model, for comparison.
    pub k_phi_empirical: f64,
    pub mse_history: Vec<f64>,
    pub converged: bool,
}

/// Summary written next to a trained model.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SysIdReport {
    pub system: String,
    pub alpha: f64,
    pub sample_gap: f64,
    pub k_phi: f64,
    pub k_phi_empirical: f64,
    pub final_mse: f64,
    pub epochs: usize,
    pub converged: bool,
    pub config: TrainConfig,
}

impl SysIdResult {
    pub fn report(&self, system: &str, cfg: &TrainConfig) -> SysIdReport {
        SysIdReport {
            system: system.into(),
            alpha: self.alpha,
            sample_gap: self.sample_gap,
            k_phi: self.k_phi,
            k_phi_empirical: self.k_phi_empirical,
            final_mse: self.mse_history.last().copied().unwrap_or(f64::NAN),
            epochs: self.mse_history.len(),
            converged: self.converged,
            config: cfg.clone(),
        }
    }
}

/// `K_f δ + α + K_φ δ`, the sup-bound on `‖f − φ‖₂` over `D × U`.
pub fn generalization_bound(k_f: f64, sample_gap: f64, alpha: f64, k_phi: f64) -> f64 {
    k_f * sample_gap + alpha + k_phi * sample_gap
}

/// Largest 2-norm residual of `model` on a sample set.
pub fn max_residual(model: &OneHiddenNet, set: &SampleSet) -> f64 {
    (0..set.len())
        .into_par_iter()
        .with_min_len(1024)
        .map(|r| {
            let x: Vec<f64> = set.inputs.row(r).iter().copied().collect();
            let y = model.eval(&x);
            y.iter()
                .enumerate()
                .map(|(i, v)| (v - set.targets[(r, i)]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .reduce(|| 0.0, f64::max)
}

/// Per-column affine maps to zero mean and unit spread.
struct Scaling {
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Scaling {
    fn fit(m: &DMatrix<f64>) -> Self {
        let n = m.nrows() as f64;
        let mut shift = Vec::new();
        let mut scale = Vec::new();
        for c in m.column_iter() {
            let mean = c.sum() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            shift.push(mean);
            scale.push(if var > 0.0 { var.sqrt() } else { 1.0 });
        }
        Scaling { shift, scale }
    }

    fn apply(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |r, c| (m[(r, c)] - self.shift[c]) / self.scale[c])
    }
}

/// Rewrites a net trained on scaled data as a net on raw data.
fn fold_scaling(net: &OneHiddenNet, input: &Scaling, output: &Scaling) -> Result<OneHiddenNet> {
    let h = net.hidden_dim();
    let w1 = DMatrix::from_fn(h, net.input_dim(), |i, j| net.w1[(i, j)] / input.scale[j]);
    let b1 = DVector::from_fn(h, |i, _| {
        net.b1[i] - (0..net.input_dim()).map(|j| w1[(i, j)] * input.shift[j]).sum::<f64>()
    });
    let w2 = DMatrix::from_fn(net.output_dim(), h, |o, i| net.w2[(o, i)] * output.scale[o]);
    let b2 = DVector::from_fn(net.output_dim(), |o, _| net.b2[o] * output.scale[o] + output.shift[o]);
    OneHiddenNet::new(w1, b1, w2, b2, false)
}

fn sampled(sys: &ControlSystem, cfg: &TrainConfig, n: usize, seed: u64) -> Result<SampleSet> {
    match (&cfg.sample_lo, &cfg.sample_hi) {
        (Some(lo), Some(hi)) => sample_data_on(sys, lo, hi, n, seed),
        (None, None) => sample_data(sys, n, seed),
        _ => Err(Error::Config("sample_lo and sample_hi must be given together".into())),
    }
}

/// Trains `φ` on a stratified grid with mini-batch Adam and a plateau
/// schedule, then measures `α`, `δ` and `K_φ`.
///
/// Inputs and targets are standardised for training and the scaling is
/// folded back into the weights, so the returned model acts on raw data.
pub fn learn_dynamics(sys: &ControlSystem, cfg: &TrainConfig) -> Result<SysIdResult> {
    if cfg.hidden == 0 || cfg.batch == 0 {
        return Err(Error::Config("hidden and batch must be positive".into()));
    }
    let train = sampled(sys, cfg, cfg.samples, cfg.seed)?;
    let xs = Scaling::fit(&train.inputs);
    let ys = Scaling::fit(&train.targets);
    let x = xs.apply(&train.inputs);
    let y = ys.apply(&train.targets);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let d = x.ncols();
    let mut net = OneHiddenNet::init_uniform(d, cfg.hidden, sys.state_dim, false, &mut rng);
    let mut params = net.params();
    let mut adam = AdamState::new(params.len(), cfg.lr);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut history = Vec::new();
    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let out_var: f64 = ys.scale.iter().map(|s| s * s).sum::<f64>() / ys.scale.len() as f64;
    let mut converged = false;
    for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut sse = 0.0;
        for (bi, chunk) in order.chunks(cfg.batch).enumerate() {
            let xb = DMatrix::from_fn(chunk.len(), d, |r, c| x[(chunk[r], c)]);
            let yb = DMatrix::from_fn(chunk.len(), y.ncols(), |r, c| y[(chunk[r], c)]);
            net.set_params(&params)?;
            let fwd = net.forward_batch(&xb);
            let err = &fwd.output - &yb;
            sse += err.iter().map(|v| v * v).sum::<f64>();
            let scale = 2.0 / (chunk.len() * y.ncols()) as f64;
            let grads = net.backward(&xb, &fwd, &(err * scale), epoch * order.len() / cfg.batch + bi)?;
            adam_step(&mut params, &grads.flatten(), &mut adam)?;
        }
        // Mean squared error in raw units, averaged over output components.
        let mse = sse / (order.len() * y.ncols()) as f64 * out_var;
        if !mse.is_finite() {
            return Err(Error::Training {
                batch: epoch,
                reason: "non-finite loss".into(),
            });
        }
        history.push(mse);
        if mse < cfg.target_mse {
            converged = true;
            break;
        }
        if mse < best * (1.0 - 1e-4) {
            best = mse;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.plateau {
                adam.lr = (adam.lr * 0.1).max(cfg.lr_min);
                since_best = 0;
            }
        }
    }
    net.set_params(&params)?;
    let model = fold_scaling(&net, &xs, &ys)?;
    let eval = sampled(sys, cfg, cfg.eval_samples.max(2), cfg.seed.wrapping_add(1))?;
    let alpha = max_residual(&model, &train).max(max_residual(&model, &eval));
    let sample_gap = train.gap.min(eval.gap);
    let k_phi = lipschitz_upper(&model);
    let k_phi_empirical = model_difference_quotient(&model, &eval, cfg.seed);
    Ok(SysIdResult {
        model,
        alpha,
        sample_gap,
        k_phi,
        k_phi_empirical,
        mse_history: history,
        converged,
    })
}

/// Largest difference quotient of `model` over nearby sample pairs.
fn model_difference_quotient(model: &OneHiddenNet, set: &SampleSet, seed: u64) -> f64 {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let d = set.inputs.ncols();
    let mut worst: f64 = 0.0;
    for _ in 0..20_000.min(set.len()) {
        let r = rng.gen_range(0..set.len());
        let p: Vec<f64> = set.inputs.row(r).iter().copied().collect();
        let q: Vec<f64> = p.iter().map(|v| v + rng.gen_range(-1e-3..1e-3)).collect();
        let dist = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let fp = model.eval(&p);
        let fq = model.eval(&q);
        let df = fp.iter().zip(&fq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist > 0.0 && d > 0 {
            worst = worst.max(df / dist);
        }
    }
    worst
}
