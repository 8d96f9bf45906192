use crate::error::{Error, Result};

/// Adam moments and hyper-parameters for one flat parameter vector.
#[derive(Clone, Debug)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(n_params: usize, lr: f64) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step(params: &mut [f64], grads: &[f64], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Dimension(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = state.beta1 * state.m[i] + (1.0 - state.beta1) * g;
        state.v[i] = state.beta2 * state.v[i] + (1.0 - state.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= state.lr * m_hat / (v_hat.sqrt() + state.eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut st = AdamState::new(3, 0.1);
        for _ in 0..10 {
            adam_step(&mut p, &[0.0; 3], &mut st).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn converges_on_scalar_quadratic() {
        let mut p = vec![0.0];
        let mut st = AdamState::new(1, 0.1);
        for _ in 0..2000 {
            let g = 2.0 * (p[0] - 3.0);
            adam_step(&mut p, &[g], &mut st).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 1e-3, "{}", p[0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut st = AdamState::new(2, 0.1);
        assert!(adam_step(&mut [0.0; 3], &[0.0; 3], &mut st).is_err());
    }
}
