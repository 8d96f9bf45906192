use super::VectorField;
use crate::error::{Error, Result};
use serde::Serialize;

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// The state left the divergence box and the rollout stopped early.
    pub diverged: bool,
}

impl Trajectory {
    pub fn last(&self) -> &[f64] {
        self.states.last().expect("trajectories hold the initial state")
    }

    /// `t, x1, …, xn` rows with a header.
    pub fn to_csv(&self) -> String {
        let n = self.states.first().map_or(0, Vec::len);
        let mut s = String::from("t");
        for i in 1..=n {
            s.push_str(&format!(",x{i}"));
        }
        s.push('\n');
        for (t, x) in self.times.iter().zip(&self.states) {
            s.push_str(&format!("{t}"));
            for v in x {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }
}

/// One classic Runge–Kutta step.
pub fn rk4_step<F: VectorField + ?Sized>(f: &F, x: &[f64], dt: f64) -> Result<Vec<f64>> {
    let shifted =
        |base: &[f64], k: &[f64], h: f64| -> Vec<f64> { base.iter().zip(k).map(|(a, b)| a + h * b).collect() };
    let k1 = f.eval(x)?;
    let k2 = f.eval(&shifted(x, &k1, 0.5 * dt))?;
    let k3 = f.eval(&shifted(x, &k2, 0.5 * dt))?;
    let k4 = f.eval(&shifted(x, &k3, dt))?;
    Ok((0..x.len())
        .map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Fixed-step RK4 from `x0` to `t_end`, calling `observe(t, x)` on every
/// accepted state including the first. Stops early when any coordinate
/// exceeds `guard` in magnitude, or when `observe` returns `false`.
/// Returns the final time, state and whether the guard fired.
pub fn integrate<F, O>(
    f: &F,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    guard: f64,
    mut observe: O,
) -> Result<(f64, Vec<f64>, bool)>
where
    F: VectorField + ?Sized,
    O: FnMut(f64, &[f64]) -> bool,
{
    if !(dt > 0.0) || !(t_end >= dt) {
        return Err(Error::Config(format!(
            "need dt > 0 and t_end ≥ dt, got dt={dt}, t_end={t_end}"
        )));
    }
    let steps = (t_end / dt).round() as u64;
    let mut x = x0.to_vec();
    let mut t = 0.0;
    if !observe(t, &x) {
        return Ok((t, x, false));
    }
    for k in 1..=steps {
        let next = rk4_step(f, &x, dt).map_err(|e| Error::Integration {
            last_time: t,
            reason: e.to_string(),
        })?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::Integration {
                last_time: t,
                reason: "non-finite state".into(),
            });
        }
        x = next;
        t = k as f64 * dt;
        if x.iter().any(|v| v.abs() > guard) {
            return Ok((t, x, true));
        }
        if !observe(t, &x) {
            break;
        }
    }
    Ok((t, x, false))
}

/// Full rollout with the divergence guard at ten times `domain_extent`.
pub fn simulate<F: VectorField + ?Sized>(
    f: &F,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    domain_extent: f64,
) -> Result<Trajectory> {
    let mut times = Vec::new();
    let mut states = Vec::new();
    let (t, x, diverged) = integrate(f, x0, t_end, dt, 10.0 * domain_extent, |t, x| {
        times.push(t);
        states.push(x.to_vec());
        true
    })?;
    if diverged {
        times.push(t);
        states.push(x);
    }
    Ok(Trajectory {
        times,
        states,
        diverged,
    })
}

#[cfg(test)]
mod tests {
    use super::super::{close_loop, linear, vanderpol};
    use super::*;
    use nalgebra::DMatrix;

    fn decay() -> super::super::ClosedLoopSystem {
        close_loop(
            linear(DMatrix::from_element(1, 1, -1.0), DMatrix::zeros(1, 0), 1.0, 0.0).unwrap(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn exponential_decay() {
        let tr = simulate(&decay(), &[1.0], 1.0, 0.001, 1.0).unwrap();
        assert!((tr.last()[0] - (-1.0f64).exp()).abs() < 1e-6);
        assert_eq!(tr.times.len(), tr.states.len());
        assert!(tr.times.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn fourth_order_convergence() {
        let sys = decay();
        let oracle = simulate(&sys, &[1.0], 1.0, 0.001, 1.0).unwrap().last()[0];
        let e1 = (simulate(&sys, &[1.0], 1.0, 0.1, 1.0).unwrap().last()[0] - oracle).abs();
        let e2 = (simulate(&sys, &[1.0], 1.0, 0.05, 1.0).unwrap().last()[0] - oracle).abs();
        let ratio = e1 / e2;
        assert!((13.0..19.0).contains(&ratio), "{ratio}");
    }

    #[test]
    fn origin_stays_put() {
        let cl = close_loop(vanderpol(), None).unwrap();
        let tr = simulate(&cl, &[0.0, 0.0], 2.0, 0.01, 1.2).unwrap();
        assert!(tr.states.iter().all(|x| x.iter().all(|v| *v == 0.0)));
    }

    #[test]
    fn vanderpol_converges_inside_limit_cycle() {
        let cl = close_loop(vanderpol(), None).unwrap();
        let tr = simulate(&cl, &[0.5, 0.5], 20.0, 0.01, 1.2).unwrap();
        let oracle = simulate(&cl, &[0.5, 0.5], 20.0, 0.001, 1.2).unwrap();
        let n = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!(n(tr.last()) < 0.01);
        assert!(n(oracle.last()) < 0.01);
        assert!((tr.last()[0] - oracle.last()[0]).abs() < 1e-8);
    }

    #[test]
    fn divergence_guard_fires() {
        let grow = close_loop(
            linear(DMatrix::from_element(1, 1, 1.0), DMatrix::zeros(1, 0), 1.0, 0.0).unwrap(),
            None,
        )
        .unwrap();
        let tr = simulate(&grow, &[1.0], 100.0, 0.01, 1.0).unwrap();
        assert!(tr.diverged);
        assert!(tr.last()[0] > 10.0);
        assert!(*tr.times.last().unwrap() < 3.0);
    }

    #[test]
    fn bad_step_rejected() {
        assert!(simulate(&decay(), &[1.0], 1.0, 0.0, 1.0).is_err());
        assert!(simulate(&decay(), &[1.0], 0.001, 0.01, 1.0).is_err());
    }

    #[test]
    fn singularity_becomes_integration_error() {
        let cl = close_loop(super::super::unicycle(), None).unwrap();
        // Held at u₀ = 1 the state drifts; starting at d_e = 0.94 with a
        // heading towards the singular line crosses it quickly.
        match simulate(&cl, &[0.94, 1.2], 5.0, 0.01, 0.8) {
            Err(Error::Integration { last_time, .. }) => assert!(last_time < 5.0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn csv_has_header_and_rows() {
        let tr = simulate(&decay(), &[1.0], 0.02, 0.01, 1.0).unwrap();
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "t,x1");
        assert_eq!(lines.len(), 4);
    }
}
