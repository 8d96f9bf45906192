use super::LevelSetResult;
use crate::dynamics::{integrate, VectorField};
use crate::error::{Error, Result};
use crate::network::OneHiddenNet;
use crate::verifier::Region;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AttractionConfig {
    pub probes: usize,
    pub t_end: f64,
    pub dt: f64,
    /// A probe converged when its final `‖x‖₂` is below this.
    pub final_tol: f64,
    /// Allowed rise of `V` above its running minimum.
    pub monotone_slack: f64,
    /// Radius of the ball where the decrease condition is not certified.
    pub eps: f64,
    pub seed: u64,
}

impl Default for AttractionConfig {
    fn default() -> Self {
        AttractionConfig {
            probes: 1000,
            t_end: 30.0,
            dt: 1e-3,
            final_tol: 1e-2,
            monotone_slack: 1e-4,
            eps: 0.0,
            seed: 0,
        }
    }
}

impl AttractionConfig {
    /// Benchmark radii; the pendulum loop is stiff near the saturation knee
    /// and gets a smaller step.
    pub fn for_system(name: &str) -> Self {
        let mut cfg = AttractionConfig::default();
        match name {
            "vanderpol" => cfg.eps = 0.2,
            "unicycle" => cfg.eps = 0.1,
            "pendulum" => {
                cfg.dt = 5e-4;
                cfg.eps = 0.4;
            }
            _ => {}
        }
        cfg
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeOutcome {
    pub x0: Vec<f64>,
    pub final_norm: f64,
    pub converged: bool,
    /// Largest `V(x(t)) − min_{s≤t} V(x(s))`.
    pub max_increase: f64,
    /// The same with `t` and `s` restricted to states with `‖x‖ ≥ ε`.
    pub max_increase_outside: f64,
    pub diverged: bool,
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttractionReport {
    pub level: f64,
    pub probes: usize,
    pub converged: usize,
    pub fraction: f64,
    /// Every probe kept `V` within the slack of nonincreasing.
    pub monotone: bool,
    pub max_increase: f64,
    pub max_increase_outside: f64,
    pub worst_final_norm: f64,
    pub integration_failures: usize,
    /// Draws discarded because they fell outside `D` or above the level.
    pub rejected: usize,
    pub outcomes: Vec<ProbeOutcome>,
}

/// Simulates one probe of the closed loop `field` from `x0 ∈ D`.
pub fn probe(
    field: &dyn VectorField,
    v: &OneHiddenNet,
    domain: &Region,
    x0: &[f64],
    cfg: &AttractionConfig,
) -> Result<ProbeOutcome> {
    if !domain.contains(x0) {
        return Err(Error::Config(format!("probe {x0:?} lies outside the domain")));
    }
    let guard = 10.0
        * domain
            .bounds
            .0
            .iter()
            .map(|iv| iv.lo.abs().max(iv.hi.abs()))
            .fold(0.0, f64::max);
    let mut running_min = f64::INFINITY;
    let mut max_increase: f64 = 0.0;
    let mut min_outside = f64::INFINITY;
    let mut max_increase_outside: f64 = 0.0;
    let eps2 = cfg.eps * cfg.eps;
    let run = integrate(field, x0, cfg.t_end, cfg.dt, guard, |_, x| {
        let val = v.eval(x)[0];
        max_increase = max_increase.max(val - running_min);
        running_min = running_min.min(val);
        if x.iter().map(|a| a * a).sum::<f64>() >= eps2 {
            max_increase_outside = max_increase_outside.max(val - min_outside);
            min_outside = min_outside.min(val);
        }
        true
    });
    Ok(match run {
        Ok((_, x, diverged)) => {
            let final_norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
            ProbeOutcome {
                x0: x0.to_vec(),
                final_norm,
                converged: !diverged && final_norm < cfg.final_tol,
                max_increase,
                max_increase_outside,
                diverged,
                failure: None,
            }
        }
        Err(e) => ProbeOutcome {
            x0: x0.to_vec(),
            final_norm: f64::NAN,
            converged: false,
            max_increase,
            max_increase_outside,
            diverged: false,
            failure: Some(e.to_string()),
        },
    })
}

/// Draws `cfg.probes` points of `{x ∈ D : V(x) ≤ c*}`, simulates the true
/// closed loop from each, and counts those that reach the origin.
pub fn empirical_attraction(
    field: &dyn VectorField,
    v: &OneHiddenNet,
    domain: &Region,
    level: &LevelSetResult,
    cfg: &AttractionConfig,
) -> Result<AttractionReport> {
    if level.degenerate {
        return Err(Error::Config("no certified level set to probe".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let lo = domain.bounds.lo();
    let hi = domain.bounds.hi();
    let mut starts = Vec::with_capacity(cfg.probes);
    let mut rejected = 0;
    let max_draws = 10_000 * cfg.probes.max(1);
    while starts.len() < cfg.probes {
        if rejected > max_draws {
            return Err(Error::Config(format!(
                "level set {} too small to sample {} probes",
                level.c_star, cfg.probes
            )));
        }
        let p: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
        if domain.contains(&p) && v.eval(&p)[0] <= level.c_star {
            starts.push(p);
        } else {
            rejected += 1;
        }
    }
    let outcomes: Vec<ProbeOutcome> = starts
        .par_iter()
        .map(|x0| probe(field, v, domain, x0, cfg))
        .collect::<Result<_>>()?;
    let converged = outcomes.iter().filter(|o| o.converged).count();
    let max_increase = outcomes.iter().map(|o| o.max_increase).fold(0.0, f64::max);
    let max_increase_outside = outcomes.iter().map(|o| o.max_increase_outside).fold(0.0, f64::max);
    Ok(AttractionReport {
        level: level.c_star,
        probes: outcomes.len(),
        converged,
        fraction: if outcomes.is_empty() {
            1.0
        } else {
            converged as f64 / outcomes.len() as f64
        },
        monotone: max_increase <= cfg.monotone_slack,
        max_increase,
        max_increase_outside,
        worst_final_norm: outcomes.iter().map(|o| o.final_norm).fold(0.0, f64::max),
        integration_failures: outcomes.iter().filter(|o| o.failure.is_some()).count(),
        rejected,
        outcomes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{close_loop, pendulum, vanderpol};

    #[test]
    fn origin_probe_converges() {
        let sys = close_loop(vanderpol(), None).unwrap();
        let v = OneHiddenNet::zeros(2, 2, 1, true);
        let cfg = AttractionConfig {
            t_end: 1.0,
            ..AttractionConfig::default()
        };
        let o = probe(&sys, &v, &Region::ball(2, 1.2), &[0.0, 0.0], &cfg).unwrap();
        assert!(o.converged);
        assert_eq!(o.final_norm, 0.0);
        assert_eq!(o.max_increase, 0.0);
    }

    #[test]
    fn outside_probe_is_rejected() {
        let sys = close_loop(vanderpol(), None).unwrap();
        let v = OneHiddenNet::zeros(2, 2, 1, true);
        let r = probe(
            &sys,
            &v,
            &Region::ball(2, 1.2),
            &[1.0, 1.0],
            &AttractionConfig::default(),
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn uncontrolled_pendulum_falls() {
        // Without the controller the upright pendulum is unstable.
        let sys = close_loop(pendulum(), None).unwrap();
        let v = OneHiddenNet::zeros(2, 2, 1, true);
        let cfg = AttractionConfig {
            t_end: 5.0,
            ..AttractionConfig::default()
        };
        let o = probe(&sys, &v, &Region::ball(2, 4.0), &[0.1, 0.0], &cfg).unwrap();
        assert!(!o.converged);
    }
}
