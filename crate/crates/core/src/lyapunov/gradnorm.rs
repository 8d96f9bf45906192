use crate::network::expr::lyapunov_exprs;
use crate::network::OneHiddenNet;
use crate::verifier::{Clause, ExprGraph, FalsifyConfig, Outcome, Query, Region};
use serde::{Deserialize, Serialize};

/// Certified bound `M ≥ sup_D ‖∂V/∂x‖₂`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradNormBound {
    /// Sound upper bound.
    pub m: f64,
    /// Largest value seen at a point, a lower bound on the supremum.
    pub lower: f64,
    /// No falsifier call succeeded; `m` is the plain interval bound.
    pub loose: bool,
    pub queries: usize,
}

/// Smallest `M` (to 5% relative) for which the falsifier proves
/// `¬∃x ∈ D: ‖∂V/∂x‖₂² ≥ M²`.
///
/// The search starts from the largest gradient norm on a grid over `D` and
/// the natural interval bound over the whole domain box, then bisects
/// geometrically.
pub fn gradient_norm_bound(v: &OneHiddenNet, domain: &Region, cfg: &FalsifyConfig) -> GradNormBound {
    let n = v.input_dim();
    let mut g = ExprGraph::new(n);
    let x = g.vars();
    let ly = lyapunov_exprs(&mut g, v, &x);
    let gn = ly.grad_norm_sq(&mut g);
    let natural = g.eval_interval(&domain.bounds)[gn.index()].hi.max(0.0).sqrt();

    let mut lower: f64 = 0.0;
    let per_dim: usize = if n <= 2 { 200 } else { 20 };
    let lo = domain.bounds.lo();
    let hi_b = domain.bounds.hi();
    let total = per_dim.pow(n as u32);
    for mut k in 0..total {
        let p: Vec<f64> = (0..n)
            .map(|i| {
                let c = k % per_dim;
                k /= per_dim;
                lo[i] + (c as f64 + 0.5) * (hi_b[i] - lo[i]) / per_dim as f64
            })
            .collect();
        if domain.contains(&p) {
            lower = lower.max(g.value_at(gn, &p).max(0.0).sqrt());
        }
    }
    if natural <= 1e-9 {
        return GradNormBound {
            m: natural,
            lower,
            loose: false,
            queries: 0,
        };
    }
    let mut hi = natural;
    let mut lo_m = lower.max(natural * 1e-6);
    let mut proved = false;
    let mut queries = 0;
    while hi > 1.05 * lo_m {
        let mid = (hi * lo_m).sqrt();
        let q = Query {
            graph: &g,
            region: domain.clone(),
            clauses: vec![Clause::AtLeast(gn, mid * mid)],
        };
        queries += 1;
        match q.search(cfg).outcome {
            Outcome::Unsat { .. } => {
                hi = mid;
                proved = true;
            }
            Outcome::DeltaSat { .. } | Outcome::Unknown { .. } => lo_m = mid,
        }
    }
    GradNormBound {
        m: hi,
        lower,
        loose: !proved,
        queries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::shipped;
    use crate::network::lipschitz_upper;

    #[test]
    fn zero_net_bound_is_zero() {
        let v = OneHiddenNet::zeros(2, 6, 1, true);
        let b = gradient_norm_bound(&v, &Region::ball(2, 1.0), &FalsifyConfig::default());
        assert!(b.m < 1e-9);
    }

    #[test]
    fn shipped_bounds_are_sound_and_tight() {
        for s in ["vanderpol", "unicycle", "pendulum"] {
            let c = shipped(s).unwrap();
            let dom = crate::dynamics::by_name(s).unwrap().domain;
            let b = gradient_norm_bound(&c.v, &dom, &FalsifyConfig::default());
            assert!(!b.loose, "{s}");
            assert!(b.m >= b.lower && b.m <= 1.05 * b.lower * 1.0001, "{s}: {b:?}");
            // The spectral bound is a global bound on the same quantity.
            assert!(b.m <= lipschitz_upper(&c.v) * 1.0001, "{s}");
        }
    }
}
