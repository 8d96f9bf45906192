use super::ControlSystem;
use crate::verifier::{ExprGraph, Interval, IntervalBox, Overlap};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Certified bounds on `sup ‖J_f‖₂` over `D × U`.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct JacobianBound {
    /// `sup ‖J‖_F`
    pub frobenius: f64,
    /// `√n · sup ‖J‖_∞` with `n` output rows.
    pub sqrt_rows_inf: f64,
}

impl JacobianBound {
    pub fn best(&self) -> f64 {
        self.frobenius.min(self.sqrt_rows_inf)
    }
}

/// Largest ratio `‖f(p) − f(q)‖ / ‖p − q‖` over random pairs in `D × U`.
/// Half the pairs are independent, half are local perturbations, which is
/// where the ratio approaches the Jacobian norm.
pub fn empirical_lipschitz(sys: &ControlSystem, n_pairs: usize, seed: u64) -> f64 {
    let n = sys.state_dim;
    let (lo, hi) = sys.state_input_bounds();
    let d = lo.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw = |rng: &mut ChaCha8Rng| loop {
        let p: Vec<f64> = (0..d).map(|i| rng.gen_range(lo[i]..hi[i])).collect();
        if sys.domain.contains(&p[..n]) && sys.rhs(&p[..n], &p[n..]).is_ok() {
            return p;
        }
    };
    let mut worst: f64 = 0.0;
    for k in 0..n_pairs {
        let p = draw(&mut rng);
        let q = if k % 2 == 0 {
            draw(&mut rng)
        } else {
            let r = 1e-3 * (0..d).map(|i| hi[i] - lo[i]).fold(0.0, f64::max);
            let q: Vec<f64> = p
                .iter()
                .enumerate()
                .map(|(i, v)| (v + rng.gen_range(-r..r)).clamp(lo[i], hi[i]))
                .collect();
            if !sys.domain.contains(&q[..n]) || sys.rhs(&q[..n], &q[n..]).is_err() {
                continue;
            }
            q
        };
        let dist = p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            continue;
        }
        let fp = sys.rhs_unchecked(&p[..n], &p[n..]);
        let fq = sys.rhs_unchecked(&q[..n], &q[n..]);
        let df = fp.iter().zip(&fq).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst = worst.max(df / dist);
    }
    worst
}

/// Interval bound on the Jacobian norm over `D × U`, splitting the
/// bounding box into `splits` cells per dimension and skipping cells whose
/// state part misses `D`.
pub fn jacobian_norm_bound(sys: &ControlSystem, splits: usize) -> JacobianBound {
    let n = sys.state_dim;
    let (lo, hi) = sys.state_input_bounds();
    let d = lo.len();
    let mut g = ExprGraph::new(d);
    let v = g.vars();
    let f = sys.rhs_exprs(&mut g, &v[..n], &v[n..]);
    let splits = splits.max(1);
    let cells = splits.pow(d as u32);
    let mut frob: f64 = 0.0;
    let mut inf: f64 = 0.0;
    for mut k in 0..cells {
        let mut dims = Vec::with_capacity(d);
        for i in 0..d {
            let c = k % splits;
            k /= splits;
            let w = (hi[i] - lo[i]) / splits as f64;
            dims.push(Interval::new(lo[i] + c as f64 * w, lo[i] + (c + 1) as f64 * w));
        }
        let state = IntervalBox::new(dims[..n].to_vec());
        if sys.domain.overlap(&state) == Overlap::Disjoint {
            continue;
        }
        let jet = g.eval_jet(&IntervalBox::new(dims));
        let mut fsum = Interval::point(0.0);
        for &fi in &f {
            let row = jet.grad(fi);
            let mut rsum = Interval::point(0.0);
            for e in row {
                fsum = fsum + e.sqr();
                rsum = rsum + e.abs();
            }
            inf = inf.max(rsum.hi);
        }
        frob = frob.max(fsum.hi.sqrt());
    }
    JacobianBound {
        frobenius: frob,
        sqrt_rows_inf: (n as f64).sqrt() * inf,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{pendulum, unicycle, vanderpol};
    use super::*;

    #[test]
    fn published_constants_dominate_sampled_ratios() {
        for sys in [vanderpol(), unicycle(), pendulum()] {
            let est = empirical_lipschitz(&sys, 100_000, 1);
            assert!(
                est <= sys.jacobian_bound,
                "{}: {est} > {}",
                sys.name,
                sys.jacobian_bound
            );
            assert!(
                est > 0.5 * sys.jacobian_bound || sys.name == "unicycle",
                "{}: {est}",
                sys.name
            );
        }
    }

    #[test]
    fn interval_bound_dominates_samples() {
        for sys in [vanderpol(), unicycle(), pendulum()] {
            let b = jacobian_norm_bound(&sys, 16);
            let est = empirical_lipschitz(&sys, 20_000, 5);
            assert!(b.best() >= est, "{}: {:?} < {est}", sys.name, b);
        }
    }

    #[test]
    fn pendulum_bound_is_tight() {
        // At θ = 0, J = [[0,1,0],[19.62,−2.667,26.667]]: ‖J‖₂ ≈ 33.2140 and
        // ‖J‖_F ≈ 33.229.
        let b = jacobian_norm_bound(&pendulum(), 64);
        assert!(b.frobenius >= 33.214 && b.frobenius < 33.25, "{b:?}");
    }
}
