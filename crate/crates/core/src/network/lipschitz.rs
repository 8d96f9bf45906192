use super::OneHiddenNet;
use nalgebra::DMatrix;

/// Largest singular value by power iteration on the smaller Gram matrix,
/// stopped at 1e-10 relative change.
pub fn spectral_norm(w: &DMatrix<f64>) -> f64 {
    if w.is_empty() || w.iter().all(|v| *v == 0.0) {
        return 0.0;
    }
    let gram = if w.nrows() <= w.ncols() {
        w * w.transpose()
    } else {
        w.transpose() * w
    };
    let n = gram.nrows();
    // Start from the largest-norm column so we are never orthogonal to the
    // top eigenvector of a PSD Gram matrix with a non-zero diagonal.
    let start = (0..n)
        .max_by(|&a, &b| gram[(a, a)].total_cmp(&gram[(b, b)]))
        .unwrap_or(0);
    let mut v = gram.column(start).into_owned();
    let mut nv = v.norm();
    if nv == 0.0 {
        return 0.0;
    }
    v /= nv;
    let mut lambda = 0.0;
    for _ in 0..100_000 {
        let w = &gram * &v;
        let next = v.dot(&w);
        nv = w.norm();
        if nv == 0.0 {
            break;
        }
        v = w / nv;
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            lambda = next.max(nv.min(next * (1.0 + 1e-10)));
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

/// Sound 2-norm Lipschitz bound `‖W₂‖₂·‖W₁‖₂`. The hidden tanh and the
/// optional output tanh both have slope at most one.
pub fn lipschitz_upper(net: &OneHiddenNet) -> f64 {
    spectral_norm(&net.w2) * spectral_norm(&net.w1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_net_has_zero_bound() {
        assert_eq!(lipschitz_upper(&OneHiddenNet::zeros(2, 5, 2, false)), 0.0);
    }

    #[test]
    fn scalar_product_of_weights() {
        let net = OneHiddenNet::new(
            DMatrix::from_element(1, 1, 2.0),
            DVector::zeros(1),
            DMatrix::from_element(1, 1, 3.0),
            DVector::zeros(1),
            false,
        )
        .unwrap();
        assert!((lipschitz_upper(&net) - 6.0).abs() < 1e-12);
    }

    #[test]
    fn power_iteration_matches_svd() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let r = rng.gen_range(1..8);
            let c = rng.gen_range(1..8);
            let w = DMatrix::from_fn(r, c, |_, _| rng.gen_range(-2.0..2.0));
            let svd = w.clone().svd(false, false);
            let top = svd.singular_values.max();
            let p = spectral_norm(&w);
            assert!((p - top).abs() <= 1e-8 * top, "{p} vs {top}");
        }
    }

    #[test]
    fn bound_dominates_sampled_ratios() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let net = OneHiddenNet::init_uniform(2, 100, 2, false, &mut rng);
        let k = lipschitz_upper(&net);
        let mut worst: f64 = 0.0;
        for _ in 0..100_000 {
            let p: [f64; 2] = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let q: [f64; 2] = [p[0] + rng.gen_range(-0.1..0.1), p[1] + rng.gen_range(-0.1..0.1)];
            let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
            if d == 0.0 {
                continue;
            }
            let fp = net.eval(&p);
            let fq = net.eval(&q);
            let df = ((fp[0] - fq[0]).powi(2) + (fp[1] - fq[1]).powi(2)).sqrt();
            worst = worst.max(df / d);
        }
        assert!(worst <= k, "{worst} > {k}");
    }
}
