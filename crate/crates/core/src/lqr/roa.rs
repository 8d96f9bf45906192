use super::LqrSolution;
use crate::dynamics::ControlSystem;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LqrRoaConfig {
    /// Level sets scanned between 0 and the domain-limited level.
    pub levels: usize,
    /// Boundary points per level set.
    pub angles: usize,
    /// `(state index, bound)` caps `|x_i| < bound` on the ellipse.
    pub caps: Vec<(usize, f64)>,
}

impl Default for LqrRoaConfig {
    fn default() -> Self {
        LqrRoaConfig {
            levels: 400,
            angles: 720,
            caps: vec![],
        }
    }
}

impl LqrRoaConfig {
    /// Defaults for a named benchmark; the unicycle set is capped at
    /// small heading errors `|θ_e| < π/9`.
    pub fn for_system(name: &str) -> Self {
        let mut cfg = LqrRoaConfig::default();
        if name == "unicycle" {
            cfg.caps.push((1, std::f64::consts::PI / 9.0));
        }
        cfg
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LqrRoa {
    /// Largest sampled-admissible level of `xᵀPx`.
    pub c_star: f64,
    /// Level at which the ellipse touches the domain or a cap.
    pub c_limit: f64,
    pub domain_limited: bool,
    /// `π c / √det P` for planar systems.
    pub area: f64,
    /// Boundary points of `{xᵀPx = c*}`.
    pub ellipse: Vec<[f64; 2]>,
}

/// Points `x` with `xᵀPx = c` for planar `P`, through its Cholesky factor.
fn ellipse_points(p: &nalgebra::DMatrix<f64>, c: f64, count: usize) -> Vec<[f64; 2]> {
    let l = p.clone().cholesky().expect("P is positive definite").l();
    // xᵀPx = ‖Lᵀx‖², so x = L⁻ᵀ √c (cos t, sin t).
    let lt_inv = l.transpose().try_inverse().expect("triangular factor is invertible");
    (0..count)
        .map(|k| {
            let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
            let z = nalgebra::DVector::from_vec(vec![c.sqrt() * t.cos(), c.sqrt() * t.sin()]);
            let x = &lt_inv * z;
            [x[0], x[1]]
        })
        .collect()
}

/// Sampled region-of-attraction estimate for the saturated linear feedback
/// `u = clamp(u₀ − Kx, U)` on the true plant: the largest level `c` such
/// that `d/dt xᵀPx < 0` at every sampled point of every scanned level set
/// up to `c`. Comparison-grade only; nothing here is verified.
pub fn lqr_roa(sol: &LqrSolution, sys: &ControlSystem, cfg: &LqrRoaConfig) -> LqrRoa {
    assert_eq!(sys.state_dim, 2, "the LQR comparison set is planar");
    let p = &sol.p;
    let p_inv = p.clone().try_inverse().expect("P is invertible");
    let lam_min = p.clone().symmetric_eigenvalues().min();
    // Largest ellipse in the domain: a ball needs c ≤ r² λ_min(P); a box
    // needs c ≤ h_i² / (P⁻¹)_ii per coordinate.
    let mut c_limit = f64::INFINITY;
    if let Some(r) = sys.domain.outer {
        c_limit = c_limit.min(r * r * lam_min);
    }
    for (i, iv) in sys.domain.bounds.0.iter().enumerate() {
        let h = iv.lo.abs().min(iv.hi.abs());
        c_limit = c_limit.min(h * h / p_inv[(i, i)]);
    }
    for &(i, bound) in &cfg.caps {
        c_limit = c_limit.min(bound * bound / p_inv[(i, i)]);
    }
    let u_of = |x: &[f64]| -> Vec<f64> {
        (0..sys.input_dim)
            .map(|l| {
                let mut u = sys.equilibrium_shift[l];
                for j in 0..2 {
                    u -= sol.k[(l, j)] * x[j];
                }
                u.clamp(sys.input_box[l].0, sys.input_box[l].1)
            })
            .collect()
    };
    let decreasing = |c: f64| -> bool {
        ellipse_points(p, c, cfg.angles).iter().all(|x| {
            let Ok(f) = sys.rhs(x, &u_of(x)) else {
                return false;
            };
            let px0 = p[(0, 0)] * x[0] + p[(0, 1)] * x[1];
            let px1 = p[(1, 0)] * x[0] + p[(1, 1)] * x[1];
            2.0 * (px0 * f[0] + px1 * f[1]) < 0.0
        })
    };
    let mut c_star = 0.0;
    let mut limited = true;
    for k in 1..=cfg.levels {
        let c = c_limit * k as f64 / cfg.levels as f64;
        if decreasing(c) {
            c_star = c;
        } else {
            limited = false;
            break;
        }
    }
    let det = p.determinant();
    LqrRoa {
        c_star,
        c_limit,
        domain_limited: limited,
        area: std::f64::consts::PI * c_star / det.sqrt(),
        ellipse: if c_star > 0.0 {
            ellipse_points(p, c_star, cfg.angles)
        } else {
            vec![]
        },
    }
}

#[cfg(test)]
mod tests {
    use super::super::{linearize, solve_care};
    use super::*;
    use crate::dynamics::{linear, pendulum, unicycle, vanderpol};
    use nalgebra::DMatrix;

    fn lqr(sys: &ControlSystem) -> LqrSolution {
        let lin = linearize(sys).unwrap();
        let n = sys.state_dim;
        let m = sys.input_dim;
        solve_care(&lin, &DMatrix::identity(n, n), &DMatrix::identity(m, m)).unwrap()
    }

    #[test]
    fn linear_loop_is_domain_limited() {
        let sys = linear(
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
            1.0,
            100.0,
        )
        .unwrap();
        let sol = lqr(&sys);
        let r = lqr_roa(&sol, &sys, &LqrRoaConfig::default());
        assert!(r.domain_limited);
        assert!((r.c_star - r.c_limit).abs() < 1e-12);
    }

    #[test]
    fn vanderpol_ellipse_is_inside_limit_cycle() {
        let sys = vanderpol();
        let sol = lqr(&sys);
        let r = lqr_roa(&sol, &sys, &LqrRoaConfig::default());
        assert!(r.c_star > 0.0 && r.c_star.is_finite());
        // The limit cycle crosses the x₁ axis near |x₁| ≈ 2; the ellipse
        // must stay well inside, and inside the domain.
        assert!(r
            .ellipse
            .iter()
            .all(|x| (x[0] * x[0] + x[1] * x[1]).sqrt() <= 1.2 + 1e-9));
    }

    #[test]
    fn scaling_weights_keeps_the_set() {
        let sys = pendulum();
        let lin = linearize(&sys).unwrap();
        let a = solve_care(&lin, &DMatrix::identity(2, 2), &DMatrix::identity(1, 1)).unwrap();
        let b = solve_care(&lin, &(DMatrix::identity(2, 2) * 3.0), &(DMatrix::identity(1, 1) * 3.0)).unwrap();
        let cfg = LqrRoaConfig::default();
        let ra = lqr_roa(&a, &sys, &cfg);
        let rb = lqr_roa(&b, &sys, &cfg);
        assert!((ra.area - rb.area).abs() < 1e-6 * ra.area);
        assert!((rb.c_star / ra.c_star - 3.0).abs() < 1e-6);
    }

    #[test]
    fn unicycle_cap_applies() {
        let sys = unicycle();
        let sol = lqr(&sys);
        let r = lqr_roa(&sol, &sys, &LqrRoaConfig::for_system("unicycle"));
        let cap = std::f64::consts::PI / 9.0;
        assert!(r.ellipse.iter().all(|x| x[1].abs() <= cap + 1e-9));
    }
}
