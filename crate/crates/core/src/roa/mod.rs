//! Certified sublevel sets of a Lyapunov candidate, their area, and
//! simulation-based checks of attraction.

mod attraction;
mod grid;

pub use attraction::{empirical_attraction, probe, AttractionConfig, AttractionReport, ProbeOutcome};
pub use grid::export_grid;

use crate::network::expr::net_exprs;
use crate::network::OneHiddenNet;
use crate::verifier::{
    bound_extremum, Clause, ExprGraph, ExprId, FalsifyConfig, Interval, IntervalBox, Outcome, Query, Region, Sense,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LevelConfig {
    pub iterations: usize,
    /// Falsifier δ for the boundary queries.
    pub precision: f64,
    pub budget: u64,
    /// Radius of the uncertified ball, for the inclusion-chain check.
    pub eps: f64,
    pub area_samples: usize,
    pub seed: u64,
}

impl Default for LevelConfig {
    fn default() -> Self {
        LevelConfig {
            iterations: 20,
            precision: 1e-3,
            budget: 2_000_000,
            eps: 0.0,
            area_samples: 1_000_000,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSetResult {
    /// Largest level proven to stay off the domain boundary; 0 when none is.
    pub c_star: f64,
    /// Smallest level seen to fail.
    pub c_fail: f64,
    pub degenerate: bool,
    /// `{V ≤ c*} ∩ D` is certified to avoid the boundary of `D`.
    pub containment: bool,
    pub area: f64,
    pub area_stderr: f64,
    /// Level below which `{V ≤ c₁} ⊂ B_ε` (certified infimum of `V` on `D ∖ B_ε`).
    pub c1: f64,
    /// Level above which `B_ε ⊂ {V ≤ c₂}` (certified supremum of `V` on `B_ε`).
    pub c2: f64,
    /// `0 < c₁ < c₂`.
    pub sandwich: bool,
    pub queries: usize,
}

/// Boundary pieces of `domain`: its outer sphere, or the faces of a box.
pub fn boundary_regions(domain: &Region) -> Vec<Region> {
    if let Some(r) = domain.outer {
        return vec![Region {
            bounds: domain.bounds.clone(),
            inner: r,
            outer: Some(r),
        }];
    }
    let mut out = Vec::new();
    for i in 0..domain.dim() {
        for side in [domain.bounds.0[i].lo, domain.bounds.0[i].hi] {
            let mut b = domain.bounds.clone();
            b.0[i] = Interval::new(side, side);
            out.push(Region {
                bounds: b,
                inner: domain.inner,
                outer: None,
            });
        }
    }
    out
}

fn v_graph(v: &OneHiddenNet) -> (ExprGraph, ExprId) {
    let mut g = ExprGraph::new(v.input_dim());
    let x = g.vars();
    let e = net_exprs(&mut g, v, &x)[0];
    (g, e)
}

/// No point of the boundary of `domain` has `V ≤ c`.
pub fn level_admissible(g: &ExprGraph, v: ExprId, boundary: &[Region], c: f64, cfg: &FalsifyConfig) -> bool {
    boundary.iter().all(|r| {
        let q = Query {
            graph: g,
            region: r.clone(),
            clauses: vec![Clause::AtMost(v, c)],
        };
        matches!(q.search(cfg).outcome, Outcome::Unsat { .. })
    })
}

/// Points of a boundary piece on a regular parametrisation, for an upper
/// estimate of `min V` there.
fn boundary_samples(r: &Region, count: usize) -> Vec<Vec<f64>> {
    let n = r.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let lo = r.bounds.lo();
    let hi = r.bounds.hi();
    (0..count)
        .filter_map(|_| {
            let p: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(a, b)| if a == b { *a } else { rng.gen_range(*a..*b) })
                .collect();
            match r.outer {
                Some(rad) if r.inner == rad => {
                    let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
                    (norm > 0.0).then(|| p.iter().map(|x| x * rad / norm).collect())
                }
                _ => r.contains(&p).then_some(p),
            }
        })
        .filter(|p: &Vec<f64>| p.len() == n && r.bounds.contains(p))
        .collect()
}

/// Monte-Carlo area (volume) of `{x ∈ D : V(x) ≤ c}` and its standard error.
pub fn level_set_area(v: &OneHiddenNet, domain: &Region, c: f64, samples: usize, seed: u64) -> (f64, f64) {
    let (g, e) = v_graph(v);
    level_set_area_expr(&g, e, domain, c, samples, seed)
}

pub fn level_set_area_expr(g: &ExprGraph, e: ExprId, domain: &Region, c: f64, samples: usize, seed: u64) -> (f64, f64) {
    if samples == 0 {
        return (0.0, 0.0);
    }
    let lo = domain.bounds.lo();
    let hi = domain.bounds.hi();
    let vol = domain.bounds.volume();
    const CHUNK: usize = 10_000;
    let chunks = samples.div_ceil(CHUNK);
    let hits: usize = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let count = CHUNK.min(samples - k * CHUNK);
            (0..count)
                .filter(|_| {
                    let p: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| rng.gen_range(*a..*b)).collect();
                    domain.contains(&p) && g.value_at(e, &p) <= c
                })
                .count()
        })
        .sum();
    let p = hits as f64 / samples as f64;
    (vol * p, vol * (p * (1.0 - p) / samples as f64).sqrt())
}

/// Largest level `c*` for which the falsifier proves that `{V ≤ c*}` does
/// not meet the boundary of `domain`, by bisection between 0 and the
/// smallest boundary value found by sampling. Also reports the levels of
/// the inclusion chain `{V ≤ c₁} ⊂ B_ε ⊂ {V ≤ c₂}` and the Monte-Carlo area.
pub fn largest_level(v: &OneHiddenNet, domain: &Region, cfg: &LevelConfig) -> LevelSetResult {
    let (g, e) = v_graph(v);
    largest_level_expr(&g, e, domain, cfg)
}

/// [`largest_level`] for any scalar expression `e`.
pub fn largest_level_expr(g: &ExprGraph, e: ExprId, domain: &Region, cfg: &LevelConfig) -> LevelSetResult {
    let fcfg = FalsifyConfig {
        precision: cfg.precision,
        budget: cfg.budget,
        workers: None,
    };
    let boundary = boundary_regions(domain);
    let mut c_fail = f64::INFINITY;
    for r in &boundary {
        for p in boundary_samples(r, 4096) {
            c_fail = c_fail.min(g.value_at(e, &p));
        }
    }
    let mut queries = 1;
    let mut lo = 0.0;
    let degenerate = !c_fail.is_finite() || c_fail <= 0.0 || !level_admissible(g, e, &boundary, 0.0, &fcfg);
    if !degenerate {
        for _ in 0..cfg.iterations {
            let mid = 0.5 * (lo + c_fail);
            queries += 1;
            if level_admissible(g, e, &boundary, mid, &fcfg) {
                lo = mid;
            } else {
                c_fail = mid;
            }
        }
    }
    let c_star = lo;
    let (area, area_stderr) = if degenerate {
        (0.0, 0.0)
    } else {
        level_set_area_expr(g, e, domain, c_star, cfg.area_samples, cfg.seed)
    };

    let (c1, c2) = if cfg.eps > 0.0 {
        let annulus = domain.clone().with_inner(cfg.eps);
        let inf = bound_extremum(g, e, &annulus, Sense::Min, 1e-4, 1e-9, cfg.budget).certified(Sense::Min);
        let ball = Region {
            bounds: IntervalBox::cube(domain.dim(), cfg.eps),
            inner: 0.0,
            outer: Some(cfg.eps),
        };
        let sup = bound_extremum(g, e, &ball, Sense::Max, 1e-4, 1e-9, cfg.budget).certified(Sense::Max);
        (inf - inf.abs() * 1e-12, sup)
    } else {
        (0.0, 0.0)
    };
    LevelSetResult {
        c_star,
        c_fail,
        degenerate,
        containment: !degenerate,
        area,
        area_stderr,
        c1,
        c2,
        sandwich: c1 > 0.0 && c1 < c2,
        queries,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certificate::shipped;

    #[test]
    fn quadratic_on_unit_disk() {
        let mut g = ExprGraph::new(2);
        let e = g.norm_sq();
        let cfg = LevelConfig {
            area_samples: 200_000,
            ..LevelConfig::default()
        };
        let r = largest_level_expr(&g, e, &Region::ball(2, 1.0), &cfg);
        assert!(!r.degenerate);
        // Witnesses may sit δ outside the circle and δ above the level.
        assert!(r.c_star < 1.0 && r.c_star > 1.0 - 3.0 * cfg.precision, "{}", r.c_star);
        let pi = std::f64::consts::PI;
        assert!((r.area - pi * r.c_star).abs() < 4.0 * r.area_stderr, "{r:?}");
    }

    #[test]
    fn admissibility_is_monotone() {
        let c = shipped("pendulum").unwrap();
        let dom = Region::ball(2, 4.0);
        let (g, e) = v_graph(&c.v);
        let b = boundary_regions(&dom);
        let cfg = FalsifyConfig {
            precision: 1e-3,
            ..FalsifyConfig::default()
        };
        let levels = [0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99];
        let ok: Vec<bool> = levels.iter().map(|&c| level_admissible(&g, e, &b, c, &cfg)).collect();
        for w in ok.windows(2) {
            assert!(w[0] || !w[1], "{ok:?}");
        }
    }

    #[test]
    fn box_domains_use_faces() {
        let d = Region::boxed(IntervalBox::cube(2, 1.0));
        let f = boundary_regions(&d);
        assert_eq!(f.len(), 4);
        assert!(f.iter().all(|r| r.bounds.0.iter().any(|iv| iv.width() == 0.0)));
    }

    #[test]
    fn pendulum_inclusion_chain() {
        let c = shipped("pendulum").unwrap();
        let cfg = LevelConfig {
            eps: 0.4,
            area_samples: 10_000,
            ..LevelConfig::default()
        };
        let r = largest_level(&c.v, &Region::ball(2, 4.0), &cfg);
        assert!(r.c1 < r.c2, "{r:?}");
        // c₂ bounds V on B_ε from above, c₁ bounds it outside from below.
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20_000 {
            let p: [f64; 2] = [rng.gen_range(-4.0..4.0), rng.gen_range(-4.0..4.0)];
            let n = (p[0] * p[0] + p[1] * p[1]).sqrt();
            let val = c.v.eval(&p)[0];
            if n <= 0.4 {
                assert!(val <= r.c2);
            } else if n <= 4.0 {
                assert!(val > r.c1);
            }
        }
    }

    #[test]
    fn area_of_full_box_level() {
        let v = OneHiddenNet::zeros(2, 3, 1, true);
        let d = Region::boxed(IntervalBox::cube(2, 1.0));
        let (a, s) = level_set_area(&v, &d, 0.0, 10_000, 1);
        assert_eq!(a, 4.0);
        assert_eq!(s, 0.0);
    }
}
