//! Best-first branch-and-bound enclosure of an expression's supremum.

use super::expr::{ExprGraph, ExprId};
use super::interval::{Interval, IntervalBox};
use super::region::{Overlap, Region};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    Max,
    Min,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExtremumBound {
    /// For `Max`: `[best point value, certified upper bound]`.
    /// For `Min`: `[certified lower bound, best point value]`.
    pub enclosure: Interval,
    pub argbest: Option<Vec<f64>>,
    /// The budget ran out before the relative tolerance was met. The
    /// certified side of `enclosure` is still sound.
    pub loose: bool,
    pub boxes: u64,
}

impl ExtremumBound {
    /// The sound side: an upper bound of the sup, or lower bound of the inf.
    pub fn certified(&self, sense: Sense) -> f64 {
        match sense {
            Sense::Max => self.enclosure.hi,
            Sense::Min => self.enclosure.lo,
        }
    }
}

struct Entry {
    key: f64,
    b: IntervalBox,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.key.total_cmp(&other.key) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key.total_cmp(&other.key)
    }
}

/// Encloses `sup e` (or `inf e`) over `region` until the gap between the
/// best sampled value and the certified bound is at most
/// `rel_tol · max(|best|, abs_floor)`, or `budget` boxes have been examined.
pub fn bound_extremum(
    graph: &ExprGraph,
    e: ExprId,
    region: &Region,
    sense: Sense,
    rel_tol: f64,
    abs_floor: f64,
    budget: u64,
) -> ExtremumBound {
    assert!(rel_tol > 0.0, "rel_tol must be positive");
    // Work with g = ±e so that we always maximise.
    let sign = match sense {
        Sense::Max => 1.0,
        Sense::Min => -1.0,
    };
    let upper = |b: &IntervalBox| -> f64 {
        let enc = graph.enclose(&[e], b)[0];
        if sign > 0.0 {
            enc.hi
        } else {
            -enc.lo
        }
    };
    let point = |x: &[f64]| sign * graph.value_at(e, x);

    let mut best = f64::NEG_INFINITY;
    let mut argbest = None;
    let mut heap = BinaryHeap::new();
    let root = region.bounds.clone();
    if region.overlap(&root) != Overlap::Disjoint {
        heap.push(Entry {
            key: upper(&root),
            b: root,
        });
    }
    let mut boxes = 0u64;
    let mut loose = false;
    while let Some(top) = heap.peek() {
        let ub = top.key;
        let gap_ok = best.is_finite() && ub - best <= rel_tol * best.abs().max(abs_floor);
        if gap_ok {
            break;
        }
        if boxes >= budget {
            loose = true;
            break;
        }
        let Entry { b, .. } = heap.pop().expect("peeked");
        boxes += 1;
        if let Some(p) = region.feasible_near(&b.center()) {
            let v = point(&p);
            if v > best {
                best = v;
                argbest = Some(p);
            }
        }
        let dim = b.widest_scaled(&scale_of(region));
        if b.0[dim].width() == 0.0 {
            continue;
        }
        let (l, r) = b.bisect(dim);
        for child in [l, r] {
            if region.overlap(&child) == Overlap::Disjoint {
                continue;
            }
            let key = upper(&child);
            if key > best {
                heap.push(Entry { key, b: child });
            }
        }
    }
    let ub = heap.peek().map_or(best, |t| t.key.max(best));
    let (lo, hi) = if sign > 0.0 { (best, ub) } else { (-ub, -best) };
    let enclosure = if lo <= hi {
        Interval::new(lo, hi)
    } else {
        Interval::new(hi, lo)
    };
    ExtremumBound {
        enclosure,
        argbest,
        loose,
        boxes,
    }
}

fn scale_of(region: &Region) -> Vec<f64> {
    region
        .bounds
        .0
        .iter()
        .map(|iv| iv.width().max(f64::MIN_POSITIVE))
        .collect()
}

/// Supremum of `e` over `region`, enclosed to relative tolerance `rel_tol`.
pub fn bound_sup(graph: &ExprGraph, e: ExprId, region: &Region, rel_tol: f64) -> ExtremumBound {
    bound_extremum(graph, e, region, Sense::Max, rel_tol, 1e-12, 2_000_000)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sup_of_sin_on_half_period() {
        let mut g = ExprGraph::new(1);
        let x = g.var(0);
        let s = g.sin(x);
        let region = Region::boxed(IntervalBox::new(vec![Interval::new(0.0, PI)]));
        let r = bound_sup(&g, s, &region, 1e-6);
        assert!(!r.loose);
        assert!(r.enclosure.hi >= 1.0 && r.enclosure.hi <= 1.0 + 1e-9);
        assert!(r.enclosure.lo >= 1.0 - 1e-6);
    }

    #[test]
    fn constant_is_exact() {
        let mut g = ExprGraph::new(2);
        let c = g.constant(0.75);
        let r = bound_sup(&g, c, &Region::ball(2, 1.0), 1e-9);
        assert_eq!(r.enclosure.lo, 0.75);
        assert!(r.enclosure.hi - 0.75 < 1e-15);
    }

    #[test]
    fn inf_of_norm_on_annulus() {
        let mut g = ExprGraph::new(2);
        let n = g.norm_sq();
        let region = Region::ball(2, 1.0).with_inner(0.5);
        let r = bound_extremum(&g, n, &region, Sense::Min, 1e-4, 1e-12, 1_000_000);
        assert!(r.enclosure.lo <= 0.25 && r.enclosure.lo > 0.25 * (1.0 - 1e-3));
    }
}
