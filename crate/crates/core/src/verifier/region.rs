use super::interval::IntervalBox;
use serde::{Deserialize, Serialize};

/// A box intersected with a spherical shell `inner² ≤ Σx_i² ≤ outer²`.
///
/// `inner = 0` and `outer = None` gives the plain box. A norm-ball domain is
/// `outer = Some(r)`; the verified annulus additionally sets `inner = ε`; a
/// sphere is `inner == outer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub bounds: IntervalBox,
    pub inner: f64,
    pub outer: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Overlap {
    Disjoint,
    Inside,
    Partial,
}

impl Region {
    pub fn boxed(bounds: IntervalBox) -> Self {
        Region {
            bounds,
            inner: 0.0,
            outer: None,
        }
    }

    /// The ball `‖x‖₂ ≤ r` with its enclosing cube.
    pub fn ball(n: usize, r: f64) -> Self {
        Region {
            bounds: IntervalBox::cube(n, r),
            inner: 0.0,
            outer: Some(r),
        }
    }

    /// The sphere `‖x‖₂ = r`.
    pub fn sphere(n: usize, r: f64) -> Self {
        Region {
            bounds: IntervalBox::cube(n, r),
            inner: r,
            outer: Some(r),
        }
    }

    pub fn with_inner(mut self, inner: f64) -> Self {
        self.inner = inner;
        self
    }

    pub fn dim(&self) -> usize {
        self.bounds.dim()
    }

    /// Classifies a sub-box of `bounds` against the shell predicates.
    pub fn overlap(&self, b: &IntervalBox) -> Overlap {
        if self.inner <= 0.0 && self.outer.is_none() {
            return Overlap::Inside;
        }
        let s = b.norm_sq();
        let inner2 = self.inner * self.inner;
        if let Some(r) = self.outer {
            if s.lo > r * r {
                return Overlap::Disjoint;
            }
        }
        if self.inner > 0.0 && s.hi < inner2 {
            return Overlap::Disjoint;
        }
        let outer_ok = self.outer.is_none_or(|r| s.hi <= r * r);
        let inner_ok = self.inner <= 0.0 || s.lo >= inner2;
        if outer_ok && inner_ok {
            Overlap::Inside
        } else {
            Overlap::Partial
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_weak(x, 0.0)
    }

    /// Membership with the shell radii relaxed outward by `slack`.
    pub fn contains_weak(&self, x: &[f64], slack: f64) -> bool {
        if !self.bounds.contains(x) {
            return false;
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        let outer_ok = self.outer.is_none_or(|r| norm <= r + slack);
        let inner_ok = norm >= self.inner - slack;
        outer_ok && inner_ok
    }

    /// A point of the region near `x`: `x` itself if it belongs, otherwise
    /// its radial projection onto the violated shell boundary when that lands
    /// inside the bounds.
    pub fn feasible_near(&self, x: &[f64]) -> Option<Vec<f64>> {
        if self.contains(x) {
            return Some(x.to_vec());
        }
        let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return None;
        }
        let target = match self.outer {
            Some(r) if norm > r => r,
            _ if norm < self.inner => self.inner,
            _ => return None,
        };
        // Pull slightly inside so rounding cannot push the point back out.
        let shrink = if target == self.inner && self.outer != Some(self.inner) {
            1.0 + 1e-12
        } else {
            1.0 - 1e-12
        };
        let y: Vec<f64> = x.iter().map(|v| v * target / norm * shrink).collect();
        if self.contains_weak(&y, 1e-9 * (1.0 + target)) {
            Some(y)
        } else {
            None
        }
    }
}
