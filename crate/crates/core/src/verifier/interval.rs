//! Outward-rounded interval arithmetic.
//!
//! Every primitive rounds its result with [`f64::next_down`] / [`f64::next_up`]
//! after the nearest-rounded computation. Elementary functions from libm are
//! accurate to within one ulp on the platforms we target; they are widened by
//! [`TRANSCENDENTAL_ULPS`] on each side.

use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;
use std::ops::{Add, Div, Mul, Neg, Sub};

/// Widening applied to `sin`, `cos` and `tanh` endpoints, in ulps.
pub const TRANSCENDENTAL_ULPS: u32 = 4;

#[derive(Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

#[inline]
fn down(x: f64) -> f64 {
    x.next_down()
}

#[inline]
fn up(x: f64) -> f64 {
    x.next_up()
}

fn down_n(mut x: f64, n: u32) -> f64 {
    for _ in 0..n {
        x = x.next_down();
    }
    x
}

fn up_n(mut x: f64, n: u32) -> f64 {
    for _ in 0..n {
        x = x.next_up();
    }
    x
}

impl Interval {
    /// The whole real line. Returned by divisions through zero and by any
    /// operation that would otherwise produce NaN bounds.
    pub const ENTIRE: Interval = Interval {
        lo: f64::NEG_INFINITY,
        hi: f64::INFINITY,
    };

    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "inverted interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub const fn point(x: f64) -> Self {
        Interval { lo: x, hi: x }
    }

    /// Builds `[lo, hi]` from possibly-NaN bounds, falling back to ENTIRE.
    fn checked(lo: f64, hi: f64) -> Self {
        if lo.is_nan() || hi.is_nan() {
            Interval::ENTIRE
        } else {
            Interval { lo, hi }
        }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        if self.lo.is_finite() && self.hi.is_finite() {
            0.5 * self.lo + 0.5 * self.hi
        } else if self.lo.is_finite() {
            self.lo
        } else if self.hi.is_finite() {
            self.hi
        } else {
            0.0
        }
    }

    pub fn is_entire(&self) -> bool {
        self.lo == f64::NEG_INFINITY && self.hi == f64::INFINITY
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_finite() && self.hi.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_zero(&self) -> bool {
        self.contains(0.0)
    }

    pub fn encloses(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    /// Intersection, or `None` when disjoint.
    pub fn intersect(&self, other: &Interval) -> Option<Interval> {
        let lo = self.lo.max(other.lo);
        let hi = self.hi.min(other.hi);
        (lo <= hi).then_some(Interval { lo, hi })
    }

    pub fn hull(&self, other: &Interval) -> Interval {
        Interval {
            lo: self.lo.min(other.lo),
            hi: self.hi.max(other.hi),
        }
    }

    /// Largest absolute value in the interval.
    pub fn mag(&self) -> f64 {
        self.lo.abs().max(self.hi.abs())
    }

    pub fn sqr(self) -> Interval {
        let (a, b) = (self.lo.abs(), self.hi.abs());
        if self.contains_zero() {
            Interval::checked(0.0, up(a.max(b) * a.max(b)))
        } else {
            let (m, n) = if a < b { (a, b) } else { (b, a) };
            Interval::checked(down(m * m).max(0.0), up(n * n))
        }
    }

    pub fn abs(self) -> Interval {
        if self.lo >= 0.0 {
            self
        } else if self.hi <= 0.0 {
            -self
        } else {
            Interval::new(0.0, self.mag())
        }
    }

    pub fn tanh(self) -> Interval {
        let lo = down_n(self.lo.tanh(), TRANSCENDENTAL_ULPS).max(-1.0);
        let hi = up_n(self.hi.tanh(), TRANSCENDENTAL_ULPS).min(1.0);
        Interval::checked(lo, hi)
    }

    pub fn sin(self) -> Interval {
        if !self.is_bounded() || self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.sin(), self.hi.sin());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if contains_phase(self, FRAC_PI_2) {
            hi = 1.0;
        }
        if contains_phase(self, -FRAC_PI_2) {
            lo = -1.0;
        }
        Interval::checked(
            down_n(lo, TRANSCENDENTAL_ULPS).max(-1.0),
            up_n(hi, TRANSCENDENTAL_ULPS).min(1.0),
        )
    }

    pub fn cos(self) -> Interval {
        if !self.is_bounded() || self.width() >= TAU {
            return Interval::new(-1.0, 1.0);
        }
        let (a, b) = (self.lo.cos(), self.hi.cos());
        let mut lo = a.min(b);
        let mut hi = a.max(b);
        if contains_phase(self, 0.0) {
            hi = 1.0;
        }
        if contains_phase(self, PI) {
            lo = -1.0;
        }
        Interval::checked(
            down_n(lo, TRANSCENDENTAL_ULPS).max(-1.0),
            up_n(hi, TRANSCENDENTAL_ULPS).min(1.0),
        )
    }
}

/// Whether `x` contains some `phase + 2kπ`. Errs on the side of `true` near
/// the endpoints, which only loosens the enclosure.
fn contains_phase(x: Interval, phase: f64) -> bool {
    let slack = 1e-12 * (1.0 + x.mag());
    let k = ((x.lo - phase - slack) / TAU).ceil();
    let p = phase + k * TAU;
    p <= x.hi + slack
}

impl fmt::Debug for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:e}, {:e}]", self.lo, self.hi)
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

impl From<f64> for Interval {
    fn from(x: f64) -> Self {
        Interval::point(x)
    }
}

impl Neg for Interval {
    type Output = Interval;
    fn neg(self) -> Interval {
        Interval {
            lo: -self.hi,
            hi: -self.lo,
        }
    }
}

impl Add for Interval {
    type Output = Interval;
    fn add(self, rhs: Interval) -> Interval {
        Interval::checked(down(self.lo + rhs.lo), up(self.hi + rhs.hi))
    }
}

impl Sub for Interval {
    type Output = Interval;
    fn sub(self, rhs: Interval) -> Interval {
        Interval::checked(down(self.lo - rhs.hi), up(self.hi - rhs.lo))
    }
}

impl Mul for Interval {
    type Output = Interval;
    fn mul(self, rhs: Interval) -> Interval {
        if self.is_entire() || rhs.is_entire() {
            return Interval::ENTIRE;
        }
        if self.lo == self.hi && self.lo == 0.0 || rhs.lo == rhs.hi && rhs.lo == 0.0 {
            return Interval::point(0.0);
        }
        let p = [self.lo * rhs.lo, self.lo * rhs.hi, self.hi * rhs.lo, self.hi * rhs.hi];
        if p.iter().any(|v| v.is_nan()) {
            return Interval::ENTIRE;
        }
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::checked(down(lo), up(hi))
    }
}

impl Div for Interval {
    type Output = Interval;
    fn div(self, rhs: Interval) -> Interval {
        if rhs.contains_zero() || self.is_entire() {
            return Interval::ENTIRE;
        }
        let p = [self.lo / rhs.lo, self.lo / rhs.hi, self.hi / rhs.lo, self.hi / rhs.hi];
        if p.iter().any(|v| v.is_nan()) {
            return Interval::ENTIRE;
        }
        let lo = p.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Interval::checked(down(lo), up(hi))
    }
}

/// An axis-aligned box: one interval per coordinate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalBox(pub Vec<Interval>);

impl IntervalBox {
    pub fn new(dims: Vec<Interval>) -> Self {
        assert!(!dims.is_empty(), "boxes must have at least one dimension");
        IntervalBox(dims)
    }

    /// `[-r, r]^n`.
    pub fn cube(n: usize, r: f64) -> Self {
        IntervalBox::new(vec![Interval::new(-r, r); n])
    }

    pub fn from_bounds(lo: &[f64], hi: &[f64]) -> Self {
        IntervalBox::new(lo.iter().zip(hi).map(|(&a, &b)| Interval::new(a, b)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn width(&self) -> f64 {
        self.0.iter().map(Interval::width).fold(0.0, f64::max)
    }

    pub fn center(&self) -> Vec<f64> {
        self.0.iter().map(Interval::mid).collect()
    }

    pub fn lo(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.lo).collect()
    }

    pub fn hi(&self) -> Vec<f64> {
        self.0.iter().map(|i| i.hi).collect()
    }

    pub fn volume(&self) -> f64 {
        self.0.iter().map(Interval::width).product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.0.len() == x.len() && self.0.iter().zip(x).all(|(i, &v)| i.contains(v))
    }

    /// Dimension with the largest width after dividing by `scale[i]`.
    pub fn widest_scaled(&self, scale: &[f64]) -> usize {
        let mut best = 0;
        let mut best_w = f64::NEG_INFINITY;
        for (i, iv) in self.0.iter().enumerate() {
            let w = iv.width() / scale[i];
            if w > best_w {
                best = i;
                best_w = w;
            }
        }
        best
    }

    pub fn bisect(&self, dim: usize) -> (IntervalBox, IntervalBox) {
        let iv = self.0[dim];
        let m = iv.mid();
        let mut left = self.clone();
        let mut right = self.clone();
        left.0[dim] = Interval::new(iv.lo, m);
        right.0[dim] = Interval::new(m, iv.hi);
        (left, right)
    }

    /// Interval enclosure of `Σ x_i²` over the box.
    pub fn norm_sq(&self) -> Interval {
        self.0
            .iter()
            .map(|iv| iv.sqr())
            .fold(Interval::point(0.0), |acc, s| acc + s)
    }

    /// Intersection of this box with the cube of half-width `r` centred on `c`.
    pub fn shrink_around(&self, c: &[f64], r: f64) -> IntervalBox {
        IntervalBox(
            self.0
                .iter()
                .zip(c)
                .map(|(iv, &x)| {
                    let lo = iv.lo.max(x - r).min(x);
                    let hi = iv.hi.min(x + r).max(x);
                    Interval::new(lo, hi)
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tanh_is_monotone_enclosure() {
        let r = Interval::new(0.0, 1.0).tanh();
        assert!(r.lo <= 0.0 && r.hi >= 0.761_594_155_955_764_9);
        assert!(r.hi < 0.7616);
    }

    #[test]
    fn sin_over_half_period_hits_one() {
        let r = Interval::new(0.0, PI).sin();
        assert!(r.contains(1.0) && r.contains(0.0));
        assert!(r.lo > -1e-12 && r.hi <= 1.0);
    }

    #[test]
    fn cos_detects_trough() {
        let r = Interval::new(3.0, 3.3).cos();
        assert_eq!(r.lo, -1.0);
        let r = Interval::new(0.2, 0.4).cos();
        assert!(r.lo <= 0.4f64.cos() && r.hi >= 0.2f64.cos() && r.hi < 1.0);
    }

    #[test]
    fn division_through_zero_is_entire() {
        let r = Interval::new(1.0, 2.0) / Interval::new(-1.0, 1.0);
        assert!(r.is_entire());
        let r = Interval::new(1.0, 2.0) / Interval::new(2.0, 4.0);
        assert!(r.contains(0.25) && r.contains(1.0));
    }

    #[test]
    fn entire_times_zero_stays_sound() {
        let r = Interval::ENTIRE * Interval::new(0.0, 1.0);
        assert!(r.is_entire());
    }

    #[test]
    fn naive_quadratic_encloses_true_range() {
        // x² − x on [0, 1]: the natural extension gives [-1, 1].
        let x = Interval::new(0.0, 1.0);
        let r = x.sqr() - x;
        assert!(r.lo <= -1.0 + 1e-15 && r.hi >= 1.0 - 1e-15);
        for k in 0..=100 {
            let t = k as f64 / 100.0;
            assert!(r.contains(t * t - t));
        }
    }

    fn interval_strategy() -> impl Strategy<Value = Interval> {
        (-10.0f64..10.0, 0.0f64..5.0).prop_map(|(a, w)| Interval::new(a, a + w))
    }

    proptest! {
        #[test]
        fn primitives_enclose_points(
            a in interval_strategy(),
            b in interval_strategy(),
            s in 0.0f64..=1.0,
            t in 0.0f64..=1.0,
        ) {
            let x = a.lo + s * a.width();
            let y = b.lo + t * b.width();
            prop_assert!((a + b).contains(x + y));
            prop_assert!((a - b).contains(x - y));
            prop_assert!((a * b).contains(x * y));
            let q = a / b;
            if !b.contains_zero() {
                prop_assert!(q.contains(x / y));
            }
            prop_assert!(a.sqr().contains(x * x));
            prop_assert!(a.abs().contains(x.abs()));
            prop_assert!(a.sin().contains(x.sin()));
            prop_assert!(a.cos().contains(x.cos()));
            prop_assert!(a.tanh().contains(x.tanh()));
        }
    }
}
