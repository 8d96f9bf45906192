//! Interval-arithmetic falsifier for the Lyapunov conditions.
//!
//! The verifier decides
//!
//! ```text
//! ∃x ∈ D:  ‖x‖₂ ≥ ε  ∧  ( V(x) ≤ 0  ∨  ∇V(x)·f(x) ≥ −β )
//! ```
//!
//! by branch-and-bound over boxes. `Unsat` means the conditions are proven on
//! all of `D ∖ B_ε`. `DeltaSat` returns a point satisfying the formula with
//! every threshold relaxed by the precision δ.

pub mod expr;
pub mod falsify;
pub mod interval;
pub mod region;
pub mod sup;

pub use expr::{ExprGraph, ExprId, ExprNode};
pub use falsify::{Clause, FalsifyConfig, Outcome, Query, SearchReport};
pub use interval::{Interval, IntervalBox};
pub use region::{Overlap, Region};
pub use sup::{bound_extremum, bound_sup, ExtremumBound, Sense};

use serde::{Deserialize, Serialize};

/// The two disjuncts of the Lyapunov falsification formula.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolatedClause {
    /// `V(x) ≤ 0`
    NonPositive,
    /// `∇V·f ≥ −β`
    LieDerivative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Unsat {
        leaves: u64,
    },
    DeltaSat {
        witness_box: IntervalBox,
        point: Vec<f64>,
        violated_clause: ViolatedClause,
        value: f64,
    },
    Unknown {
        worklist: usize,
        undecided: u64,
    },
}

impl Verdict {
    pub fn is_unsat(&self) -> bool {
        matches!(self, Verdict::Unsat { .. })
    }

    pub fn witness(&self) -> Option<&[f64]> {
        match self {
            Verdict::DeltaSat { point, .. } => Some(point),
            _ => None,
        }
    }
}

/// A Lyapunov falsification problem: `V` and its Lie derivative as
/// expressions over the state, the domain, the excluded ball radius `ε`
/// (the check uses `Σx_i² ≥ ε²`) and the margin `β`.
#[derive(Clone, Debug)]
pub struct LyapunovQuery {
    pub graph: ExprGraph,
    pub v: ExprId,
    pub lie: ExprId,
    pub domain: Region,
    pub eps: f64,
    pub beta: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalsifyReport {
    pub verdict: Verdict,
    pub boxes_processed: u64,
    pub max_depth: u32,
    pub eps: f64,
    pub beta: f64,
    pub precision: f64,
}

impl LyapunovQuery {
    pub fn region(&self) -> Region {
        let mut r = self.domain.clone();
        r.inner = r.inner.max(self.eps);
        r
    }

    pub fn falsify(&self, cfg: &FalsifyConfig) -> FalsifyReport {
        let query = Query {
            graph: &self.graph,
            region: self.region(),
            clauses: vec![Clause::AtMost(self.v, 0.0), Clause::AtLeast(self.lie, -self.beta)],
        };
        let report = query.search(cfg);
        let verdict = match report.outcome {
            Outcome::Unsat { leaves } => Verdict::Unsat { leaves },
            Outcome::Unknown { worklist, undecided } => Verdict::Unknown { worklist, undecided },
            Outcome::DeltaSat {
                witness,
                point,
                clause,
                value,
            } => Verdict::DeltaSat {
                witness_box: witness,
                point,
                violated_clause: if clause == 0 {
                    ViolatedClause::NonPositive
                } else {
                    ViolatedClause::LieDerivative
                },
                value,
            },
        };
        FalsifyReport {
            verdict,
            boxes_processed: report.boxes_processed,
            max_depth: report.max_depth,
            eps: self.eps,
            beta: self.beta,
            precision: cfg.precision,
        }
    }

    /// Point values `(V(x), ∇V·f(x))`.
    pub fn point_values(&self, x: &[f64]) -> (f64, f64) {
        let v = self.graph.eval_point(x);
        (v[self.v.index()], v[self.lie.index()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `V = x₁² + s·x₂²` with `ẋ = −x`.
    fn quadratic(sign: f64) -> LyapunovQuery {
        let mut g = ExprGraph::new(2);
        let x = g.vars();
        let a = g.sqr(x[0]);
        let b = g.sqr(x[1]);
        let sb = g.scale(sign, b);
        let v = g.add(a, sb);
        // ∇V·f = 2x₁(−x₁) + 2s·x₂(−x₂)
        let l1 = g.scale(-2.0, a);
        let l2 = g.scale(-2.0 * sign, b);
        let lie = g.add(l1, l2);
        LyapunovQuery {
            graph: g,
            v,
            lie,
            domain: Region::boxed(IntervalBox::cube(2, 1.0)),
            eps: 0.1,
            beta: 0.0,
        }
    }

    #[test]
    fn quadratic_lyapunov_is_unsat() {
        let q = quadratic(1.0);
        let r = q.falsify(&FalsifyConfig::default());
        assert!(r.verdict.is_unsat(), "{:?}", r.verdict);
    }

    #[test]
    fn saddle_is_delta_sat_near_x2_axis() {
        let q = quadratic(-1.0);
        let r = q.falsify(&FalsifyConfig::default());
        let Verdict::DeltaSat { point, witness_box, .. } = &r.verdict else {
            panic!("expected a witness, got {:?}", r.verdict);
        };
        assert!(witness_box.width() <= 0.01 + 1e-15);
        let (v, lie) = q.point_values(point);
        assert!(v <= 0.01 || lie >= -0.01);
        // V(x) ≤ δ requires |x₂| ≥ |x₁| (up to δ).
        assert!(point[1].abs() + 0.1 >= point[0].abs());
    }

    #[test]
    fn verdict_independent_of_workers() {
        let q = quadratic(-1.0);
        let mut out = Vec::new();
        for w in [1, 4, 8] {
            let cfg = FalsifyConfig {
                workers: Some(w),
                ..FalsifyConfig::default()
            };
            out.push(serde_json::to_string(&q.falsify(&cfg).verdict).unwrap());
        }
        assert!(out.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn budget_exhaustion_is_unknown() {
        let q = quadratic(1.0);
        let cfg = FalsifyConfig {
            budget: 3,
            ..FalsifyConfig::default()
        };
        assert!(matches!(q.falsify(&cfg).verdict, Verdict::Unknown { .. }));
    }
}
