//! δ-complete falsification by interval branch-and-bound.
//!
//! A query asks whether some point of a [`Region`] satisfies at least one
//! violation clause. Boxes are discarded when interval enclosures refute every
//! clause on them. A box of width at most δ whose centre satisfies the
//! δ-weakened region (radii relaxed by δ) and a δ-weakened open clause is
//! reported as a witness, as is any box whose centre violates a clause
//! exactly. The search is UNSAT exactly when every box has been discarded.

use super::expr::{ExprGraph, ExprId};
use super::interval::{Interval, IntervalBox};
use super::region::{Overlap, Region};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Boxes processed per parallel round. Fixed so the traversal order, and
/// therefore the verdict, does not depend on the worker count.
const CHUNK: usize = 64;

/// Scaled width below which an undecided box is given up on.
const MIN_SCALED_WIDTH: f64 = 1e-10;

/// One disjunct of a falsification formula.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Clause {
    /// Violated where `e(x) ≤ t`.
    AtMost(ExprId, f64),
    /// Violated where `e(x) ≥ t`.
    AtLeast(ExprId, f64),
}

impl Clause {
    fn expr(&self) -> ExprId {
        match *self {
            Clause::AtMost(e, _) | Clause::AtLeast(e, _) => e,
        }
    }

    fn refuted_by(&self, enc: Interval) -> bool {
        match *self {
            Clause::AtMost(_, t) => enc.lo > t,
            Clause::AtLeast(_, t) => enc.hi < t,
        }
    }

    fn weakly_holds(&self, value: f64, delta: f64) -> bool {
        match *self {
            Clause::AtMost(_, t) => value <= t + delta,
            Clause::AtLeast(_, t) => value >= t - delta,
        }
    }
}

/// `∃x ∈ region: clause₀(x) ∨ clause₁(x) ∨ …`
#[derive(Clone, Debug)]
pub struct Query<'a> {
    pub graph: &'a ExprGraph,
    pub region: Region,
    pub clauses: Vec<Clause>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FalsifyConfig {
    /// δ: slack on the clause thresholds and region predicates for witnesses;
    /// also the width bound on reported witness boxes.
    pub precision: f64,
    /// Maximum number of boxes processed before giving up.
    pub budget: u64,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for FalsifyConfig {
    fn default() -> Self {
        FalsifyConfig {
            precision: 0.01,
            budget: 20_000_000,
            workers: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Outcome {
    /// Every box was refuted.
    Unsat { leaves: u64 },
    /// A δ-weakened violation.
    DeltaSat {
        witness: IntervalBox,
        point: Vec<f64>,
        clause: usize,
        value: f64,
    },
    /// Budget exhausted, or boxes shrank to the width floor undecided.
    Unknown { worklist: usize, undecided: u64 },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchReport {
    pub outcome: Outcome,
    pub boxes_processed: u64,
    pub max_depth: u32,
}

enum Step {
    Refuted,
    Witness { point: Vec<f64>, clause: usize, value: f64 },
    Split(IntervalBox, IntervalBox),
    Undecided,
}

struct Node {
    b: IntervalBox,
    depth: u32,
    /// Bit i set: clause i already refuted on an ancestor.
    refuted: u64,
}

impl Query<'_> {
    pub fn search(&self, cfg: &FalsifyConfig) -> SearchReport {
        assert!(self.clauses.len() <= 64, "at most 64 clauses");
        assert!(cfg.precision > 0.0, "precision must be positive");
        match cfg.workers {
            Some(w) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(w.max(1))
                    .build()
                    .expect("thread pool");
                pool.install(|| self.run(cfg))
            }
            None => self.run(cfg),
        }
    }

    fn run(&self, cfg: &FalsifyConfig) -> SearchReport {
        let scale: Vec<f64> = self
            .region
            .bounds
            .0
            .iter()
            .map(|iv| iv.width().max(f64::MIN_POSITIVE))
            .collect();
        let mut stack = vec![Node {
            b: self.region.bounds.clone(),
            depth: 0,
            refuted: 0,
        }];
        let mut processed = 0u64;
        let mut leaves = 0u64;
        let mut undecided = 0u64;
        let mut max_depth = 0u32;
        while !stack.is_empty() {
            if processed >= cfg.budget {
                return SearchReport {
                    outcome: Outcome::Unknown {
                        worklist: stack.len(),
                        undecided,
                    },
                    boxes_processed: processed,
                    max_depth,
                };
            }
            let take = stack.len().min(CHUNK);
            let chunk: Vec<Node> = stack.split_off(stack.len() - take);
            let steps: Vec<(Step, u64)> = chunk
                .par_iter()
                .map(|node| self.step(node, &scale, cfg.precision))
                .collect();
            processed += take as u64;
            let mut children = Vec::new();
            for (node, (step, refuted)) in chunk.into_iter().zip(steps) {
                max_depth = max_depth.max(node.depth);
                match step {
                    Step::Refuted => leaves += 1,
                    Step::Undecided => undecided += 1,
                    Step::Witness { point, clause, value } => {
                        let witness = node.b.shrink_around(&point, 0.5 * cfg.precision);
                        return SearchReport {
                            outcome: Outcome::DeltaSat {
                                witness,
                                point,
                                clause,
                                value,
                            },
                            boxes_processed: processed,
                            max_depth,
                        };
                    }
                    Step::Split(a, b) => {
                        children.push(Node {
                            b,
                            depth: node.depth + 1,
                            refuted,
                        });
                        children.push(Node {
                            b: a,
                            depth: node.depth + 1,
                            refuted,
                        });
                    }
                }
            }
            stack.extend(children);
        }
        let outcome = if undecided > 0 {
            Outcome::Unknown { worklist: 0, undecided }
        } else {
            Outcome::Unsat { leaves }
        };
        SearchReport {
            outcome,
            boxes_processed: processed,
            max_depth,
        }
    }

    fn step(&self, node: &Node, scale: &[f64], delta: f64) -> (Step, u64) {
        let b = &node.b;
        if self.region.overlap(b) == Overlap::Disjoint {
            return (Step::Refuted, node.refuted);
        }
        let mut refuted = node.refuted;
        let all = if self.clauses.len() == 64 {
            u64::MAX
        } else {
            (1u64 << self.clauses.len()) - 1
        };

        // Cheap natural extension first, mean-value form only when needed.
        let natural = self.graph.eval_interval(b);
        for (i, c) in self.clauses.iter().enumerate() {
            if c.refuted_by(natural[c.expr().index()]) {
                refuted |= 1 << i;
            }
        }
        if refuted != all {
            let open: Vec<usize> = (0..self.clauses.len()).filter(|i| refuted & (1 << i) == 0).collect();
            let roots: Vec<ExprId> = open.iter().map(|&i| self.clauses[i].expr()).collect();
            let enc = self.graph.enclose(&roots, b);
            for (k, &i) in open.iter().enumerate() {
                if self.clauses[i].refuted_by(enc[k]) {
                    refuted |= 1 << i;
                }
            }
        }
        if refuted == all {
            return (Step::Refuted, refuted);
        }

        // A centre that violates an open clause exactly is a genuine
        // counterexample at any box size. Otherwise a box only becomes a
        // witness once it is no wider than δ and its centre satisfies the
        // δ-weakened formula.
        let c = b.center();
        let small = b.width() <= delta;
        if self.region.contains_weak(&c, if small { delta } else { 0.0 }) {
            let values = self.graph.eval_point(&c);
            let exact_region = self.region.contains(&c);
            for (i, cl) in self.clauses.iter().enumerate() {
                if refuted & (1 << i) != 0 {
                    continue;
                }
                let v = values[cl.expr().index()];
                let exact = exact_region && cl.weakly_holds(v, 0.0);
                if exact || (small && cl.weakly_holds(v, delta)) {
                    return (
                        Step::Witness {
                            point: c,
                            clause: i,
                            value: v,
                        },
                        refuted,
                    );
                }
            }
        }
        let dim = b.widest_scaled(scale);
        if b.0[dim].width() / scale[dim] < MIN_SCALED_WIDTH {
            return (Step::Undecided, refuted);
        }
        let (l, r) = b.bisect(dim);
        (Step::Split(l, r), refuted)
    }
}
