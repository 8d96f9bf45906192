//! Expression DAGs over the state variables.
//!
//! Nodes are stored in topological order, so every evaluator is a single
//! forward sweep. Shared subexpressions (hidden activations reused by a
//! network's value and its gradient) are built once and referenced by id.

use super::interval::{Interval, IntervalBox};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ExprId(u32);

impl ExprId {
    /// Position in the owning graph's node list.
    pub fn index(self) -> usize {
        self.0 as usize
    }

    fn idx(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ExprNode {
    Const(f64),
    Var(usize),
    Add(ExprId, ExprId),
    Sub(ExprId, ExprId),
    Mul(ExprId, ExprId),
    Div(ExprId, ExprId),
    Neg(ExprId),
    Sin(ExprId),
    Cos(ExprId),
    Tanh(ExprId),
    Sqr(ExprId),
    Abs(ExprId),
    /// `Σ a_k · b_k`
    Dot(Vec<(ExprId, ExprId)>),
}

#[derive(Clone, Debug)]
pub struct ExprGraph {
    n_vars: usize,
    nodes: Vec<ExprNode>,
    constant_nodes: Vec<bool>,
    const_cache: HashMap<u64, ExprId>,
}

/// Interval values plus interval partial derivatives for every node.
pub struct IntervalJet {
    n_vars: usize,
    pub values: Vec<Interval>,
    grads: Vec<Interval>,
}

impl IntervalJet {
    pub fn value(&self, id: ExprId) -> Interval {
        self.values[id.idx()]
    }

    pub fn grad(&self, id: ExprId) -> &[Interval] {
        let s = id.idx() * self.n_vars;
        &self.grads[s..s + self.n_vars]
    }
}

impl ExprGraph {
    pub fn new(n_vars: usize) -> Self {
        ExprGraph {
            n_vars,
            nodes: Vec::new(),
            constant_nodes: Vec::new(),
            const_cache: HashMap::new(),
        }
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: ExprId) -> &ExprNode {
        &self.nodes[id.idx()]
    }

    fn push(&mut self, node: ExprNode) -> ExprId {
        let is_const = match &node {
            ExprNode::Const(_) => true,
            ExprNode::Var(_) => false,
            ExprNode::Add(a, b) | ExprNode::Sub(a, b) | ExprNode::Mul(a, b) | ExprNode::Div(a, b) => {
                self.constant_nodes[a.idx()] && self.constant_nodes[b.idx()]
            }
            ExprNode::Neg(a)
            | ExprNode::Sin(a)
            | ExprNode::Cos(a)
            | ExprNode::Tanh(a)
            | ExprNode::Sqr(a)
            | ExprNode::Abs(a) => self.constant_nodes[a.idx()],
            ExprNode::Dot(terms) => terms
                .iter()
                .all(|(a, b)| self.constant_nodes[a.idx()] && self.constant_nodes[b.idx()]),
        };
        let id = ExprId(self.nodes.len() as u32);
        self.nodes.push(node);
        self.constant_nodes.push(is_const);
        id
    }

    pub fn constant(&mut self, c: f64) -> ExprId {
        if let Some(&id) = self.const_cache.get(&c.to_bits()) {
            return id;
        }
        let id = self.push(ExprNode::Const(c));
        self.const_cache.insert(c.to_bits(), id);
        id
    }

    pub fn var(&mut self, i: usize) -> ExprId {
        assert!(i < self.n_vars, "variable {i} out of range");
        self.push(ExprNode::Var(i))
    }

    /// One node per state variable, in order.
    pub fn vars(&mut self) -> Vec<ExprId> {
        (0..self.n_vars).map(|i| self.var(i)).collect()
    }

    pub fn add(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.push(ExprNode::Add(a, b))
    }

    pub fn sub(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.push(ExprNode::Sub(a, b))
    }

    pub fn mul(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.push(ExprNode::Mul(a, b))
    }

    pub fn div(&mut self, a: ExprId, b: ExprId) -> ExprId {
        self.push(ExprNode::Div(a, b))
    }

    pub fn neg(&mut self, a: ExprId) -> ExprId {
        self.push(ExprNode::Neg(a))
    }

    pub fn sin(&mut self, a: ExprId) -> ExprId {
        self.push(ExprNode::Sin(a))
    }

    pub fn cos(&mut self, a: ExprId) -> ExprId {
        self.push(ExprNode::Cos(a))
    }

    pub fn tanh(&mut self, a: ExprId) -> ExprId {
        self.push(ExprNode::Tanh(a))
    }

    pub fn sqr(&mut self, a: ExprId) -> ExprId {
        self.push(ExprNode::Sqr(a))
    }

    pub fn abs(&mut self, a: ExprId) -> ExprId {
        self.push(ExprNode::Abs(a))
    }

    pub fn dot(&mut self, terms: Vec<(ExprId, ExprId)>) -> ExprId {
        if terms.is_empty() {
            return self.constant(0.0);
        }
        self.push(ExprNode::Dot(terms))
    }

    pub fn scale(&mut self, c: f64, a: ExprId) -> ExprId {
        let k = self.constant(c);
        self.mul(k, a)
    }

    pub fn add_const(&mut self, a: ExprId, c: f64) -> ExprId {
        let k = self.constant(c);
        self.add(a, k)
    }

    /// `Σ coeffs[k] · ids[k] + bias`.
    pub fn affine(&mut self, coeffs: &[f64], ids: &[ExprId], bias: f64) -> ExprId {
        assert_eq!(coeffs.len(), ids.len());
        let terms: Vec<_> = coeffs
            .iter()
            .zip(ids)
            .filter(|(c, _)| **c != 0.0)
            .map(|(&c, &id)| (self.constant(c), id))
            .collect();
        let s = self.dot(terms);
        if bias == 0.0 {
            s
        } else {
            self.add_const(s, bias)
        }
    }

    /// `Σ a_k · b_k` over two equally long id lists.
    pub fn inner(&mut self, a: &[ExprId], b: &[ExprId]) -> ExprId {
        assert_eq!(a.len(), b.len());
        self.dot(a.iter().copied().zip(b.iter().copied()).collect())
    }

    /// `Σ x_i²` over the state variables.
    pub fn norm_sq(&mut self) -> ExprId {
        let v = self.vars();
        let sq: Vec<_> = v.iter().map(|&x| self.sqr(x)).collect();
        let one = self.constant(1.0);
        self.dot(sq.into_iter().map(|s| (one, s)).collect())
    }

    /// Point evaluation of every node.
    pub fn eval_point(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_vars, "point dimension");
        let mut v: Vec<f64> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let r = match node {
                ExprNode::Const(c) => *c,
                ExprNode::Var(i) => x[*i],
                ExprNode::Add(a, b) => v[a.idx()] + v[b.idx()],
                ExprNode::Sub(a, b) => v[a.idx()] - v[b.idx()],
                ExprNode::Mul(a, b) => v[a.idx()] * v[b.idx()],
                ExprNode::Div(a, b) => v[a.idx()] / v[b.idx()],
                ExprNode::Neg(a) => -v[a.idx()],
                ExprNode::Sin(a) => f64::sin(v[a.idx()]),
                ExprNode::Cos(a) => f64::cos(v[a.idx()]),
                ExprNode::Tanh(a) => f64::tanh(v[a.idx()]),
                ExprNode::Sqr(a) => v[a.idx()] * v[a.idx()],
                ExprNode::Abs(a) => f64::abs(v[a.idx()]),
                ExprNode::Dot(t) => t.iter().map(|(a, b)| v[a.idx()] * v[b.idx()]).sum(),
            };
            v.push(r);
        }
        v
    }

    pub fn value_at(&self, id: ExprId, x: &[f64]) -> f64 {
        self.eval_point(x)[id.idx()]
    }

    /// Natural interval extension of every node over `b`.
    pub fn eval_interval(&self, b: &IntervalBox) -> Vec<Interval> {
        assert_eq!(b.dim(), self.n_vars, "box dimension");
        let mut v: Vec<Interval> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let r = match node {
                ExprNode::Const(c) => Interval::point(*c),
                ExprNode::Var(i) => b.0[*i],
                ExprNode::Add(a, c) => v[a.idx()] + v[c.idx()],
                ExprNode::Sub(a, c) => v[a.idx()] - v[c.idx()],
                ExprNode::Mul(a, c) => {
                    if a == c {
                        v[a.idx()].sqr()
                    } else {
                        v[a.idx()] * v[c.idx()]
                    }
                }
                ExprNode::Div(a, c) => v[a.idx()] / v[c.idx()],
                ExprNode::Neg(a) => -v[a.idx()],
                ExprNode::Sin(a) => v[a.idx()].sin(),
                ExprNode::Cos(a) => v[a.idx()].cos(),
                ExprNode::Tanh(a) => v[a.idx()].tanh(),
                ExprNode::Sqr(a) => v[a.idx()].sqr(),
                ExprNode::Abs(a) => v[a.idx()].abs(),
                ExprNode::Dot(t) => t
                    .iter()
                    .fold(Interval::point(0.0), |acc, (a, c)| acc + v[a.idx()] * v[c.idx()]),
            };
            v.push(r);
        }
        v
    }

    /// Rounded enclosure of the value at a single point.
    pub fn eval_point_interval(&self, x: &[f64]) -> Vec<Interval> {
        self.eval_interval(&IntervalBox::new(x.iter().map(|&c| Interval::point(c)).collect()))
    }

    /// Forward-mode interval differentiation: values and gradients of every
    /// node over `b`.
    pub fn eval_jet(&self, b: &IntervalBox) -> IntervalJet {
        let n = self.n_vars;
        assert_eq!(b.dim(), n, "box dimension");
        let zero = Interval::point(0.0);
        let one = Interval::point(1.0);
        let mut val: Vec<Interval> = Vec::with_capacity(self.nodes.len());
        let mut grad: Vec<Interval> = vec![zero; self.nodes.len() * n];
        let mut tmp = vec![zero; n];
        for (k, node) in self.nodes.iter().enumerate() {
            let out = k * n;
            let r = match node {
                ExprNode::Const(c) => Interval::point(*c),
                ExprNode::Var(i) => {
                    grad[out + i] = one;
                    b.0[*i]
                }
                ExprNode::Add(a, c) => {
                    self.combine(&mut grad, out, &[(*a, one), (*c, one)]);
                    val[a.idx()] + val[c.idx()]
                }
                ExprNode::Sub(a, c) => {
                    self.combine(&mut grad, out, &[(*a, one), (*c, -one)]);
                    val[a.idx()] - val[c.idx()]
                }
                ExprNode::Mul(a, c) => {
                    let (va, vc) = (val[a.idx()], val[c.idx()]);
                    if a == c {
                        self.combine(&mut grad, out, &[(*a, va * Interval::point(2.0))]);
                        va.sqr()
                    } else {
                        self.combine(&mut grad, out, &[(*a, vc), (*c, va)]);
                        va * vc
                    }
                }
                ExprNode::Div(a, c) => {
                    let (va, vc) = (val[a.idx()], val[c.idx()]);
                    let q = va / vc;
                    let inv = one / vc;
                    self.combine(&mut grad, out, &[(*a, inv), (*c, -(q * inv))]);
                    q
                }
                ExprNode::Neg(a) => {
                    self.combine(&mut grad, out, &[(*a, -one)]);
                    -val[a.idx()]
                }
                ExprNode::Sin(a) => {
                    let va = val[a.idx()];
                    self.combine(&mut grad, out, &[(*a, va.cos())]);
                    va.sin()
                }
                ExprNode::Cos(a) => {
                    let va = val[a.idx()];
                    self.combine(&mut grad, out, &[(*a, -va.sin())]);
                    va.cos()
                }
                ExprNode::Tanh(a) => {
                    let t = val[a.idx()].tanh();
                    let d = (one - t.sqr()).intersect(&Interval::new(0.0, 1.0)).unwrap_or(t);
                    self.combine(&mut grad, out, &[(*a, d)]);
                    t
                }
                ExprNode::Sqr(a) => {
                    let va = val[a.idx()];
                    self.combine(&mut grad, out, &[(*a, va * Interval::point(2.0))]);
                    va.sqr()
                }
                ExprNode::Abs(a) => {
                    let va = val[a.idx()];
                    let s = if va.lo > 0.0 {
                        one
                    } else if va.hi < 0.0 {
                        -one
                    } else {
                        Interval::new(-1.0, 1.0)
                    };
                    self.combine(&mut grad, out, &[(*a, s)]);
                    va.abs()
                }
                ExprNode::Dot(t) => {
                    tmp.iter_mut().for_each(|g| *g = zero);
                    let mut acc = zero;
                    for (a, c) in t {
                        let (va, vc) = (val[a.idx()], val[c.idx()]);
                        acc = acc + va * vc;
                        if !self.constant_nodes[a.idx()] {
                            let ga = a.idx() * n;
                            for j in 0..n {
                                tmp[j] = tmp[j] + grad[ga + j] * vc;
                            }
                        }
                        if !self.constant_nodes[c.idx()] {
                            let gc = c.idx() * n;
                            for j in 0..n {
                                tmp[j] = tmp[j] + grad[gc + j] * va;
                            }
                        }
                    }
                    grad[out..out + n].copy_from_slice(&tmp);
                    acc
                }
            };
            val.push(r);
        }
        IntervalJet {
            n_vars: n,
            values: val,
            grads: grad,
        }
    }

    /// `grad[out] = Σ scale · grad[src]` over the non-constant sources.
    fn combine(&self, grad: &mut [Interval], out: usize, srcs: &[(ExprId, Interval)]) {
        let n = self.n_vars;
        for &(src, scale) in srcs {
            if self.constant_nodes[src.idx()] {
                continue;
            }
            let s = src.idx() * n;
            for j in 0..n {
                let g = grad[s + j];
                if g.lo == 0.0 && g.hi == 0.0 {
                    continue;
                }
                grad[out + j] = grad[out + j] + g * scale;
            }
        }
    }

    /// Enclosures of `roots` over `b`: the natural extension intersected with
    /// the mean-value form `f(c) + Σ ∂f/∂x_i(B)·(B_i − c_i)`.
    pub fn enclose(&self, roots: &[ExprId], b: &IntervalBox) -> Vec<Interval> {
        let jet = self.eval_jet(b);
        let c = b.center();
        let at_c = self.eval_point_interval(&c);
        roots
            .iter()
            .map(|&r| {
                let natural = jet.value(r);
                let mut mv = at_c[r.idx()];
                for (j, g) in jet.grad(r).iter().enumerate() {
                    let dx = b.0[j] - Interval::point(c[j]);
                    mv = mv + *g * dx;
                }
                natural.intersect(&mv).unwrap_or(natural)
            })
            .collect()
    }
}
