//! Reverse-mode automatic differentiation over a scalar tape.
//!
//! The tape is thread-local: creating a [`Tape`] clears the calling
//! thread's recording and bumps its generation counter, so every [`Expr`]
//! from an earlier step becomes stale. Arithmetic on [`Expr`] values records
//! nodes eagerly (values are computed at record time) and a single reverse
//! sweep in [`Tape::backward`] produces gradients.
//!
//! Operators cannot return `Result`, so domain violations (square root of a
//! negative number, division by zero, ...) are latched on the tape as a
//! fault. The fault is reported by the next call to [`Tape::backward`] or
//! [`Tape::check`].
//!
//! Besides the usual unary and binary nodes, the tape has two n-ary node
//! kinds: a general weighted sum and a dot product between two contiguous
//! runs of nodes. The latter keeps dense layer contractions compact: its
//! partials are read back from the value array instead of being stored.

use std::cell::RefCell;
use std::fmt;
use std::marker::PhantomData;
use std::ops::{Add, Div, Mul, Neg, Sub};

use thiserror::Error;

use crate::scalar::{logistic, Scalar};

const CONST: u32 = u32::MAX;

/// Default cap on recorded nodes per tape.
pub const DEFAULT_NODE_BUDGET: usize = 50_000_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AdError {
    #[error("domain error in {op}: argument {value}")]
    Domain { op: &'static str, value: f64 },
    #[error("expression belongs to tape generation {found}, current generation is {current}")]
    StaleExpr { found: u32, current: u32 },
    #[error("tape node budget of {budget} exceeded")]
    BudgetExceeded { budget: usize },
}

#[derive(Clone, Copy)]
enum Node {
    Leaf,
    Unary { a: u32, da: f64 },
    Binary { a: u32, da: f64, b: u32, db: f64 },
    Sum { start: u32, len: u32 },
    Dot { w: u32, x: u32, len: u32 },
    Affine { w: u32, x: u32, len: u32, b: u32 },
}

struct TapeData {
    generation: u32,
    budget: usize,
    vals: Vec<f64>,
    nodes: Vec<Node>,
    args: Vec<(u32, f64)>,
    fault: Option<AdError>,
}

impl TapeData {
    fn push(&mut self, node: Node, val: f64) -> u32 {
        if self.nodes.len() >= self.budget && self.fault.is_none() {
            self.fault = Some(AdError::BudgetExceeded {
                budget: self.budget,
            });
        }
        let idx = self.nodes.len() as u32;
        self.nodes.push(node);
        self.vals.push(val);
        idx
    }

    fn fail(&mut self, err: AdError) {
        if self.fault.is_none() {
            self.fault = Some(err);
        }
    }

    fn live(&mut self, e: Expr) -> bool {
        if e.idx == CONST {
            return false;
        }
        if e.gen != self.generation {
            self.fail(AdError::StaleExpr {
                found: e.gen,
                current: self.generation,
            });
            return false;
        }
        true
    }
}

thread_local! {
    static TAPE: RefCell<TapeData> = RefCell::new(TapeData {
        generation: 0,
        budget: DEFAULT_NODE_BUDGET,
        vals: Vec::new(),
        nodes: Vec::new(),
        args: Vec::new(),
        fault: None,
    });
}

fn with_tape<R>(f: impl FnOnce(&mut TapeData) -> R) -> R {
    TAPE.with(|t| f(&mut t.borrow_mut()))
}

/// Handle to the calling thread's tape for one recording generation.
///
/// Not `Send`: expressions live in thread-local storage.
pub struct Tape {
    generation: u32,
    _not_send: PhantomData<*const ()>,
}

impl Tape {
    /// Starts a fresh recording, releasing every node of the previous one.
    pub fn new() -> Self {
        Self::with_budget(DEFAULT_NODE_BUDGET)
    }

    pub fn with_budget(budget: usize) -> Self {
        let generation = with_tape(|t| {
            t.generation = t.generation.wrapping_add(1);
            t.budget = budget;
            t.vals.clear();
            t.nodes.clear();
            t.args.clear();
            t.fault = None;
            t.generation
        });
        Tape {
            generation,
            _not_send: PhantomData,
        }
    }

    pub fn generation(&self) -> u32 {
        self.generation
    }

    /// Records an independent variable.
    pub fn var(&self, value: f64) -> Expr {
        with_tape(|t| {
            self.assert_current(t);
            let idx = t.push(Node::Leaf, value);
            Expr {
                val: value,
                idx,
                gen: t.generation,
            }
        })
    }

    /// Records a contiguous block of independent variables.
    pub fn vars(&self, values: &[f64]) -> Vec<Expr> {
        with_tape(|t| {
            self.assert_current(t);
            values
                .iter()
                .map(|&v| Expr {
                    val: v,
                    idx: t.push(Node::Leaf, v),
                    gen: t.generation,
                })
                .collect()
        })
    }

    /// Number of recorded nodes.
    pub fn len(&self) -> usize {
        with_tape(|t| t.nodes.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Returns the latched fault, if any.
    pub fn check(&self) -> Result<(), AdError> {
        with_tape(|t| {
            if t.generation != self.generation {
                return Err(AdError::StaleExpr {
                    found: self.generation,
                    current: t.generation,
                });
            }
            match &t.fault {
                Some(e) => Err(e.clone()),
                None => Ok(()),
            }
        })
    }

    /// Single reverse sweep from `output`; returns d(output)/d(w) for each
    /// requested expression. Constants and unreached nodes get 0.
    pub fn backward(&self, output: Expr, wrt: &[Expr]) -> Result<Vec<f64>, AdError> {
        let adj = self.adjoints(output)?;
        Ok(wrt.iter().map(|w| adj.get(*w)).collect())
    }

    /// Full adjoint vector from a reverse sweep, for callers that need many
    /// lookups.
    pub fn adjoints(&self, output: Expr) -> Result<Adjoints, AdError> {
        self.check()?;
        if output.idx != CONST && output.gen != self.generation {
            return Err(AdError::StaleExpr {
                found: output.gen,
                current: self.generation,
            });
        }
        let adj = with_tape(|t| sweep(t, output));
        Ok(Adjoints {
            generation: self.generation,
            adj,
        })
    }

    fn assert_current(&self, t: &mut TapeData) {
        if t.generation != self.generation {
            t.fail(AdError::StaleExpr {
                found: self.generation,
                current: t.generation,
            });
        }
    }
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Adjoint values of every node for one reverse sweep.
pub struct Adjoints {
    generation: u32,
    adj: Vec<f64>,
}

impl Adjoints {
    pub fn get(&self, e: Expr) -> f64 {
        if e.gen != self.generation {
            return 0.0;
        }
        lookup(&self.adj, e)
    }
}

fn lookup(adj: &[f64], e: Expr) -> f64 {
    if e.idx == CONST {
        0.0
    } else {
        adj.get(e.idx as usize).copied().unwrap_or(0.0)
    }
}

fn sweep(t: &TapeData, output: Expr) -> Vec<f64> {
    let mut adj = vec![0.0; t.nodes.len()];
    if output.idx == CONST {
        return adj;
    }
    adj[output.idx as usize] = 1.0;
    for i in (0..=output.idx as usize).rev() {
        let a = adj[i];
        if a == 0.0 {
            continue;
        }
        match t.nodes[i] {
            Node::Leaf => {}
            Node::Unary { a: p, da } => adj[p as usize] += da * a,
            Node::Binary { a: p, da, b: q, db } => {
                adj[p as usize] += da * a;
                adj[q as usize] += db * a;
            }
            Node::Sum { start, len } => {
                let s = start as usize;
                for &(p, d) in &t.args[s..s + len as usize] {
                    adj[p as usize] += d * a;
                }
            }
            Node::Dot { w, x, len } => {
                let (w, x, n) = (w as usize, x as usize, len as usize);
                for k in 0..n {
                    adj[w + k] += t.vals[x + k] * a;
                    adj[x + k] += t.vals[w + k] * a;
                }
            }
            Node::Affine { w, x, len, b } => {
                let (w, x, n) = (w as usize, x as usize, len as usize);
                for k in 0..n {
                    adj[w + k] += t.vals[x + k] * a;
                    adj[x + k] += t.vals[w + k] * a;
                }
                adj[b as usize] += a;
            }
        }
    }
    adj
}

/// A scalar recorded on the thread's tape, or a constant.
#[derive(Clone, Copy)]
pub struct Expr {
    val: f64,
    idx: u32,
    gen: u32,
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.idx == CONST {
            write!(f, "Expr(const {})", self.val)
        } else {
            write!(f, "Expr(#{} = {})", self.idx, self.val)
        }
    }
}

impl Expr {
    pub fn constant(v: f64) -> Self {
        Expr {
            val: v,
            idx: CONST,
            gen: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.val
    }

    pub fn is_constant(&self) -> bool {
        self.idx == CONST
    }

    fn unary(self, val: f64, da: f64) -> Expr {
        if self.idx == CONST {
            return Expr::constant(val);
        }
        with_tape(|t| {
            if !t.live(self) {
                return Expr::constant(val);
            }
            let idx = t.push(Node::Unary { a: self.idx, da }, val);
            Expr {
                val,
                idx,
                gen: t.generation,
            }
        })
    }

    fn binary(self, other: Expr, val: f64, da: f64, db: f64) -> Expr {
        match (self.idx == CONST, other.idx == CONST) {
            (true, true) => Expr::constant(val),
            (false, true) => self.unary(val, da),
            (true, false) => other.unary(val, db),
            (false, false) => with_tape(|t| {
                let ok = t.live(self) & t.live(other);
                if !ok {
                    return Expr::constant(val);
                }
                let idx = t.push(
                    Node::Binary {
                        a: self.idx,
                        da,
                        b: other.idx,
                        db,
                    },
                    val,
                );
                Expr {
                    val,
                    idx,
                    gen: t.generation,
                }
            }),
        }
    }

    fn domain(op: &'static str, value: f64) {
        with_tape(|t| t.fail(AdError::Domain { op, value }));
    }

    pub fn try_sqrt(self) -> Result<Expr, AdError> {
        if self.val <= 0.0 {
            return Err(AdError::Domain {
                op: "sqrt",
                value: self.val,
            });
        }
        Ok(self.sqrt())
    }

    pub fn try_ln(self) -> Result<Expr, AdError> {
        if self.val <= 0.0 {
            return Err(AdError::Domain {
                op: "ln",
                value: self.val,
            });
        }
        Ok(self.ln())
    }

    pub fn try_div(self, rhs: Expr) -> Result<Expr, AdError> {
        if rhs.val == 0.0 {
            return Err(AdError::Domain {
                op: "div",
                value: rhs.val,
            });
        }
        Ok(self / rhs)
    }

    /// `self^p` for a constant exponent.
    pub fn pow_const(self, p: f64) -> Expr {
        if p.fract() != 0.0 && self.val <= 0.0 {
            Self::domain("pow_const", self.val);
        }
        let val = self.val.powf(p);
        self.unary(val, p * self.val.powf(p - 1.0))
    }

    /// Records a node with a caller-supplied value and local partial.
    ///
    /// Used by fused kernels (e.g. the network's tangent propagation) that
    /// evaluate a composite function in plain arithmetic.
    pub fn custom_unary(self, val: f64, da: f64) -> Expr {
        self.unary(val, da)
    }

    /// Two-argument counterpart of [`Expr::custom_unary`].
    pub fn custom_binary(self, other: Expr, val: f64, da: f64, db: f64) -> Expr {
        self.binary(other, val, da, db)
    }

    /// Sum of many expressions as one node.
    pub fn sum(terms: &[Expr]) -> Expr {
        Expr::weighted_sum(terms.iter().map(|&e| (e, 1.0)))
    }

    /// `sum_k c_k * e_k` with constant coefficients, as one node.
    pub fn weighted_sum(terms: impl IntoIterator<Item = (Expr, f64)>) -> Expr {
        with_tape(|t| {
            let start = t.args.len();
            let mut val = 0.0;
            for (e, c) in terms {
                val += c * e.val;
                if t.live(e) {
                    t.args.push((e.idx, c));
                }
            }
            let len = t.args.len() - start;
            if len == 0 {
                return Expr::constant(val);
            }
            let idx = t.push(
                Node::Sum {
                    start: start as u32,
                    len: len as u32,
                },
                val,
            );
            Expr {
                val,
                idx,
                gen: t.generation,
            }
        })
    }

    /// Inner product `sum_k w_k * x_k` as a single node.
    ///
    /// When both slices are contiguous runs of live nodes the node stores
    /// only their offsets.
    pub fn dot(w: &[Expr], x: &[Expr]) -> Expr {
        assert_eq!(w.len(), x.len(), "dot: length mismatch");
        let val: f64 = w.iter().zip(x).map(|(a, b)| a.val * b.val).sum();
        if w.is_empty() {
            return Expr::constant(0.0);
        }
        with_tape(|t| {
            let gen = t.generation;
            let contiguous = |s: &[Expr]| {
                let base = s[0].idx;
                base != CONST
                    && s.iter()
                        .enumerate()
                        .all(|(k, e)| e.gen == gen && e.idx == base.wrapping_add(k as u32))
            };
            if contiguous(w) && contiguous(x) {
                let idx = t.push(
                    Node::Dot {
                        w: w[0].idx,
                        x: x[0].idx,
                        len: w.len() as u32,
                    },
                    val,
                );
                return Expr { val, idx, gen };
            }
            let start = t.args.len();
            for (a, b) in w.iter().zip(x) {
                if t.live(*a) {
                    t.args.push((a.idx, b.val));
                }
                if t.live(*b) {
                    t.args.push((b.idx, a.val));
                }
            }
            let len = t.args.len() - start;
            if len == 0 {
                return Expr::constant(val);
            }
            let idx = t.push(
                Node::Sum {
                    start: start as u32,
                    len: len as u32,
                },
                val,
            );
            Expr { val, idx, gen }
        })
    }
}

impl Expr {
    /// `w . x + b` as a single node. Falls back to [`Expr::dot`] plus an
    /// addition when the operands are not contiguous live runs.
    pub fn affine(w: &[Expr], x: &[Expr], b: Expr) -> Expr {
        assert_eq!(w.len(), x.len(), "affine: length mismatch");
        let fused = !w.is_empty()
            && b.idx != CONST
            && with_tape(|t| {
                let gen = t.generation;
                let run = |s: &[Expr]| {
                    let base = s[0].idx;
                    base != CONST
                        && s.iter()
                            .enumerate()
                            .all(|(k, e)| e.gen == gen && e.idx == base.wrapping_add(k as u32))
                };
                b.gen == gen && run(w) && run(x)
            });
        if !fused {
            return Expr::dot(w, x) + b;
        }
        let val = w.iter().zip(x).map(|(a, c)| a.val * c.val).sum::<f64>() + b.val;
        with_tape(|t| {
            let idx = t.push(
                Node::Affine {
                    w: w[0].idx,
                    x: x[0].idx,
                    len: w.len() as u32,
                    b: b.idx,
                },
                val,
            );
            Expr {
                val,
                idx,
                gen: t.generation,
            }
        })
    }
}

impl Scalar for Expr {
    fn constant(v: f64) -> Self {
        Expr::constant(v)
    }

    fn value(self) -> f64 {
        self.val
    }

    fn sqrt(self) -> Self {
        if self.is_constant() && self.val >= 0.0 {
            return Expr::constant(self.val.sqrt());
        }
        if self.val <= 0.0 {
            Self::domain("sqrt", self.val);
            return self.unary(self.val.max(0.0).sqrt(), 0.0);
        }
        let s = self.val.sqrt();
        self.unary(s, 0.5 / s)
    }

    fn exp(self) -> Self {
        let e = self.val.exp();
        self.unary(e, e)
    }

    fn ln(self) -> Self {
        if self.val <= 0.0 {
            Self::domain("ln", self.val);
            return self.unary(f64::NAN, 0.0);
        }
        self.unary(self.val.ln(), 1.0 / self.val)
    }

    fn tanh(self) -> Self {
        let y = self.val.tanh();
        self.unary(y, 1.0 - y * y)
    }

    fn powi(self, n: i32) -> Self {
        let v = self.val.powi(n);
        let d = if n == 0 {
            0.0
        } else {
            n as f64 * self.val.powi(n - 1)
        };
        self.unary(v, d)
    }

    fn sigmoid(self, delta: f64) -> Self {
        let s = logistic(delta * self.val);
        self.unary(s, delta * s * (1.0 - s))
    }

    fn sum_all(xs: &[Self]) -> Self {
        Expr::sum(xs)
    }

    fn clamp_to(self, lo: f64, hi: f64) -> Self {
        if self.val < lo {
            Expr::constant(lo)
        } else if self.val > hi {
            Expr::constant(hi)
        } else {
            self
        }
    }

    fn square(self) -> Self {
        self.unary(self.val * self.val, 2.0 * self.val)
    }
}

impl Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        self.binary(rhs, self.val + rhs.val, 1.0, 1.0)
    }
}

impl Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        self.binary(rhs, self.val - rhs.val, 1.0, -1.0)
    }
}

impl Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        self.binary(rhs, self.val * rhs.val, rhs.val, self.val)
    }
}

impl Div for Expr {
    type Output = Expr;
    fn div(self, rhs: Expr) -> Expr {
        if rhs.val == 0.0 {
            Expr::domain("div", rhs.val);
            return self.binary(rhs, f64::NAN, 0.0, 0.0);
        }
        let inv = 1.0 / rhs.val;
        let q = self.val * inv;
        self.binary(rhs, q, inv, -q * inv)
    }
}

impl Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        self.unary(-self.val, -1.0)
    }
}

impl Add<f64> for Expr {
    type Output = Expr;
    fn add(self, rhs: f64) -> Expr {
        self.unary(self.val + rhs, 1.0)
    }
}

impl Sub<f64> for Expr {
    type Output = Expr;
    fn sub(self, rhs: f64) -> Expr {
        self.unary(self.val - rhs, 1.0)
    }
}

impl Mul<f64> for Expr {
    type Output = Expr;
    fn mul(self, rhs: f64) -> Expr {
        self.unary(self.val * rhs, rhs)
    }
}

impl Div<f64> for Expr {
    type Output = Expr;
    fn div(self, rhs: f64) -> Expr {
        if rhs == 0.0 {
            Expr::domain("div", rhs);
            return self.unary(f64::NAN, 0.0);
        }
        self.unary(self.val / rhs, 1.0 / rhs)
    }
}

impl Add<Expr> for f64 {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        rhs + self
    }
}

impl Sub<Expr> for f64 {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        rhs.unary(self - rhs.val, -1.0)
    }
}

impl Mul<Expr> for f64 {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        rhs * self
    }
}

/// Compares reverse-mode gradients of `f` at `point` with central finite
/// differences of step `h`; returns the largest per-coordinate relative
/// error, with an absolute floor of `1e-8` in the denominator.
pub fn grad_check<F>(f: F, point: &[f64], h: f64) -> Result<f64, AdError>
where
    F: Fn(&[Expr]) -> Expr,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, h, &coords)
}

/// [`grad_check`] restricted to a subset of coordinates.
pub fn grad_check_coords<F>(f: F, point: &[f64], h: f64, coords: &[usize]) -> Result<f64, AdError>
where
    F: Fn(&[Expr]) -> Expr,
{
    let analytic = {
        let tape = Tape::new();
        let xs = tape.vars(point);
        let y = f(&xs);
        let wrt: Vec<Expr> = coords.iter().map(|&k| xs[k]).collect();
        tape.backward(y, &wrt)?
    };
    let eval = |x: &[f64]| -> Result<f64, AdError> {
        let tape = Tape::new();
        let xs = tape.vars(x);
        let y = f(&xs).value();
        tape.check()?;
        Ok(y)
    };
    let mut worst: f64 = 0.0;
    let mut x = point.to_vec();
    for (g, &k) in analytic.iter().zip(coords) {
        let x0 = x[k];
        x[k] = x0 + h;
        let fp = eval(&x)?;
        x[k] = x0 - h;
        let fm = eval(&x)?;
        x[k] = x0;
        let fd = (fp - fm) / (2.0 * h);
        let rel = (g - fd).abs() / g.abs().max(fd.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}
