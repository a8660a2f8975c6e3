//! Reverse-mode automatic differentiation on an eager, append-only tape.
//!
//! Every primitive computes its value immediately and records its inputs.
//! Because nodes can only reference earlier nodes, recording order is a
//! topological order and [`Tape::backward`] simply walks the tape in
//! reverse, accumulating vector-Jacobian products.
//!
//! ```
//! use memprop::autodiff::{Shape, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(vec![3.0], Shape::Scalar).unwrap();
//! let y = tape.mul(x, x).unwrap();
//! let grads = tape.backward(y, &[x]).unwrap();
//! assert_eq!(tape.value(y), &[9.0]);
//! assert_eq!(grads.get(x).unwrap(), &[6.0]);
//! ```

mod gradcheck;

pub use gradcheck::{gradcheck, GradcheckReport};

use std::collections::HashMap;

use thiserror::Error;

/// Denominators below this magnitude are refused by [`Tape::div`].
pub const DIV_GUARD: f64 = 1e-30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Shape,
        rhs: Shape,
    },
    #[error("value length {len} does not match shape {shape:?}")]
    BadValue { len: usize, shape: Shape },
    #[error("division guard: |denominator| = {0:e} below 1e-30")]
    DivisionGuard(f64),
    #[error("index {index} out of range for {shape:?}")]
    Index { index: usize, shape: Shape },
    #[error("loss must be a scalar, got {0:?}")]
    NonScalarLoss(Shape),
    #[error("non-finite adjoint at node {0}")]
    NonFinite(usize),
    #[error("variable {0} does not belong to this tape")]
    ForeignVar(usize),
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Scalar,
    Vector(usize),
    /// Row-major `rows x cols`.
    Matrix(usize, usize),
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Scalar => 1,
            Shape::Vector(n) => n,
            Shape::Matrix(r, c) => r * c,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Handle to a recorded node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    shape: Shape,
}

impl Var {
    pub fn id(&self) -> usize {
        self.id
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Neg(usize),
    Exp(usize),
    Ln(usize),
    Logistic(usize),
    /// `scale * x + shift`
    Affine(usize, f64),
    Clamp(usize, f64, f64),
    MatVec(usize, usize),
    Sum(usize),
    Stack(Vec<usize>),
    Index(usize, usize),
    LogSoftmax(usize),
}

#[derive(Debug, Clone)]
struct Node {
    op: Op,
    shape: Shape,
    value: Vec<f64>,
    needs_grad: bool,
}

#[derive(Debug, Clone, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to the requested leaves.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Gradients {
    grads: HashMap<usize, Vec<f64>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(&var.id).map(Vec::as_slice)
    }

    pub fn take(&mut self, var: Var) -> Option<Vec<f64>> {
        self.grads.remove(&var.id)
    }

    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }
}

fn same_shape(op: &'static str, a: Var, b: Var) -> Result<()> {
    if a.shape == b.shape {
        Ok(())
    } else {
        Err(AutodiffError::ShapeMismatch {
            op,
            lhs: a.shape,
            rhs: b.shape,
        })
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(nodes: usize) -> Self {
        Self {
            nodes: Vec::with_capacity(nodes),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, var: Var) -> &[f64] {
        &self.nodes[var.id].value
    }

    pub fn scalar(&self, var: Var) -> f64 {
        self.nodes[var.id].value[0]
    }

    fn push(&mut self, op: Op, shape: Shape, value: Vec<f64>, needs_grad: bool) -> Var {
        debug_assert_eq!(value.len(), shape.len());
        let id = self.nodes.len();
        self.nodes.push(Node {
            op,
            shape,
            value,
            needs_grad,
        });
        Var { id, shape }
    }

    fn check(&self, var: Var) -> Result<()> {
        match self.nodes.get(var.id) {
            Some(node) if node.shape == var.shape => Ok(()),
            _ => Err(AutodiffError::ForeignVar(var.id)),
        }
    }

    fn grad_flag(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].needs_grad)
    }

    /// A differentiable input.
    pub fn leaf(&mut self, value: Vec<f64>, shape: Shape) -> Result<Var> {
        if value.len() != shape.len() {
            return Err(AutodiffError::BadValue {
                len: value.len(),
                shape,
            });
        }
        Ok(self.push(Op::Leaf, shape, value, true))
    }

    /// A non-differentiable input; no adjoint is ever propagated into it.
    pub fn constant(&mut self, value: Vec<f64>, shape: Shape) -> Result<Var> {
        if value.len() != shape.len() {
            return Err(AutodiffError::BadValue {
                len: value.len(),
                shape,
            });
        }
        Ok(self.push(Op::Constant, shape, value, false))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        self.check(a)?;
        self.check(b)?;
        same_shape(name, a, b)?;
        let va = &self.nodes[a.id].value;
        let vb = &self.nodes[b.id].value;
        let value = va.iter().zip(vb).map(|(&x, &y)| f(x, y)).collect();
        let g = self.grad_flag(&[a.id, b.id]);
        Ok(self.push(op, a.shape, value, g))
    }

    fn unary(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        self.check(a)?;
        let value = self.nodes[a.id].value.iter().map(|&x| f(x)).collect();
        let g = self.nodes[a.id].needs_grad;
        Ok(self.push(op, a.shape, value, g))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a.id, b.id))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a.id, b.id))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a.id, b.id))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        self.check(b)?;
        if let Some(&d) = self.nodes[b.id]
            .value
            .iter()
            .find(|d| d.abs() < DIV_GUARD)
        {
            return Err(AutodiffError::DivisionGuard(d.abs()));
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div(a.id, b.id))
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary(a, |x| -x, Op::Neg(a.id))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::exp, Op::Exp(a.id))
    }

    pub fn ln(&mut self, a: Var) -> Result<Var> {
        self.unary(a, f64::ln, Op::Ln(a.id))
    }

    /// Logistic sigmoid with the argument clamped to `[-500, 500]`.
    pub fn logistic(&mut self, a: Var) -> Result<Var> {
        self.unary(a, crate::device::logistic, Op::Logistic(a.id))
    }

    /// `c * a`
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        self.affine(a, c, 0.0)
    }

    /// `scale * a + shift`, elementwise with constant coefficients.
    pub fn affine(&mut self, a: Var, scale: f64, shift: f64) -> Result<Var> {
        self.unary(a, |x| scale * x + shift, Op::Affine(a.id, scale))
    }

    /// Elementwise clamp to `[lo, hi]`; the derivative is zero where the
    /// input was outside the interval.
    pub fn clamp(&mut self, a: Var, lo: f64, hi: f64) -> Result<Var> {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp(a.id, lo, hi))
    }

    /// Matrix-vector product `w . v` for `w: rows x cols`, `v: cols`.
    pub fn matvec(&mut self, w: Var, v: Var) -> Result<Var> {
        self.check(w)?;
        self.check(v)?;
        let (rows, cols) = match (w.shape, v.shape) {
            (Shape::Matrix(r, c), Shape::Vector(n)) if c == n => (r, c),
            _ => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "matvec",
                    lhs: w.shape,
                    rhs: v.shape,
                })
            }
        };
        let value = matvec_values(&self.nodes[w.id].value, &self.nodes[v.id].value, rows, cols);
        let g = self.grad_flag(&[w.id, v.id]);
        Ok(self.push(Op::MatVec(w.id, v.id), Shape::Vector(rows), value, g))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        let s = self.nodes[a.id].value.iter().sum();
        let g = self.nodes[a.id].needs_grad;
        Ok(self.push(Op::Sum(a.id), Shape::Scalar, vec![s], g))
    }

    /// Stack scalars into a vector, or equal-length vectors into the rows of
    /// a matrix.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var> {
        let first = parts.first().ok_or(AutodiffError::BadValue {
            len: 0,
            shape: Shape::Vector(0),
        })?;
        for p in parts {
            self.check(*p)?;
            same_shape("stack", *first, *p)?;
        }
        let shape = match first.shape {
            Shape::Scalar => Shape::Vector(parts.len()),
            Shape::Vector(n) => Shape::Matrix(parts.len(), n),
            Shape::Matrix(..) => {
                return Err(AutodiffError::ShapeMismatch {
                    op: "stack",
                    lhs: first.shape,
                    rhs: first.shape,
                })
            }
        };
        let mut value = Vec::with_capacity(shape.len());
        for p in parts {
            value.extend_from_slice(&self.nodes[p.id].value);
        }
        let ids: Vec<usize> = parts.iter().map(|p| p.id).collect();
        let g = self.grad_flag(&ids);
        Ok(self.push(Op::Stack(ids), shape, value, g))
    }

    /// Element `index` of a vector, as a scalar.
    pub fn index(&mut self, a: Var, index: usize) -> Result<Var> {
        self.check(a)?;
        if index >= a.shape.len() {
            return Err(AutodiffError::Index {
                index,
                shape: a.shape,
            });
        }
        let v = self.nodes[a.id].value[index];
        let g = self.nodes[a.id].needs_grad;
        Ok(self.push(Op::Index(a.id, index), Shape::Scalar, vec![v], g))
    }

    /// Numerically stable `z - log(sum(exp(z)))` over a vector.
    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        self.check(a)?;
        if !matches!(a.shape, Shape::Vector(n) if n > 0) {
            return Err(AutodiffError::ShapeMismatch {
                op: "log_softmax",
                lhs: a.shape,
                rhs: Shape::Vector(1),
            });
        }
        let value = log_softmax_values(&self.nodes[a.id].value);
        let g = self.nodes[a.id].needs_grad;
        Ok(self.push(Op::LogSoftmax(a.id), a.shape, value, g))
    }

    /// Gradients of the scalar `loss` with respect to each of `leaves`.
    /// The tape is left untouched, so this can be called repeatedly.
    pub fn backward(&self, loss: Var, leaves: &[Var]) -> Result<Gradients> {
        self.check(loss)?;
        if loss.shape != Shape::Scalar {
            return Err(AutodiffError::NonScalarLoss(loss.shape));
        }
        for leaf in leaves {
            self.check(*leaf)?;
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        if self.nodes[loss.id].needs_grad {
            adj[loss.id] = Some(vec![1.0]);
        }
        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            if g.iter().any(|x| !x.is_finite()) {
                return Err(AutodiffError::NonFinite(id));
            }
            self.propagate(id, &g, &mut adj);
            adj[id] = Some(g);
        }
        let mut grads = HashMap::with_capacity(leaves.len());
        for leaf in leaves {
            let g = adj
                .get(leaf.id)
                .and_then(|g| g.clone())
                .unwrap_or_else(|| vec![0.0; leaf.shape.len()]);
            grads.insert(leaf.id, g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, id: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = &node.value;
        let nodes = &self.nodes;
        let mut acc = |target: usize, f: &mut dyn FnMut(&mut [f64])| {
            if !nodes[target].needs_grad {
                return;
            }
            let slot = adj[target].get_or_insert_with(|| vec![0.0; nodes[target].shape.len()]);
            f(slot);
        };
        match node.op {
            Op::Leaf | Op::Constant => {}
            Op::Add(a, b) => {
                acc(a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
                acc(b, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
            }
            Op::Sub(a, b) => {
                acc(a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += g));
                acc(b, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a].value, &nodes[b].value);
                acc(a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * vb[k];
                    }
                });
                acc(b, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] * va[k];
                    }
                });
            }
            Op::Div(a, b) => {
                let vb = &nodes[b].value;
                acc(a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] / vb[k];
                    }
                });
                acc(b, &mut |s| {
                    for k in 0..s.len() {
                        s[k] -= g[k] * out[k] / vb[k];
                    }
                });
            }
            Op::Neg(a) => acc(a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s -= g)),
            Op::Exp(a) => acc(a, &mut |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * out[k];
                }
            }),
            Op::Ln(a) => {
                let va = &nodes[a].value;
                acc(a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] / va[k];
                    }
                })
            }
            Op::Logistic(a) => acc(a, &mut |s| {
                for k in 0..s.len() {
                    s[k] += g[k] * out[k] * (1.0 - out[k]);
                }
            }),
            Op::Affine(a, c) => acc(a, &mut |s| s.iter_mut().zip(g).for_each(|(s, g)| *s += c * g)),
            Op::Clamp(a, lo, hi) => {
                let va = &nodes[a].value;
                acc(a, &mut |s| {
                    for k in 0..s.len() {
                        if va[k] >= lo && va[k] <= hi {
                            s[k] += g[k];
                        }
                    }
                })
            }
            Op::MatVec(w, v) => {
                let Shape::Matrix(rows, cols) = nodes[w].shape else {
                    unreachable!("matvec recorded with non-matrix weight")
                };
                let (vw, vv) = (&nodes[w].value, &nodes[v].value);
                acc(w, &mut |s| outer_accumulate(s, g, vv, rows, cols));
                acc(v, &mut |s| {
                    for (i, &gi) in g.iter().enumerate() {
                        if gi == 0.0 {
                            continue;
                        }
                        let row = &vw[i * cols..(i + 1) * cols];
                        for (sj, wij) in s.iter_mut().zip(row) {
                            *sj += gi * wij;
                        }
                    }
                });
            }
            Op::Sum(a) => acc(a, &mut |s| s.iter_mut().for_each(|s| *s += g[0])),
            Op::Stack(ref parts) => {
                let width = g.len() / parts.len();
                for (k, &p) in parts.iter().enumerate() {
                    let slice = &g[k * width..(k + 1) * width];
                    acc(p, &mut |s| s.iter_mut().zip(slice).for_each(|(s, g)| *s += g));
                }
            }
            Op::Index(a, i) => acc(a, &mut |s| s[i] += g[0]),
            Op::LogSoftmax(a) => {
                let total: f64 = g.iter().sum();
                acc(a, &mut |s| {
                    for k in 0..s.len() {
                        s[k] += g[k] - out[k].exp() * total;
                    }
                })
            }
        }
    }
}

/// Dense `w . v`, skipping zero entries of `v` when it is sparse.
pub(crate) fn matvec_values(w: &[f64], v: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let nz: Vec<usize> = (0..cols).filter(|&j| v[j] != 0.0).collect();
    let mut out = vec![0.0; rows];
    if nz.len() * 2 < cols {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            *o = nz.iter().map(|&j| row[j] * v[j]).sum();
        }
    } else {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &w[i * cols..(i + 1) * cols];
            *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
        }
    }
    out
}

/// `s += g v^T` for a row-major `rows x cols` accumulator.
fn outer_accumulate(s: &mut [f64], g: &[f64], v: &[f64], rows: usize, cols: usize) {
    let nz: Vec<usize> = (0..cols).filter(|&j| v[j] != 0.0).collect();
    let sparse = nz.len() * 2 < cols;
    for i in 0..rows {
        let gi = g[i];
        if gi == 0.0 {
            continue;
        }
        let row = &mut s[i * cols..(i + 1) * cols];
        if sparse {
            for &j in &nz {
                row[j] += gi * v[j];
            }
        } else {
            for (r, vj) in row.iter_mut().zip(v) {
                *r += gi * vj;
            }
        }
    }
}

pub(crate) fn log_softmax_values(z: &[f64]) -> Vec<f64> {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + z.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    z.iter().map(|&x| x - lse).collect()
}
