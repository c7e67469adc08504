use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use super::tensor::{gemm, reduce_to, zip_broadcast, Tensor};
use super::DiffError;
use crate::geometry::Mat3;
use crate::math;

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Constant,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Scale(Var, f64),
    Offset(Var),
    MatMul(Var, Var),
    Affine { x: Var, w: Var, b: Var, relu: bool },
    Transpose(Var),
    Relu(Var),
    MaxConst(Var, f64),
    Abs(Var),
    Sin(Var),
    Cos(Var),
    Sqrt(Var),
    Atan2(Var, Var),
    RowNorm(Var),
    Sum(Var),
    Mean(Var),
    SumCols(Var),
    Column(Var, usize),
    HCat(Vec<Var>),
    Skew(Var),
    RowLinear(Var, Arc<[Mat3]>),
    PosEnc { x: Var, depth: usize, include_input: bool },
}

impl Op {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::Constant => "constant",
            Op::Add(..) => "add",
            Op::Sub(..) => "sub",
            Op::Mul(..) => "mul",
            Op::Div(..) => "div",
            Op::Neg(..) => "neg",
            Op::Scale(..) => "scale",
            Op::Offset(..) => "offset",
            Op::MatMul(..) => "matmul",
            Op::Affine { .. } => "affine",
            Op::Transpose(..) => "transpose",
            Op::Relu(..) => "relu",
            Op::MaxConst(..) => "max_const",
            Op::Abs(..) => "abs",
            Op::Sin(..) => "sin",
            Op::Cos(..) => "cos",
            Op::Sqrt(..) => "sqrt",
            Op::Atan2(..) => "atan2",
            Op::RowNorm(..) => "row_norm",
            Op::Sum(..) => "sum",
            Op::Mean(..) => "mean",
            Op::SumCols(..) => "sum_cols",
            Op::Column(..) => "column",
            Op::HCat(..) => "hcat",
            Op::Skew(..) => "skew",
            Op::RowLinear(..) => "row_linear",
            Op::PosEnc { .. } => "positional_encoding",
        }
    }
}

struct Node {
    op: Op,
    value: Tensor,
    requires_grad: bool,
}

/// Define-by-run record of primitive operations.
///
/// Every operation evaluates eagerly and appends a node; [`Tape::backward`]
/// replays the nodes in reverse order. Leaf gradients accumulate across
/// `backward` calls until [`Tape::zero_grad`].
///
/// Non-finite forward values do not abort recording. The first primitive
/// that produced one is remembered and reported by [`Tape::check`] and
/// [`Tape::backward`].
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    leaf_grads: Vec<Option<Tensor>>,
    poisoned: Option<&'static str>,
    /// Branch pattern to replay instead of comparing values, and the read
    /// position in it.
    frozen: Option<(Vec<i8>, usize)>,
}

fn relu_mask(x: f64, c: f64) -> f64 {
    if x > c {
        1.0
    } else {
        0.0
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Angular frequency `2^i · π` of the i-th encoding band.
pub(crate) fn band_frequency(i: usize) -> f64 {
    (1u64 << i) as f64 * PI
}

pub(crate) fn positional_encoding(x: &Tensor, depth: usize, include_input: bool) -> Tensor {
    let per = 2 * depth + usize::from(include_input);
    let (rows, cols) = x.shape();
    let mut out = Tensor::zeros(rows, cols * per);
    let width = cols * per;
    let data = out.data_mut();
    for r in 0..rows {
        for c in 0..cols {
            let v = x.get(r, c);
            let base = r * width + c * per;
            let mut k = base;
            if include_input {
                data[k] = v;
                k += 1;
            }
            for i in 0..depth {
                let arg = band_frequency(i) * v;
                data[k] = math::sin(arg);
                data[k + 1] = math::cos(arg);
                k += 2;
            }
        }
    }
    out
}

fn row_linear(x: &Tensor, maps: &[Mat3], transpose: bool) -> Tensor {
    assert_eq!(x.cols(), 3, "row_linear expects n×3 input");
    assert_eq!(x.rows(), maps.len(), "row_linear needs one map per row");
    let mut out = Tensor::zeros(x.rows(), 3);
    for (r, m) in maps.iter().enumerate() {
        let v = x.row_slice(r);
        for i in 0..3 {
            let s = if transpose {
                m[0][i] * v[0] + m[1][i] * v[1] + m[2][i] * v[2]
            } else {
                m[i][0] * v[0] + m[i][1] * v[1] + m[i][2] * v[2]
            };
            out.set(r, i, s);
        }
    }
    out
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// A tape on which every ReLU, |·| and max-with-constant keeps the side
    /// recorded in `pattern` (from [`Tape::branch_pattern`] of an identical
    /// recording), so values follow one smooth piece of the function.
    pub fn with_frozen_branches(pattern: Vec<i8>) -> Self {
        Self { frozen: Some((pattern, 0)), ..Self::default() }
    }

    fn frozen_sides(&mut self, n: usize) -> Option<&[i8]> {
        let (pattern, pos) = self.frozen.as_mut()?;
        let start = *pos;
        assert!(start + n <= pattern.len(), "frozen branch pattern does not match the recording");
        *pos += n;
        Some(&pattern[start..start + n])
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, value: Tensor) -> Var {
        let requires_grad = match &op {
            Op::Leaf => true,
            Op::Constant => false,
            Op::HCat(parts) => parts.iter().any(|v| self.nodes[v.0].requires_grad),
            Op::Affine { x, w, b, .. } => [x, w, b].iter().any(|v| self.nodes[v.0].requires_grad),
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) | Op::MatMul(a, b) | Op::Atan2(a, b) => {
                self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad
            }
            Op::Neg(a)
            | Op::Scale(a, _)
            | Op::Offset(a)
            | Op::Transpose(a)
            | Op::Relu(a)
            | Op::MaxConst(a, _)
            | Op::Abs(a)
            | Op::Sin(a)
            | Op::Cos(a)
            | Op::Sqrt(a)
            | Op::RowNorm(a)
            | Op::Sum(a)
            | Op::Mean(a)
            | Op::SumCols(a)
            | Op::Column(a, _)
            | Op::Skew(a)
            | Op::RowLinear(a, _)
            | Op::PosEnc { x: a, .. } => self.nodes[a.0].requires_grad,
        };
        if self.poisoned.is_none() && !value.is_finite() {
            self.poisoned = Some(op.name());
        }
        self.nodes.push(Node { op, value, requires_grad });
        self.leaf_grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// Trainable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(Op::Leaf, value)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Op::Constant, value)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of a leaf, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.leaf_grads[v.0].as_ref()
    }

    /// Gradient of a leaf, or zeros of its shape when no path reached it.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor {
        match self.grad(v) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = self.value(v).shape();
                Tensor::zeros(r, c)
            }
        }
    }

    pub fn zero_grad(&mut self) {
        for g in self.leaf_grads.iter_mut() {
            *g = None;
        }
    }

    /// First primitive that produced a non-finite value.
    pub fn poisoned(&self) -> Option<&'static str> {
        self.poisoned
    }

    /// Which side of its kink every non-smooth primitive (ReLU, |·|, max with
    /// a constant) evaluated on, in recording order. Two evaluations with
    /// equal patterns lie on the same smooth piece.
    pub fn branch_pattern(&self) -> Vec<i8> {
        let sign = |x: f64| (x > 0.0) as i8 - (x < 0.0) as i8;
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::Relu(a) | Op::Abs(a) => out.extend(self.nodes[a.0].value.data().iter().map(|&x| sign(x))),
                Op::MaxConst(a, c) => out.extend(self.nodes[a.0].value.data().iter().map(|&x| sign(x - c))),
                Op::Affine { relu: true, .. } => out.extend(node.value.data().iter().map(|&x| sign(x))),
                _ => {}
            }
        }
        out
    }

    pub fn check(&self) -> Result<(), DiffError> {
        match self.poisoned {
            Some(op) => Err(DiffError::Poisoned { op }),
            None => Ok(()),
        }
    }

    // -----------------------------------------------------------------------
    // primitives

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x + y);
        self.push(Op::Add(a, b), v)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x - y);
        self.push(Op::Sub(a, b), v)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x * y);
        self.push(Op::Mul(a, b), v)
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        let v = zip_broadcast(self.value(a), self.value(b), |x, y| x / y);
        self.push(Op::Div(a, b), v)
    }

    pub fn neg(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| -x);
        self.push(Op::Neg(a), v)
    }

    /// `c · a` for a constant `c`.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| c * x);
        self.push(Op::Scale(a, c), v)
    }

    /// `a + c` for a constant `c`.
    pub fn offset(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(Op::Offset(a), v)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).matmul(self.value(b));
        self.push(Op::MatMul(a, b), v)
    }

    /// `x·W + b` (bias row broadcast over rows), optionally followed by ReLU.
    pub fn affine(&mut self, x: Var, w: Var, b: Var, relu: bool) -> Var {
        let mut v = self.value(x).matmul(self.value(w));
        let bias = self.value(b);
        assert_eq!(bias.shape(), (1, v.cols()), "affine bias must be a 1×out row");
        let cols = v.cols();
        for row in v.data_mut().chunks_exact_mut(cols) {
            for (y, &c) in row.iter_mut().zip(bias.data()) {
                let z = *y + c;
                *y = if relu && !(z > 0.0) { 0.0 } else { z };
            }
        }
        if relu && self.frozen.is_some() {
            let pre = self.value(x).matmul(self.value(w));
            let bias = self.value(b).data().to_vec();
            let sides = self.frozen_sides(v.len()).expect("frozen").to_vec();
            for (k, y) in v.data_mut().iter_mut().enumerate() {
                *y = if sides[k] > 0 { pre.data()[k] + bias[k % cols] } else { 0.0 };
            }
        }
        self.push(Op::Affine { x, w, b, relu }, v)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let v = self.value(a).transpose();
        self.push(Op::Transpose(a), v)
    }

    /// `max(0, a)`; the subgradient at 0 is 0.
    pub fn relu(&mut self, a: Var) -> Var {
        let mut v = self.value(a).map(|x| if x > 0.0 { x } else { 0.0 });
        if self.frozen.is_some() {
            let x = self.value(a).data().to_vec();
            let sides = self.frozen_sides(x.len()).expect("frozen");
            for ((y, x), s) in v.data_mut().iter_mut().zip(x).zip(sides) {
                *y = if *s > 0 { x } else { 0.0 };
            }
        }
        self.push(Op::Relu(a), v)
    }

    /// `max(c, a)` for a constant `c`; the subgradient at `a = c` is 0.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        let mut v = self.value(a).map(|x| if x > c { x } else { c });
        if self.frozen.is_some() {
            let x = self.value(a).data().to_vec();
            let sides = self.frozen_sides(x.len()).expect("frozen");
            for ((y, x), s) in v.data_mut().iter_mut().zip(x).zip(sides) {
                *y = if *s > 0 { x } else { c };
            }
        }
        self.push(Op::MaxConst(a, c), v)
    }

    /// `|a|`; the subgradient at 0 is 0.
    pub fn abs(&mut self, a: Var) -> Var {
        let mut v = self.value(a).map(math::abs);
        if self.frozen.is_some() {
            let x = self.value(a).data().to_vec();
            let sides = self.frozen_sides(x.len()).expect("frozen");
            for ((y, x), s) in v.data_mut().iter_mut().zip(x).zip(sides) {
                *y = match s {
                    1 => x,
                    -1 => -x,
                    _ => *y,
                };
            }
        }
        self.push(Op::Abs(a), v)
    }

    pub fn sin(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::sin);
        self.push(Op::Sin(a), v)
    }

    pub fn cos(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::cos);
        self.push(Op::Cos(a), v)
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        let v = self.value(a).map(math::sqrt);
        self.push(Op::Sqrt(a), v)
    }

    /// Elementwise `atan2(y, x)`; shapes must match.
    pub fn atan2(&mut self, y: Var, x: Var) -> Var {
        assert_eq!(self.value(y).shape(), self.value(x).shape(), "atan2 operands differ in shape");
        let v = zip_broadcast(self.value(y), self.value(x), math::atan2);
        self.push(Op::Atan2(y, x), v)
    }

    /// Euclidean norm of each row: n×k → n×1. The subgradient at a zero row
    /// is 0.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let norms: Vec<f64> = (0..x.rows())
            .map(|r| math::sqrt(x.row_slice(r).iter().map(|v| v * v).sum()))
            .collect();
        self.push(Op::RowNorm(a), Tensor::column(&norms))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Tensor::scalar(self.value(a).sum());
        self.push(Op::Sum(a), v)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let v = Tensor::scalar(x.sum() / x.len() as f64);
        self.push(Op::Mean(a), v)
    }

    /// Row sums: n×k → n×1.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let sums: Vec<f64> = (0..x.rows()).map(|r| x.row_slice(r).iter().sum()).collect();
        self.push(Op::SumCols(a), Tensor::column(&sums))
    }

    /// Column `j` as an n×1 tensor.
    pub fn column(&mut self, a: Var, j: usize) -> Var {
        let x = self.value(a);
        assert!(j < x.cols(), "column index out of range");
        let col: Vec<f64> = (0..x.rows()).map(|r| x.get(r, j)).collect();
        self.push(Op::Column(a, j), Tensor::column(&col))
    }

    /// Horizontal concatenation of tensors with equal row counts.
    pub fn hcat(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "hcat of nothing");
        let rows = self.value(parts[0]).rows();
        let cols: usize = parts.iter().map(|p| self.value(*p).cols()).sum();
        let mut out = Tensor::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            let x = self.value(*p);
            assert_eq!(x.rows(), rows, "hcat row counts differ");
            for r in 0..rows {
                for c in 0..x.cols() {
                    out.set(r, offset + c, x.get(r, c));
                }
            }
            offset += x.cols();
        }
        self.push(Op::HCat(parts.to_vec()), out)
    }

    /// 1×3 vector → 3×3 cross-product matrix.
    pub fn skew(&mut self, w: Var) -> Var {
        let x = self.value(w);
        assert_eq!(x.len(), 3, "skew expects a 3-vector");
        let d = x.data();
        let m = crate::geometry::skew(&[d[0], d[1], d[2]]);
        self.push(Op::Skew(w), Tensor::from_rows(&m))
    }

    /// Applies a fixed 3×3 map to each row: `y_n = M_n · x_n`.
    pub fn row_linear(&mut self, x: Var, maps: Arc<[Mat3]>) -> Var {
        let v = row_linear(self.value(x), &maps, false);
        self.push(Op::RowLinear(x, maps), v)
    }

    /// Sinusoidal encoding of every entry: n×k → n×(k·(2L + include_input)),
    /// entry blocks laid out `[x?, sin(2⁰πx), cos(2⁰πx), …]`.
    pub fn positional_encoding(&mut self, x: Var, depth: usize, include_input: bool) -> Var {
        let v = positional_encoding(self.value(x), depth, include_input);
        self.push(Op::PosEnc { x, depth, include_input }, v)
    }

    // -----------------------------------------------------------------------
    // reverse pass

    /// Accumulates `∂loss/∂leaf` into every leaf that `loss` depends on.
    pub fn backward(&mut self, loss: Var) -> Result<(), DiffError> {
        if !self.value(loss).is_scalar() {
            return Err(DiffError::InvalidArgument("backward needs a scalar loss"));
        }
        self.check()?;
        let mut grads: Vec<Option<Tensor>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let name = node.op.name();
            let mut contributions: Vec<(Var, Tensor)> = Vec::new();
            let needs = |v: &Var| self.nodes[v.0].requires_grad;
            let val = |v: &Var| &self.nodes[v.0].value;

            match &node.op {
                Op::Leaf => {
                    match &mut self.leaf_grads[idx] {
                        Some(acc) => acc.add_assign(&g),
                        slot @ None => *slot = Some(g),
                    }
                    continue;
                }
                Op::Constant => {}
                Op::Add(a, b) => {
                    if needs(a) {
                        contributions.push((*a, reduce_to(g.clone(), val(a).shape())));
                    }
                    if needs(b) {
                        contributions.push((*b, reduce_to(g, val(b).shape())));
                    }
                }
                Op::Sub(a, b) => {
                    if needs(a) {
                        contributions.push((*a, reduce_to(g.clone(), val(a).shape())));
                    }
                    if needs(b) {
                        contributions.push((*b, reduce_to(g.map(|x| -x), val(b).shape())));
                    }
                }
                Op::Mul(a, b) => {
                    if needs(a) {
                        let ga = zip_broadcast(&g, val(b), |x, y| x * y);
                        contributions.push((*a, reduce_to(ga, val(a).shape())));
                    }
                    if needs(b) {
                        let gb = zip_broadcast(&g, val(a), |x, y| x * y);
                        contributions.push((*b, reduce_to(gb, val(b).shape())));
                    }
                }
                Op::Div(a, b) => {
                    if needs(a) {
                        let ga = zip_broadcast(&g, val(b), |x, y| x / y);
                        contributions.push((*a, reduce_to(ga, val(a).shape())));
                    }
                    if needs(b) {
                        // ∂(a/b)/∂b = −(a/b)/b = −out/b
                        let t = zip_broadcast(&g, &node.value, |x, y| -x * y);
                        let gb = zip_broadcast(&t, val(b), |x, y| x / y);
                        contributions.push((*b, reduce_to(gb, val(b).shape())));
                    }
                }
                Op::Neg(a) => contributions.push((*a, g.map(|x| -x))),
                Op::Scale(a, c) => {
                    let c = *c;
                    contributions.push((*a, g.map(|x| c * x)));
                }
                Op::Offset(a) => contributions.push((*a, g)),
                Op::MatMul(a, b) => {
                    if needs(a) {
                        contributions.push((*a, gemm(&g, false, val(b), true)));
                    }
                    if needs(b) {
                        contributions.push((*b, gemm(val(a), true, &g, false)));
                    }
                }
                Op::Affine { x, w, b, relu } => {
                    let mut g = g;
                    if *relu {
                        for (gk, &y) in g.data_mut().iter_mut().zip(node.value.data()) {
                            if !(y > 0.0) {
                                *gk = 0.0;
                            }
                        }
                    }
                    if needs(x) {
                        contributions.push((*x, gemm(&g, false, val(w), true)));
                    }
                    if needs(w) {
                        contributions.push((*w, gemm(val(x), true, &g, false)));
                    }
                    if needs(b) {
                        contributions.push((*b, reduce_to(g, val(b).shape())));
                    }
                }
                Op::Transpose(a) => contributions.push((*a, g.transpose())),
                Op::Relu(a) => {
                    let ga = zip_broadcast(&g, val(a), |x, y| x * relu_mask(y, 0.0));
                    contributions.push((*a, ga));
                }
                Op::MaxConst(a, c) => {
                    let c = *c;
                    let ga = zip_broadcast(&g, val(a), |x, y| x * relu_mask(y, c));
                    contributions.push((*a, ga));
                }
                Op::Abs(a) => {
                    let ga = zip_broadcast(&g, val(a), |x, y| x * sign(y));
                    contributions.push((*a, ga));
                }
                Op::Sin(a) => {
                    let ga = zip_broadcast(&g, val(a), |x, y| x * math::cos(y));
                    contributions.push((*a, ga));
                }
                Op::Cos(a) => {
                    let ga = zip_broadcast(&g, val(a), |x, y| -x * math::sin(y));
                    contributions.push((*a, ga));
                }
                Op::Sqrt(a) => {
                    let ga = zip_broadcast(&g, &node.value, |x, y| x / (2.0 * y));
                    contributions.push((*a, ga));
                }
                Op::Atan2(y, x) => {
                    let (yv, xv) = (val(y), val(x));
                    let denom = zip_broadcast(yv, xv, |p, q| p * p + q * q);
                    if needs(y) {
                        let t = zip_broadcast(&g, xv, |p, q| p * q);
                        contributions.push((*y, zip_broadcast(&t, &denom, |p, q| p / q)));
                    }
                    if needs(x) {
                        let t = zip_broadcast(&g, yv, |p, q| -p * q);
                        contributions.push((*x, zip_broadcast(&t, &denom, |p, q| p / q)));
                    }
                }
                Op::RowNorm(a) => {
                    let x = val(a);
                    let mut ga = Tensor::zeros(x.rows(), x.cols());
                    for r in 0..x.rows() {
                        let n = node.value.get(r, 0);
                        if n > 0.0 {
                            let f = g.get(r, 0) / n;
                            for c in 0..x.cols() {
                                ga.set(r, c, f * x.get(r, c));
                            }
                        }
                    }
                    contributions.push((*a, ga));
                }
                Op::Sum(a) => {
                    let (r, c) = val(a).shape();
                    contributions.push((*a, Tensor::filled(r, c, g.item())));
                }
                Op::Mean(a) => {
                    let (r, c) = val(a).shape();
                    contributions.push((*a, Tensor::filled(r, c, g.item() / (r * c) as f64)));
                }
                Op::SumCols(a) => {
                    let (r, c) = val(a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        let gi = g.get(i, 0);
                        for j in 0..c {
                            ga.set(i, j, gi);
                        }
                    }
                    contributions.push((*a, ga));
                }
                Op::Column(a, j) => {
                    let (r, c) = val(a).shape();
                    let mut ga = Tensor::zeros(r, c);
                    for i in 0..r {
                        ga.set(i, *j, g.get(i, 0));
                    }
                    contributions.push((*a, ga));
                }
                Op::HCat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let (r, c) = val(p).shape();
                        if needs(p) {
                            let mut gp = Tensor::zeros(r, c);
                            for i in 0..r {
                                for k in 0..c {
                                    gp.set(i, k, g.get(i, offset + k));
                                }
                            }
                            contributions.push((*p, gp));
                        }
                        offset += c;
                    }
                }
                Op::Skew(w) => {
                    let gw = [
                        g.get(2, 1) - g.get(1, 2),
                        g.get(0, 2) - g.get(2, 0),
                        g.get(1, 0) - g.get(0, 1),
                    ];
                    let (r, c) = val(w).shape();
                    contributions.push((*w, Tensor::new(r, c, gw.to_vec())));
                }
                Op::RowLinear(x, maps) => {
                    contributions.push((*x, row_linear(&g, maps, true)));
                }
                Op::PosEnc { x, depth, include_input } => {
                    let xv = val(x);
                    let per = 2 * depth + usize::from(*include_input);
                    let width = xv.cols() * per;
                    let out = node.value.data();
                    let gd = g.data();
                    let mut gx = Tensor::zeros(xv.rows(), xv.cols());
                    for r in 0..xv.rows() {
                        for c in 0..xv.cols() {
                            let mut k = r * width + c * per;
                            let mut acc = 0.0;
                            if *include_input {
                                acc += gd[k];
                                k += 1;
                            }
                            for i in 0..*depth {
                                let f = band_frequency(i);
                                acc += f * (gd[k] * out[k + 1] - gd[k + 1] * out[k]);
                                k += 2;
                            }
                            gx.set(r, c, acc);
                        }
                    }
                    contributions.push((*x, gx));
                }
            }

            for (v, t) in contributions {
                if !t.is_finite() {
                    return Err(DiffError::Poisoned { op: name });
                }
                match &mut grads[v.0] {
                    Some(acc) => acc.add_assign(&t),
                    slot @ None => *slot = Some(t),
                }
            }
        }
        Ok(())
    }
}
