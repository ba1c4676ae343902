//! Reverse-mode automatic differentiation over a per-trajectory tape.
//!
//! The tape records matrix-valued primitive ops in execution order; the
//! backward pass walks the node list once in reverse, so gradients are
//! deterministic and each node is visited exactly once. Tapes are rebuilt
//! per trajectory (sequence lengths vary, networks are tiny).

use crate::error::{Error, Result};
use crate::numerics::matrix::Matrix;

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

const NO_INPUT: usize = usize::MAX;

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul,
    Add,
    Sub,
    Hadamard,
    Sigmoid,
    Tanh,
    Relu,
    /// value = mul * x + add, elementwise with constants (add only affects
    /// the forward value)
    AffineConst { mul: f64 },
    /// value = x / (||x||_2 + eps)
    Normalize { eps: f64 },
    /// stack two column vectors vertically
    ConcatRows,
    Reshape,
    SliceRows { start: usize },
    /// sum of squared entries -> 1x1
    SumSquares,
}

struct Node {
    op: Op,
    a: usize,
    b: usize,
    value: Matrix,
    needs_grad: bool,
}

/// Gradients produced by one backward pass, indexed by `Var`.
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient of the loss w.r.t. a node; `None` when the node does not
    /// reach the loss (its gradient is identically zero).
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads[v.0].as_ref()
    }

    /// Flatten gradients of the given leaf vars into one vector, in order.
    /// Unreached leaves contribute zeros.
    pub fn flatten(&self, leaves: &[Var], sizes: &[usize]) -> Vec<f64> {
        let mut out = Vec::with_capacity(sizes.iter().sum());
        for (v, &size) in leaves.iter().zip(sizes.iter()) {
            match self.get(*v) {
                Some(g) => out.extend_from_slice(g.data()),
                None => out.extend(std::iter::repeat(0.0).take(size)),
            }
        }
        out
    }
}

pub struct Tape {
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    fn push(&mut self, op: Op, a: usize, b: usize, value: Matrix, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            op,
            a,
            b,
            value,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, i: usize) -> bool {
        i != NO_INPUT && self.nodes[i].needs_grad
    }

    /// Trainable leaf: gradients are tracked through it.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, NO_INPUT, NO_INPUT, value, true)
    }

    /// Constant leaf: no gradient flows into it.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(Op::Leaf, NO_INPUT, NO_INPUT, value, false)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.matmul(&self.nodes[b.0].value)?;
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(Op::MatMul, a.0, b.0, value, needs))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.add(&self.nodes[b.0].value)?;
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(Op::Add, a.0, b.0, value, needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.sub(&self.nodes[b.0].value)?;
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(Op::Sub, a.0, b.0, value, needs))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.nodes[a.0].value.hadamard(&self.nodes[b.0].value)?;
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(Op::Hadamard, a.0, b.0, value, needs))
    }

    fn unary(&mut self, op: Op, a: Var, f: impl Fn(f64) -> f64) -> Var {
        let src = &self.nodes[a.0].value;
        let value = Matrix::new(
            src.rows(),
            src.cols(),
            src.data().iter().map(|&x| f(x)).collect(),
        );
        let needs = self.needs(a.0);
        self.push(op, a.0, NO_INPUT, value, needs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.unary(Op::Sigmoid, a, |x| 1.0 / (1.0 + (-x).exp()))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.unary(Op::Tanh, a, f64::tanh)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.unary(Op::Relu, a, |x| if x > 0.0 { x } else { 0.0 })
    }

    /// Elementwise `mul * x + add` with scalar constants.
    pub fn affine_const(&mut self, a: Var, mul: f64, add: f64) -> Var {
        self.unary(Op::AffineConst { mul }, a, |x| mul * x + add)
    }

    /// L2 normalization with additive guard: `x / (||x|| + eps)`.
    pub fn normalize(&mut self, a: Var, eps: f64) -> Var {
        let src = &self.nodes[a.0].value;
        let norm = src.data().iter().map(|v| v * v).sum::<f64>().sqrt();
        let inv = 1.0 / (norm + eps);
        let value = Matrix::new(
            src.rows(),
            src.cols(),
            src.data().iter().map(|&x| x * inv).collect(),
        );
        let needs = self.needs(a.0);
        self.push(Op::Normalize { eps }, a.0, NO_INPUT, value, needs)
    }

    /// Vertical concatenation of two column vectors.
    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (&self.nodes[a.0].value, &self.nodes[b.0].value);
        if va.cols() != 1 || vb.cols() != 1 {
            return Err(Error::DimensionMismatch {
                op: "concat_rows",
                details: format!("{}x{} + {}x{}", va.rows(), va.cols(), vb.rows(), vb.cols()),
            });
        }
        let mut data = Vec::with_capacity(va.rows() + vb.rows());
        data.extend_from_slice(va.data());
        data.extend_from_slice(vb.data());
        let value = Matrix::new(va.rows() + vb.rows(), 1, data);
        let needs = self.needs(a.0) || self.needs(b.0);
        Ok(self.push(Op::ConcatRows, a.0, b.0, value, needs))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        if src.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "reshape",
                details: format!("{} entries into {}x{}", src.len(), rows, cols),
            });
        }
        let value = Matrix::new(rows, cols, src.data().to_vec());
        let needs = self.needs(a.0);
        Ok(self.push(Op::Reshape, a.0, NO_INPUT, value, needs))
    }

    /// Rows `start..start+len` of a column vector.
    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let src = &self.nodes[a.0].value;
        if src.cols() != 1 || start + len > src.rows() {
            return Err(Error::DimensionMismatch {
                op: "slice_rows",
                details: format!("rows {}..{} of {}x1", start, start + len, src.rows()),
            });
        }
        let value = Matrix::new(len, 1, src.data()[start..start + len].to_vec());
        let needs = self.needs(a.0);
        Ok(self.push(Op::SliceRows { start }, a.0, NO_INPUT, value, needs))
    }

    /// Sum of squared entries, as a 1x1 node.
    pub fn sum_squares(&mut self, a: Var) -> Var {
        let s: f64 = self.nodes[a.0].value.data().iter().map(|v| v * v).sum();
        let needs = self.needs(a.0);
        self.push(Op::SumSquares, a.0, NO_INPUT, Matrix::new(1, 1, vec![s]), needs)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = &self.nodes[v.0].value;
        debug_assert_eq!(m.len(), 1);
        m.data()[0]
    }

    /// Backward pass from a scalar loss node. Returns one gradient slot per
    /// tape node; nodes that do not reach the loss stay `None`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lm = &self.nodes[loss.0].value;
        if lm.len() != 1 {
            return Err(Error::InvalidArgument(format!(
                "backward requires a scalar loss node, got {}x{}",
                lm.rows(),
                lm.cols()
            )));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::new(1, 1, vec![1.0]));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(out_grad) = grads[i].take() else {
                continue;
            };
            match node.op {
                Op::Leaf => {
                    grads[i] = Some(out_grad);
                    continue;
                }
                Op::MatMul => {
                    let (a, b) = (node.a, node.b);
                    if self.needs(a) {
                        let bt = self.nodes[b].value.transpose();
                        let da = out_grad.matmul(&bt)?;
                        accumulate(&mut grads[a], da);
                    }
                    if self.needs(b) {
                        let at = self.nodes[a].value.transpose();
                        let db = at.matmul(&out_grad)?;
                        accumulate(&mut grads[b], db);
                    }
                }
                Op::Add => {
                    if self.needs(node.a) {
                        accumulate(&mut grads[node.a], out_grad.clone());
                    }
                    if self.needs(node.b) {
                        accumulate(&mut grads[node.b], out_grad);
                    }
                }
                Op::Sub => {
                    if self.needs(node.a) {
                        accumulate(&mut grads[node.a], out_grad.clone());
                    }
                    if self.needs(node.b) {
                        accumulate(&mut grads[node.b], out_grad.scale(-1.0));
                    }
                }
                Op::Hadamard => {
                    if self.needs(node.a) {
                        let da = out_grad.hadamard(&self.nodes[node.b].value)?;
                        accumulate(&mut grads[node.a], da);
                    }
                    if self.needs(node.b) {
                        let db = out_grad.hadamard(&self.nodes[node.a].value)?;
                        accumulate(&mut grads[node.b], db);
                    }
                }
                Op::Sigmoid => {
                    let y = &node.value;
                    let da = zip3(&out_grad, y, |g, y| g * y * (1.0 - y));
                    accumulate(&mut grads[node.a], da);
                }
                Op::Tanh => {
                    let y = &node.value;
                    let da = zip3(&out_grad, y, |g, y| g * (1.0 - y * y));
                    accumulate(&mut grads[node.a], da);
                }
                Op::Relu => {
                    let x = &self.nodes[node.a].value;
                    let da = zip3(&out_grad, x, |g, x| if x > 0.0 { g } else { 0.0 });
                    accumulate(&mut grads[node.a], da);
                }
                Op::AffineConst { mul, .. } => {
                    accumulate(&mut grads[node.a], out_grad.scale(mul));
                }
                Op::Normalize { eps } => {
                    // y = x / (n + eps), n = ||x||
                    // dx = g/(n+eps) - x * (x.g) / (n (n+eps)^2)
                    let x = &self.nodes[node.a].value;
                    let n = x.data().iter().map(|v| v * v).sum::<f64>().sqrt();
                    let denom = n + eps;
                    let mut da = out_grad.scale(1.0 / denom);
                    if n > 0.0 {
                        let dot: f64 = x
                            .data()
                            .iter()
                            .zip(out_grad.data().iter())
                            .map(|(a, b)| a * b)
                            .sum();
                        let coeff = dot / (n * denom * denom);
                        for (d, &xv) in da.data_mut().iter_mut().zip(x.data().iter()) {
                            *d -= coeff * xv;
                        }
                    }
                    accumulate(&mut grads[node.a], da);
                }
                Op::ConcatRows => {
                    let ra = self.nodes[node.a].value.rows();
                    if self.needs(node.a) {
                        let da = Matrix::new(ra, 1, out_grad.data()[..ra].to_vec());
                        accumulate(&mut grads[node.a], da);
                    }
                    if self.needs(node.b) {
                        let rb = self.nodes[node.b].value.rows();
                        let db = Matrix::new(rb, 1, out_grad.data()[ra..ra + rb].to_vec());
                        accumulate(&mut grads[node.b], db);
                    }
                }
                Op::Reshape => {
                    let src = &self.nodes[node.a].value;
                    let da = Matrix::new(src.rows(), src.cols(), out_grad.data().to_vec());
                    accumulate(&mut grads[node.a], da);
                }
                Op::SliceRows { start } => {
                    let src = &self.nodes[node.a].value;
                    let mut da = Matrix::zeros(src.rows(), src.cols());
                    da.data_mut()[start..start + out_grad.len()].copy_from_slice(out_grad.data());
                    accumulate(&mut grads[node.a], da);
                }
                Op::SumSquares => {
                    let x = &self.nodes[node.a].value;
                    let g = out_grad.data()[0];
                    let da = x.scale(2.0 * g);
                    accumulate(&mut grads[node.a], da);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(slot: &mut Option<Matrix>, grad: Matrix) {
    match slot {
        Some(existing) => existing.add_assign(&grad),
        None => *slot = Some(grad),
    }
}

fn zip3(g: &Matrix, y: &Matrix, f: impl Fn(f64, f64) -> f64) -> Matrix {
    Matrix::new(
        g.rows(),
        g.cols(),
        g.data()
            .iter()
            .zip(y.data().iter())
            .map(|(&a, &b)| f(a, b))
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central finite differences of a scalar function of a flat parameter
    /// vector. Step 1e-5 per the gradient-check contract.
    pub fn finite_difference(params: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
        let h = 1e-5;
        let mut grad = vec![0.0; params.len()];
        let mut work = params.to_vec();
        for i in 0..params.len() {
            work[i] = params[i] + h;
            let up = f(&work);
            work[i] = params[i] - h;
            let down = f(&work);
            work[i] = params[i];
            grad[i] = (up - down) / (2.0 * h);
        }
        grad
    }

    pub fn max_rel_err(analytic: &[f64], numeric: &[f64]) -> f64 {
        analytic
            .iter()
            .zip(numeric.iter())
            .map(|(&a, &n)| {
                let denom = a.abs().max(n.abs()).max(1e-6);
                (a - n).abs() / denom
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn square_loss_gradient_analytic() {
        // loss = p^2 at p=3 -> gradient 6
        let mut tape = Tape::new();
        let p = tape.param(Matrix::new(1, 1, vec![3.0]));
        let loss = tape.sum_squares(p);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(p).unwrap().data()[0], 6.0);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut tape = Tape::new();
        let p = tape.param(Matrix::new(2, 1, vec![1.0, 2.0]));
        let c = tape.constant(Matrix::new(1, 1, vec![5.0]));
        let loss = tape.sum_squares(c);
        let grads = tape.backward(loss).unwrap();
        // p does not reach the loss: gradient is zero
        assert!(grads.get(p).is_none());
        let flat = grads.flatten(&[p], &[2]);
        assert_eq!(flat, vec![0.0, 0.0]);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let p = tape.param(Matrix::new(2, 1, vec![1.0, 2.0]));
        assert!(tape.backward(p).is_err());
    }

    #[test]
    fn fc_layer_matches_finite_differences() {
        // loss = sum(sigmoid(W x + b)) on a 3x3 layer
        let w0: Vec<f64> = (0..9).map(|i| 0.3 * (i as f64 - 4.0) / 4.0).collect();
        let b0 = vec![0.1, -0.2, 0.05];
        let x = Matrix::new(3, 1, vec![0.4, -1.2, 0.7]);
        let mut params: Vec<f64> = w0.clone();
        params.extend_from_slice(&b0);

        let eval = |p: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let w = tape.param(Matrix::new(3, 3, p[..9].to_vec()));
            let b = tape.param(Matrix::new(3, 1, p[9..].to_vec()));
            let xv = tape.constant(x.clone());
            let z = tape.matmul(w, xv).unwrap();
            let z = tape.add(z, b).unwrap();
            let y = tape.sigmoid(z);
            // sum via ones^T y, then square-root of square to keep scalar: use
            // sum of entries = ones . y
            let ones = tape.constant(Matrix::new(1, 3, vec![1.0; 3]));
            let s = tape.matmul(ones, y).unwrap();
            tape.scalar(s)
        };

        let mut tape = Tape::new();
        let w = tape.param(Matrix::new(3, 3, params[..9].to_vec()));
        let b = tape.param(Matrix::new(3, 1, params[9..].to_vec()));
        let xv = tape.constant(x.clone());
        let z = tape.matmul(w, xv).unwrap();
        let z = tape.add(z, b).unwrap();
        let y = tape.sigmoid(z);
        let ones = tape.constant(Matrix::new(1, 3, vec![1.0; 3]));
        let s = tape.matmul(ones, y).unwrap();
        let grads = tape.backward(s).unwrap();
        let analytic = grads.flatten(&[w, b], &[9, 3]);
        let numeric = finite_difference(&params, eval);
        assert!(
            max_rel_err(&analytic, &numeric) < 1e-4,
            "rel err {}",
            max_rel_err(&analytic, &numeric)
        );
    }

    #[test]
    fn normalize_matches_finite_differences() {
        let x0 = vec![0.5, -1.5, 2.0, 0.1];
        let eval = |p: &[f64]| -> f64 {
            let mut tape = Tape::new();
            let x = tape.param(Matrix::new(4, 1, p.to_vec()));
            let y = tape.normalize(x, 1e-8);
            let w = tape.constant(Matrix::new(1, 4, vec![0.3, -0.7, 0.2, 1.1]));
            let s = tape.matmul(w, y).unwrap();
            tape.scalar(s)
        };
        let mut tape = Tape::new();
        let x = tape.param(Matrix::new(4, 1, x0.clone()));
        let y = tape.normalize(x, 1e-8);
        let w = tape.constant(Matrix::new(1, 4, vec![0.3, -0.7, 0.2, 1.1]));
        let s = tape.matmul(w, y).unwrap();
        let grads = tape.backward(s).unwrap();
        let analytic = grads.flatten(&[x], &[4]);
        let numeric = finite_difference(&x0, eval);
        assert!(max_rel_err(&analytic, &numeric) < 1e-4);
    }

    #[test]
    fn backward_is_deterministic() {
        let mut tape = Tape::new();
        let w = tape.param(Matrix::new(2, 2, vec![0.5, -0.3, 0.8, 0.1]));
        let x = tape.constant(Matrix::new(2, 1, vec![1.0, -2.0]));
        let z = tape.matmul(w, x).unwrap();
        let y = tape.tanh(z);
        let loss = tape.sum_squares(y);
        let g1 = tape.backward(loss).unwrap();
        let g2 = tape.backward(loss).unwrap();
        assert_eq!(g1.get(w).unwrap(), g2.get(w).unwrap());
    }

    #[test]
    fn slice_and_concat_roundtrip_gradients() {
        let mut tape = Tape::new();
        let x = tape.param(Matrix::new(4, 1, vec![1.0, 2.0, 3.0, 4.0]));
        let top = tape.slice_rows(x, 0, 2).unwrap();
        let bottom = tape.slice_rows(x, 2, 2).unwrap();
        let back = tape.concat_rows(top, bottom).unwrap();
        let loss = tape.sum_squares(back);
        let grads = tape.backward(loss).unwrap();
        let g = grads.get(x).unwrap();
        assert_eq!(g.data(), &[2.0, 4.0, 6.0, 8.0]);
    }
}
