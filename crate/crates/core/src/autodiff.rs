//! Define-by-run reverse-mode automatic differentiation.
//!
//! Every operation on a [`Tape`] evaluates eagerly and appends a node that
//! remembers its inputs. Nodes are stored in execution order, so a single
//! reverse sweep over the node list is a valid topological order for
//! backpropagation.
//!
//! ```
//! use mgtnet::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.leaf(&Tensor::new(&[2], vec![1.0, 2.0]).unwrap().with_grad());
//! let sq = tape.mul(x, x).unwrap();
//! let loss = tape.sum(sq);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[2.0, 4.0]);
//! ```

use rand::Rng;

use crate::error::TensorError;
use crate::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddRow(Var, Var),
    Relu(Var),
    Abs(Var),
    /// Elementwise map with its derivative evaluated at the forward input.
    Map(Var, Vec<f64>),
    SoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    Stack(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    Dropout(Var, Vec<f64>),
    Sum(Var),
    Mean(Var),
    SliceCols {
        x: Var,
        start: usize,
    },
    DilatedConv {
        x: Var,
        kernel: Var,
        half_width: usize,
        dilation: usize,
    },
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::AddRow(a, b) => {
                vec![*a, *b]
            }
            Op::Scale(a, _)
            | Op::Relu(a)
            | Op::Abs(a)
            | Op::Map(a, _)
            | Op::SoftmaxRows(a)
            | Op::Reshape(a)
            | Op::Transpose(a)
            | Op::Dropout(a, _)
            | Op::Sum(a)
            | Op::Mean(a) => vec![*a],
            Op::LayerNorm { x, gain, bias, .. } => vec![*x, *gain, *bias],
            Op::ConcatCols(vs) | Op::Stack(vs) => vs.clone(),
            Op::SliceCols { x, .. } => vec![*x],
            Op::DilatedConv { x, kernel, .. } => vec![*x, *kernel],
        }
    }
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
}

/// A single-threaded computation record. Build one per forward pass.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a copy of `t` as a leaf; it tracks gradients iff `t.requires_grad()`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push_node(t.shape().to_vec(), t.data().to_vec(), Op::Leaf, t.requires_grad())
    }

    /// Records a non-differentiable input.
    pub fn constant(&mut self, t: Tensor) -> Var {
        let shape = t.shape().to_vec();
        self.push_node(shape, t.into_data(), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(&n.shape, n.value.clone()).expect("tape nodes hold valid shapes")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        let val = self.value(v);
        assert_eq!(val.len(), 1, "scalar() on a node with {} elements", val.len());
        val[0]
    }

    /// Accumulated gradient of a leaf after [`Tape::backward`].
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push_node(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, requires_grad: bool) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node {
            shape,
            value,
            op,
            requires_grad,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        let rg = op.inputs().iter().any(|v| self.nodes[v.0].requires_grad);
        self.push_node(shape, value, op, rg)
    }

    fn dims2(&self, v: Var, op: &'static str) -> Result<(usize, usize), TensorError> {
        match self.shape(v) {
            [r, c] => Ok((*r, *c)),
            s => Err(TensorError::Rank {
                op,
                expected: 2,
                shape: s.to_vec(),
            }),
        }
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<(), TensorError> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (m, k) = self.dims2(a, "matmul")?;
        let (k2, n) = self.dims2(b, "matmul")?;
        if k != k2 {
            return Err(TensorError::Shape {
                op: "matmul",
                left: vec![m, k],
                right: vec![k2, n],
            });
        }
        let out = matmul_raw(self.value(a), self.value(b), m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b)))
    }

    fn zip_with(
        &mut self,
        a: Var,
        b: Var,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, TensorError> {
        self.same_shape(a, b, name)?;
        let out = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), out, op))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.zip_with(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let out = self.value(a).iter().map(|x| x * s).collect();
        self.push(self.shape(a).to_vec(), out, Op::Scale(a, s))
    }

    /// Adds a length-`F` vector to every row of an `N×F` matrix.
    pub fn add_row(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (n, f) = self.dims2(x, "add_row")?;
        if self.shape(bias) != [f] {
            return Err(TensorError::Shape {
                op: "add_row",
                left: vec![n, f],
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(f)
            .flat_map(|row| row.iter().zip(b).map(|(x, b)| x + b))
            .collect();
        Ok(self.push(vec![n, f], out, Op::AddRow(x, bias)))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|&x| x.max(0.0)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Relu(a))
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let out = self.value(a).iter().map(|x| x.abs()).collect();
        self.push(self.shape(a).to_vec(), out, Op::Abs(a))
    }

    /// Elementwise `f` with caller-supplied derivative `df`.
    pub fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, df: impl Fn(f64) -> f64) -> Var {
        let x = self.value(a);
        let out = x.iter().map(|&v| f(v)).collect();
        let d = x.iter().map(|&v| df(v)).collect();
        self.push(self.shape(a).to_vec(), out, Op::Map(a, d))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var, TensorError> {
        let (_, c) = self.dims2(a, "softmax_rows")?;
        let out = softmax_rows_raw(self.value(a), c);
        Ok(self.push(self.shape(a).to_vec(), out, Op::SoftmaxRows(a)))
    }

    /// Normalises each row of an `N×F` matrix to zero mean and unit
    /// (population) variance, then applies `gain` and `bias`.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var, TensorError> {
        let (n, f) = self.dims2(x, "layer_norm")?;
        for p in [gain, bias] {
            if self.shape(p) != [f] {
                return Err(TensorError::Shape {
                    op: "layer_norm",
                    left: vec![n, f],
                    right: self.shape(p).to_vec(),
                });
            }
        }
        let mut xhat = Vec::with_capacity(n * f);
        let mut inv_std = Vec::with_capacity(n);
        for row in self.value(x).chunks(f) {
            let mean = row.iter().sum::<f64>() / f as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f as f64;
            let is = 1.0 / (var + eps).sqrt();
            inv_std.push(is);
            xhat.extend(row.iter().map(|v| (v - mean) * is));
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let out = xhat
            .chunks(f)
            .flat_map(|row| row.iter().zip(g).zip(b).map(|((x, g), b)| x * g + b))
            .collect();
        Ok(self.push(
            vec![n, f],
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
        ))
    }

    /// Concatenates matrices with equal row counts along the column axis.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Contract("concat_cols of zero tensors".into()))?;
        let (n, _) = self.dims2(first, "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (r, c) = self.dims2(p, "concat_cols")?;
            if r != n {
                return Err(TensorError::Shape {
                    op: "concat_cols",
                    left: self.shape(first).to_vec(),
                    right: self.shape(p).to_vec(),
                });
            }
            widths.push(c);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(n * total);
        for i in 0..n {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        Ok(self.push(vec![n, total], out, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks equal-shape tensors along a new leading axis.
    pub fn stack(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = *parts
            .first()
            .ok_or_else(|| TensorError::Contract("stack of zero tensors".into()))?;
        let inner = self.shape(first).to_vec();
        let mut out = Vec::with_capacity(parts.len() * self.value(first).len());
        for &p in parts {
            if self.shape(p) != inner.as_slice() {
                return Err(TensorError::Shape {
                    op: "stack",
                    left: inner,
                    right: self.shape(p).to_vec(),
                });
            }
            out.extend_from_slice(self.value(p));
        }
        let mut shape = vec![parts.len()];
        shape.extend(inner);
        Ok(self.push(shape, out, Op::Stack(parts.to_vec())))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let numel: usize = shape.iter().product();
        if numel != self.value(a).len() || shape.contains(&0) {
            return Err(TensorError::Shape {
                op: "reshape",
                left: self.shape(a).to_vec(),
                right: shape.to_vec(),
            });
        }
        let out = self.value(a).to_vec();
        Ok(self.push(shape.to_vec(), out, Op::Reshape(a)))
    }

    pub fn transpose(&mut self, a: Var) -> Result<Var, TensorError> {
        let (r, c) = self.dims2(a, "transpose")?;
        let out = transpose_raw(self.value(a), r, c);
        Ok(self.push(vec![c, r], out, Op::Transpose(a)))
    }

    /// Inverted dropout: surviving entries are scaled by `1 / (1 - p)`.
    /// With `p == 0` the input is returned unchanged and no randomness is drawn.
    pub fn dropout<R: Rng + ?Sized>(&mut self, a: Var, p: f64, rng: &mut R) -> Result<Var, TensorError> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::Contract(format!("dropout rate {p} outside [0, 1)")));
        }
        if p == 0.0 {
            return Ok(a);
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(a).len())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = self.value(a).iter().zip(&mask).map(|(x, m)| x * m).collect();
        Ok(self.push(self.shape(a).to_vec(), out, Op::Dropout(a, mask)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        self.push(vec![1], vec![s], Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let v = self.value(a);
        let s = v.iter().sum::<f64>() / v.len() as f64;
        self.push(vec![1], vec![s], Op::Mean(a))
    }

    /// Columns `start..start + len` of a matrix.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var, TensorError> {
        let (n, c) = self.dims2(a, "slice_cols")?;
        if len == 0 || start + len > c {
            return Err(TensorError::Contract(format!(
                "slice_cols {start}..{} out of range for {c} columns",
                start + len
            )));
        }
        let out = self
            .value(a)
            .chunks(c)
            .flat_map(|row| row[start..start + len].iter().copied())
            .collect();
        Ok(self.push(vec![n, len], out, Op::SliceCols { x: a, start }))
    }

    /// Single-channel 2D dilated convolution with zero padding of width
    /// `dilation * half_width`, so the output keeps the input's shape:
    /// `out(i, j) = Σ_{r,s ∈ [-m, m]} x(i + d·r, j + d·s) · w(r, s)`.
    pub fn dilated_conv2d(
        &mut self,
        x: Var,
        kernel: Var,
        half_width: usize,
        dilation: usize,
    ) -> Result<Var, TensorError> {
        let (rows, cols) = self.dims2(x, "dilated_conv2d")?;
        let k = 2 * half_width + 1;
        if self.shape(kernel) != [k, k] {
            return Err(TensorError::Shape {
                op: "dilated_conv2d",
                left: vec![k, k],
                right: self.shape(kernel).to_vec(),
            });
        }
        if dilation == 0 {
            return Err(TensorError::Contract("dilation must be at least 1".into()));
        }
        let out = dilated_conv_raw(self.value(x), self.value(kernel), rows, cols, half_width, dilation);
        Ok(self.push(
            vec![rows, cols],
            out,
            Op::DilatedConv {
                x,
                kernel,
                half_width,
                dilation,
            },
        ))
    }

    /// Backpropagates from a one-element `loss`, adding into the gradient
    /// buffers of every reachable leaf that requires gradients. Calling it
    /// again without [`Tape::zero_grad`] accumulates.
    pub fn backward(&mut self, loss: Var) -> Result<(), TensorError> {
        if self.value(loss).len() != 1 {
            return Err(TensorError::Contract(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        adj[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                let node = &mut self.nodes[i];
                match &mut node.grad {
                    Some(buf) => buf.iter_mut().zip(&g).for_each(|(b, x)| *b += x),
                    None => node.grad = Some(g),
                }
                continue;
            }
            self.backprop_node(i, &g, &mut adj);
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let nodes = &self.nodes;
        let mut send = |v: Var, contrib: Vec<f64>| {
            if !nodes[v.0].requires_grad {
                return;
            }
            match &mut adj[v.0] {
                Some(buf) => buf.iter_mut().zip(&contrib).for_each(|(b, c)| *b += c),
                slot @ None => *slot = Some(contrib),
            }
        };
        let val = |v: Var| nodes[v.0].value.as_slice();

        match &node.op {
            Op::Leaf => unreachable!("leaves handled by caller"),
            Op::MatMul(a, b) => {
                let (m, k) = (nodes[a.0].shape[0], nodes[a.0].shape[1]);
                let n = nodes[b.0].shape[1];
                send(*a, matmul_nt(g, val(*b), m, n, k));
                send(*b, matmul_tn(val(*a), g, m, k, n));
            }
            Op::Add(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.to_vec());
            }
            Op::Sub(a, b) => {
                send(*a, g.to_vec());
                send(*b, g.iter().map(|x| -x).collect());
            }
            Op::Mul(a, b) => {
                send(*a, g.iter().zip(val(*b)).map(|(g, y)| g * y).collect());
                send(*b, g.iter().zip(val(*a)).map(|(g, x)| g * x).collect());
            }
            Op::Scale(a, s) => send(*a, g.iter().map(|x| x * s).collect()),
            Op::AddRow(x, b) => {
                let f = nodes[b.0].value.len();
                let mut gb = vec![0.0; f];
                for row in g.chunks(f) {
                    gb.iter_mut().zip(row).for_each(|(a, r)| *a += r);
                }
                send(*x, g.to_vec());
                send(*b, gb);
            }
            Op::Relu(a) => send(
                *a,
                g.iter()
                    .zip(val(*a))
                    .map(|(g, &x)| if x > 0.0 { *g } else { 0.0 })
                    .collect(),
            ),
            Op::Abs(a) => send(
                *a,
                g.iter()
                    .zip(val(*a))
                    .map(|(g, &x)| if x > 0.0 { *g } else if x < 0.0 { -g } else { 0.0 })
                    .collect(),
            ),
            Op::Map(a, d) => send(*a, g.iter().zip(d).map(|(g, d)| g * d).collect()),
            Op::SoftmaxRows(a) => {
                let c = node.shape[1];
                let y = &node.value;
                let mut out = Vec::with_capacity(y.len());
                for (yr, gr) in y.chunks(c).zip(g.chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    out.extend(yr.iter().zip(gr).map(|(y, g)| y * (g - dot)));
                }
                send(*a, out);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let f = node.shape[1];
                let gv = val(*gain);
                let mut dx = Vec::with_capacity(g.len());
                let mut dgain = vec![0.0; f];
                let mut dbias = vec![0.0; f];
                for ((gr, xr), &is) in g.chunks(f).zip(xhat.chunks(f)).zip(inv_std) {
                    let dxhat: Vec<f64> = gr.iter().zip(gv).map(|(g, w)| g * w).collect();
                    let s1: f64 = dxhat.iter().sum();
                    let s2: f64 = dxhat.iter().zip(xr).map(|(d, x)| d * x).sum();
                    let ff = f as f64;
                    dx.extend(
                        dxhat
                            .iter()
                            .zip(xr)
                            .map(|(d, xh)| is / ff * (ff * d - s1 - xh * s2)),
                    );
                    for j in 0..f {
                        dgain[j] += gr[j] * xr[j];
                        dbias[j] += gr[j];
                    }
                }
                send(*x, dx);
                send(*gain, dgain);
                send(*bias, dbias);
            }
            Op::ConcatCols(parts) => {
                let n = node.shape[0];
                let total = node.shape[1];
                let mut offset = 0;
                for &p in parts {
                    let w = nodes[p.0].shape[1];
                    let mut gp = Vec::with_capacity(n * w);
                    for r in 0..n {
                        gp.extend_from_slice(&g[r * total + offset..r * total + offset + w]);
                    }
                    offset += w;
                    send(p, gp);
                }
            }
            Op::Stack(parts) => {
                let chunk = g.len() / parts.len();
                for (&p, gp) in parts.iter().zip(g.chunks(chunk)) {
                    send(p, gp.to_vec());
                }
            }
            Op::Reshape(a) => send(*a, g.to_vec()),
            Op::Transpose(a) => {
                let (r, c) = (node.shape[0], node.shape[1]);
                send(*a, transpose_raw(g, r, c));
            }
            Op::Dropout(a, mask) => send(*a, g.iter().zip(mask).map(|(g, m)| g * m).collect()),
            Op::Sum(a) => send(*a, vec![g[0]; nodes[a.0].value.len()]),
            Op::Mean(a) => {
                let n = nodes[a.0].value.len();
                send(*a, vec![g[0] / n as f64; n]);
            }
            Op::SliceCols { x, start } => {
                let c = nodes[x.0].shape[1];
                let w = node.shape[1];
                let mut gx = vec![0.0; nodes[x.0].value.len()];
                for (r, gr) in g.chunks(w).enumerate() {
                    gx[r * c + start..r * c + start + w].copy_from_slice(gr);
                }
                send(*x, gx);
            }
            Op::DilatedConv {
                x,
                kernel,
                half_width,
                dilation,
            } => {
                let (rows, cols) = (node.shape[0], node.shape[1]);
                let (gx, gk) =
                    dilated_conv_backward_raw(g, val(*x), val(*kernel), rows, cols, *half_width, *dilation);
                send(*x, gx);
                send(*kernel, gk);
            }
        }
    }
}

pub(crate) fn softmax_rows_raw(x: &[f64], cols: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(cols) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        let mut total = 0.0;
        for &v in row {
            let e = (v - max).exp();
            total += e;
            out.push(e);
        }
        out[start..].iter_mut().for_each(|e| *e /= total);
    }
    out
}

fn transpose_raw(x: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = x[i * c + j];
        }
    }
    out
}

/// Offsets `(r, s)` of a `(2m+1)²` kernel with their flat kernel index.
fn kernel_taps(m: usize) -> impl Iterator<Item = (isize, isize, usize)> {
    let m = m as isize;
    let k = 2 * m + 1;
    (-m..=m).flat_map(move |r| (-m..=m).map(move |s| (r, s, ((r + m) * k + (s + m)) as usize)))
}

fn dilated_conv_raw(x: &[f64], w: &[f64], rows: usize, cols: usize, m: usize, d: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    let d = d as isize;
    for (r, s, idx) in kernel_taps(m) {
        let wv = w[idx];
        if wv == 0.0 {
            continue;
        }
        let (dr, ds) = (d * r, d * s);
        for i in 0..rows as isize {
            let si = i + dr;
            if si < 0 || si >= rows as isize {
                continue;
            }
            for j in 0..cols as isize {
                let sj = j + ds;
                if sj < 0 || sj >= cols as isize {
                    continue;
                }
                out[(i as usize) * cols + j as usize] += wv * x[(si as usize) * cols + sj as usize];
            }
        }
    }
    out
}

fn dilated_conv_backward_raw(
    g: &[f64],
    x: &[f64],
    w: &[f64],
    rows: usize,
    cols: usize,
    m: usize,
    d: usize,
) -> (Vec<f64>, Vec<f64>) {
    let mut gx = vec![0.0; x.len()];
    let mut gw = vec![0.0; w.len()];
    let d = d as isize;
    for (r, s, idx) in kernel_taps(m) {
        let (dr, ds) = (d * r, d * s);
        for i in 0..rows as isize {
            let si = i + dr;
            if si < 0 || si >= rows as isize {
                continue;
            }
            for j in 0..cols as isize {
                let sj = j + ds;
                if sj < 0 || sj >= cols as isize {
                    continue;
                }
                let go = g[(i as usize) * cols + j as usize];
                let src = (si as usize) * cols + sj as usize;
                gx[src] += go * w[idx];
                gw[idx] += go * x[src];
            }
        }
    }
    (gx, gw)
}
