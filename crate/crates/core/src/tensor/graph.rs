//! Define-by-run tape. Every op appends a node holding its output value and
//! the ids of its inputs, so node order is a topological order and backward
//! is a single reverse sweep.

use super::conv::{self, ConvGeom, Padding};
use super::ops::{self, sign, zip_map};
use super::{Real, Shape, Tensor};
use crate::error::{invalid, Error, Result};
use crate::{shuffle, wavelet};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Leaf,
    Conv2d,
    ConvTranspose2d,
    Relu,
    Add,
    Sub,
    Mul,
    Div,
    Abs,
    ScalarMul,
    AddScalar,
    Mean,
    Dwt2,
    Idwt2,
    SpaceToDepth,
    DepthToSpace,
    PadReflect,
    DepthwiseFilter,
}

impl OpKind {
    pub const ALL: [OpKind; 18] = [
        OpKind::Leaf,
        OpKind::Conv2d,
        OpKind::ConvTranspose2d,
        OpKind::Relu,
        OpKind::Add,
        OpKind::Sub,
        OpKind::Mul,
        OpKind::Div,
        OpKind::Abs,
        OpKind::ScalarMul,
        OpKind::AddScalar,
        OpKind::Mean,
        OpKind::Dwt2,
        OpKind::Idwt2,
        OpKind::SpaceToDepth,
        OpKind::DepthToSpace,
        OpKind::PadReflect,
        OpKind::DepthwiseFilter,
    ];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Leaf => "leaf",
            OpKind::Conv2d => "conv2d",
            OpKind::ConvTranspose2d => "conv_transpose2d",
            OpKind::Relu => "relu",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::Mul => "mul",
            OpKind::Div => "div",
            OpKind::Abs => "abs",
            OpKind::ScalarMul => "scalar_mul",
            OpKind::AddScalar => "add_scalar",
            OpKind::Mean => "mean",
            OpKind::Dwt2 => "dwt2",
            OpKind::Idwt2 => "idwt2",
            OpKind::SpaceToDepth => "space_to_depth",
            OpKind::DepthToSpace => "depth_to_space",
            OpKind::PadReflect => "pad_reflect",
            OpKind::DepthwiseFilter => "depthwise_filter",
        }
    }
}

impl std::str::FromStr for OpKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        OpKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| invalid("op kind", format!("unknown op `{s}`")))
    }
}

enum Op<T> {
    Leaf,
    Conv2d { x: Var, w: Var, b: Var, geom: ConvGeom },
    ConvTranspose2d { x: Var, w: Var, b: Var, stride: usize },
    Relu(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Abs(Var),
    ScalarMul(Var, T),
    AddScalar(Var),
    Mean(Var),
    Dwt2(Var),
    Idwt2(Var),
    SpaceToDepth(Var, usize),
    DepthToSpace(Var, usize),
    PadReflect(Var, usize),
    DepthwiseFilter { x: Var, kernel: Vec<T>, k: usize },
}

impl<T> Op<T> {
    fn kind(&self) -> OpKind {
        match self {
            Op::Leaf => OpKind::Leaf,
            Op::Conv2d { .. } => OpKind::Conv2d,
            Op::ConvTranspose2d { .. } => OpKind::ConvTranspose2d,
            Op::Relu(_) => OpKind::Relu,
            Op::Add(..) => OpKind::Add,
            Op::Sub(..) => OpKind::Sub,
            Op::Mul(..) => OpKind::Mul,
            Op::Div(..) => OpKind::Div,
            Op::Abs(_) => OpKind::Abs,
            Op::ScalarMul(..) => OpKind::ScalarMul,
            Op::AddScalar(_) => OpKind::AddScalar,
            Op::Mean(_) => OpKind::Mean,
            Op::Dwt2(_) => OpKind::Dwt2,
            Op::Idwt2(_) => OpKind::Idwt2,
            Op::SpaceToDepth(..) => OpKind::SpaceToDepth,
            Op::DepthToSpace(..) => OpKind::DepthToSpace,
            Op::PadReflect(..) => OpKind::PadReflect,
            Op::DepthwiseFilter { .. } => OpKind::DepthwiseFilter,
        }
    }

    fn inputs(&self) -> Vec<Var> {
        match *self {
            Op::Leaf => vec![],
            Op::Conv2d { x, w, b, .. } | Op::ConvTranspose2d { x, w, b, .. } => vec![x, w, b],
            Op::Add(a, b) | Op::Sub(a, b) | Op::Mul(a, b) | Op::Div(a, b) => vec![a, b],
            Op::Relu(a)
            | Op::Abs(a)
            | Op::ScalarMul(a, _)
            | Op::AddScalar(a)
            | Op::Mean(a)
            | Op::Dwt2(a)
            | Op::Idwt2(a)
            | Op::SpaceToDepth(a, _)
            | Op::DepthToSpace(a, _)
            | Op::PadReflect(a, _) => vec![a],
            Op::DepthwiseFilter { x, .. } => vec![x],
        }
    }
}

struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

/// A computation graph confined to one forward/backward pass.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
    fault: Option<OpKind>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            fault: None,
        }
    }

    /// Test hook: scales the gradient flowing through every node of `kind`
    /// by 1.5 during backward, breaking it on purpose.
    #[doc(hidden)]
    pub fn inject_backward_fault(&mut self, kind: OpKind) {
        self.fault = Some(kind);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds a leaf, keeping the tensor's own `requires_grad` flag.
    pub fn leaf(&mut self, mut t: Tensor<T>) -> Var {
        t.grad = None;
        self.push(Op::Leaf, t)
    }

    pub fn param(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(true))
    }

    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.leaf(t.with_requires_grad(false))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> Shape {
        self.nodes[v.0].value.shape()
    }

    pub fn kind(&self, v: Var) -> OpKind {
        self.nodes[v.0].op.kind()
    }

    /// Gradient of the last `backward` call w.r.t. `v`, if `v` requires one.
    pub fn grad(&self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].value.grad_tensor()
    }

    pub fn into_value(mut self, v: Var) -> Tensor<T> {
        self.nodes.swap_remove(v.0).value
    }

    fn push(&mut self, op: Op<T>, mut value: Tensor<T>) -> Var {
        if !matches!(op, Op::Leaf) {
            value.requires_grad = op
                .inputs()
                .iter()
                .any(|i| self.nodes[i.0].value.requires_grad);
        }
        self.nodes.push(Node { op, value });
        Var(self.nodes.len() - 1)
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let geom = ConvGeom::conv2d(self.shape(x), self.shape(w), stride, padding)?;
        conv::check_bias("conv2d", self.shape(b), geom.output.channels)?;
        let out = conv::conv2d_forward(
            &geom,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        Ok(self.push(Op::Conv2d { x, w, b, geom }, Tensor::raw(geom.output, out)))
    }

    /// Unpadded transposed convolution; output extent `(in - 1) * stride + k`.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (is, ws) = (self.shape(x), self.shape(w));
        let os = conv::conv_transpose_output(is, ws, stride)?;
        conv::check_bias("conv_transpose2d", self.shape(b), os.channels)?;
        let out = conv::conv_transpose2d_forward(
            is,
            ws,
            os,
            stride,
            self.value(x).data(),
            self.value(w).data(),
            self.value(b).data(),
        );
        Ok(self.push(Op::ConvTranspose2d { x, w, b, stride }, Tensor::raw(os, out)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(T::zero()));
        self.push(Op::Relu(x), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_map("add", self.value(a), self.value(b), |x, y| x + y)?;
        Ok(self.push(Op::Add(a, b), out))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_map("sub", self.value(a), self.value(b), |x, y| x - y)?;
        Ok(self.push(Op::Sub(a, b), out))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_map("mul", self.value(a), self.value(b), |x, y| x * y)?;
        Ok(self.push(Op::Mul(a, b), out))
    }

    /// Elementwise quotient. The divisor must stay away from zero.
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = zip_map("div", self.value(a), self.value(b), |x, y| x / y)?;
        Ok(self.push(Op::Div(a, b), out))
    }

    pub fn abs(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.abs());
        self.push(Op::Abs(x), out)
    }

    pub fn scalar_mul(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v * s);
        self.push(Op::ScalarMul(x, s), out)
    }

    pub fn add_scalar(&mut self, x: Var, s: T) -> Var {
        let out = self.value(x).map(|v| v + s);
        self.push(Op::AddScalar(x), out)
    }

    /// Mean over every element; yields a 1x1x1x1 tensor.
    pub fn mean(&mut self, x: Var) -> Var {
        let m = ops::mean(self.value(x));
        self.push(Op::Mean(x), Tensor::scalar(m))
    }

    pub fn dwt2(&mut self, x: Var) -> Result<Var> {
        let out = wavelet::dwt2_haar(self.value(x))?;
        Ok(self.push(Op::Dwt2(x), out))
    }

    pub fn idwt2(&mut self, x: Var) -> Result<Var> {
        let out = wavelet::idwt2_haar(self.value(x))?;
        Ok(self.push(Op::Idwt2(x), out))
    }

    pub fn space_to_depth(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = shuffle::space_to_depth(self.value(x), r)?;
        Ok(self.push(Op::SpaceToDepth(x, r), out))
    }

    pub fn depth_to_space(&mut self, x: Var, r: usize) -> Result<Var> {
        let out = shuffle::depth_to_space(self.value(x), r)?;
        Ok(self.push(Op::DepthToSpace(x, r), out))
    }

    /// Pads height and width by `pad` on each side with half-sample
    /// symmetric reflection.
    pub fn pad_reflect(&mut self, x: Var, pad: usize) -> Result<Var> {
        let out = conv::pad_reflect_forward(self.value(x), pad)?;
        Ok(self.push(Op::PadReflect(x, pad), out))
    }

    /// Valid-mode per-channel filtering with a fixed (non-trainable) `k x k`
    /// kernel given row-major.
    pub fn depthwise_filter(&mut self, x: Var, kernel: &[T], k: usize) -> Result<Var> {
        if kernel.len() != k * k {
            return Err(invalid(
                "depthwise_filter",
                format!("kernel has {} taps, expected {}", kernel.len(), k * k),
            ));
        }
        let out = conv::depthwise_forward(self.value(x), kernel, k)?;
        let op = Op::DepthwiseFilter {
            x,
            kernel: kernel.to_vec(),
            k,
        };
        Ok(self.push(op, out))
    }

    /// Reverse sweep from a scalar `loss`. Populates `grad` on every node
    /// that requires one; contributions over fan-out paths are summed.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if !shape.is_scalar() {
            return Err(Error::NotScalar(shape));
        }
        for node in &mut self.nodes {
            node.value.grad = None;
        }
        if !self.nodes[loss.0].value.requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![T::one()]);
        for i in (0..=loss.0).rev() {
            let Some(mut g) = grads[i].take() else {
                continue;
            };
            if self.fault == Some(self.nodes[i].op.kind()) {
                let k = T::of(1.5);
                g.iter_mut().for_each(|v| *v *= k);
            }
            self.propagate(i, &g, &mut grads);
            self.nodes[i].value.grad = Some(g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let val = |v: Var| &nodes[v.0].value;
        // Accumulates `f(index)` into the gradient buffer of `v`.
        let acc = |grads: &mut [Option<Vec<T>>], v: Var, f: &dyn Fn(usize) -> T| {
            if let Some(mut s) = take_slot(grads, nodes, v) {
                for (k, a) in s.iter_mut().enumerate() {
                    *a += f(k);
                }
                grads[v.0] = Some(s);
            }
        };
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, ref geom } => {
                let (mut gx, mut gw, mut gb) = (
                    take_slot(grads, nodes, x),
                    take_slot(grads, nodes, w),
                    take_slot(grads, nodes, b),
                );
                conv::conv2d_backward(
                    geom,
                    val(x).data(),
                    val(w).data(),
                    g,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                restore(grads, x, gx);
                restore(grads, w, gw);
                restore(grads, b, gb);
            }
            Op::ConvTranspose2d { x, w, b, stride } => {
                let (mut gx, mut gw, mut gb) = (
                    take_slot(grads, nodes, x),
                    take_slot(grads, nodes, w),
                    take_slot(grads, nodes, b),
                );
                conv::conv_transpose2d_backward(
                    val(x).shape(),
                    val(w).shape(),
                    nodes[i].value.shape(),
                    stride,
                    val(x).data(),
                    val(w).data(),
                    g,
                    gx.as_deref_mut(),
                    gw.as_deref_mut(),
                    gb.as_deref_mut(),
                );
                restore(grads, x, gx);
                restore(grads, w, gw);
                restore(grads, b, gb);
            }
            Op::Relu(x) => {
                let xv = val(x).data();
                acc(grads, x, &|k| if xv[k] > T::zero() { g[k] } else { T::zero() });
            }
            Op::Add(a, b) => {
                acc(grads, a, &|k| g[k]);
                acc(grads, b, &|k| g[k]);
            }
            Op::Sub(a, b) => {
                acc(grads, a, &|k| g[k]);
                acc(grads, b, &|k| -g[k]);
            }
            Op::Mul(a, b) => {
                let (av, bv) = (val(a).data(), val(b).data());
                acc(grads, a, &|k| g[k] * bv[k]);
                acc(grads, b, &|k| g[k] * av[k]);
            }
            Op::Div(a, b) => {
                let (av, bv) = (val(a).data(), val(b).data());
                acc(grads, a, &|k| g[k] / bv[k]);
                acc(grads, b, &|k| -g[k] * av[k] / (bv[k] * bv[k]));
            }
            Op::Abs(x) => {
                let xv = val(x).data();
                acc(grads, x, &|k| g[k] * sign(xv[k]));
            }
            Op::ScalarMul(x, s) => acc(grads, x, &|k| g[k] * s),
            Op::AddScalar(x) => acc(grads, x, &|k| g[k]),
            Op::Mean(x) => {
                let d = g[0] / T::of(val(x).len() as f64);
                acc(grads, x, &|_| d);
            }
            Op::Dwt2(x) => {
                // orthonormal: the adjoint is the inverse
                let out = &nodes[i].value;
                let gt = Tensor::raw(out.shape(), g.to_vec());
                let back = wavelet::idwt2_haar(&gt).expect("shape fixed at forward");
                acc(grads, x, &|k| back.data()[k]);
            }
            Op::Idwt2(x) => {
                let out = &nodes[i].value;
                let gt = Tensor::raw(out.shape(), g.to_vec());
                let back = wavelet::dwt2_haar(&gt).expect("shape fixed at forward");
                acc(grads, x, &|k| back.data()[k]);
            }
            Op::SpaceToDepth(x, r) => {
                let gt = Tensor::raw(nodes[i].value.shape(), g.to_vec());
                let back = shuffle::depth_to_space(&gt, r).expect("shape fixed at forward");
                acc(grads, x, &|k| back.data()[k]);
            }
            Op::DepthToSpace(x, r) => {
                let gt = Tensor::raw(nodes[i].value.shape(), g.to_vec());
                let back = shuffle::space_to_depth(&gt, r).expect("shape fixed at forward");
                acc(grads, x, &|k| back.data()[k]);
            }
            Op::PadReflect(x, pad) => {
                if let Some(mut gx) = take_slot(grads, nodes, x) {
                    conv::pad_reflect_backward(val(x).shape(), nodes[i].value.shape(), pad, g, &mut gx);
                    restore(grads, x, Some(gx));
                }
            }
            Op::DepthwiseFilter { x, ref kernel, k } => {
                if let Some(mut gx) = take_slot(grads, nodes, x) {
                    conv::depthwise_backward(val(x).shape(), nodes[i].value.shape(), kernel, k, g, &mut gx);
                    restore(grads, x, Some(gx));
                }
            }
        }
    }
}

/// Moves the (zero-initialized) gradient buffer of `v` out of `grads`.
fn take_slot<T: Real>(grads: &mut [Option<Vec<T>>], nodes: &[Node<T>], v: Var) -> Option<Vec<T>> {
    if !nodes[v.0].value.requires_grad {
        return None;
    }
    Some(
        grads[v.0]
            .take()
            .unwrap_or_else(|| vec![T::zero(); nodes[v.0].value.len()]),
    )
}

fn restore<T>(grads: &mut [Option<Vec<T>>], v: Var, buf: Option<Vec<T>>) {
    if buf.is_some() {
        grads[v.0] = buf;
    }
}
