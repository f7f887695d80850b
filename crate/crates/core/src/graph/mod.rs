//! Reverse-mode automatic differentiation over NCHW tensors.
//!
//! A [`Tape`] records every operation of one forward pass together with the
//! values it produced; [`Tape::backward`] then walks the record in reverse and
//! returns gradients for every parameter that took part.

pub(crate) mod kernels;

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::params::{BufferId, ParamId, ParameterSet};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use kernels::BN_EPS;

/// Handle to a value recorded on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

/// Where batch normalisation takes its statistics from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NormMode {
    /// Statistics of the current batch; running averages are updated later.
    Batch,
    /// Stored running statistics (evaluation, or frozen normalisation).
    Running,
}

/// Parameter and buffer handles of one batch-norm layer.
#[derive(Clone, Copy, Debug)]
pub struct BatchNormRef {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: BufferId,
    pub running_var: BufferId,
}

/// Batch statistics observed by one batch-norm layer during a forward pass.
#[derive(Clone, Debug)]
pub struct NormStats<T> {
    pub layer: BatchNormRef,
    pub mean: Vec<T>,
    /// Biased variance of the batch.
    pub var: Vec<T>,
    pub count: usize,
}

enum Op {
    Input,
    Conv {
        x: Var,
        weight: ParamId,
        bias: Option<ParamId>,
    },
    Norm {
        x: Var,
        layer: BatchNormRef,
        mean: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    Upsample(Var),
    Concat(Vec<Var>),
    Add(Var, Var),
    Mul(Var, Var),
    GlobalAvgPool(Var),
}

struct Node<T> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<'p, T: Scalar> {
    params: &'p ParameterSet<T>,
    norm_mode: NormMode,
    nodes: Vec<Node<T>>,
    stats: Vec<NormStats<T>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParameterSet<T>, norm_mode: NormMode) -> Self {
        Tape {
            params,
            norm_mode,
            nodes: Vec::new(),
            stats: Vec::new(),
        }
    }

    pub fn params(&self) -> &'p ParameterSet<T> {
        self.params
    }

    pub fn norm_mode(&self) -> NormMode {
        self.norm_mode
    }

    fn push(&mut self, value: Tensor<T>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a constant input.
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, false)
    }

    /// Records an input whose gradient is reported by [`Gradients::input`].
    pub fn input_with_grad(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Input, true)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 4] {
        self.nodes[v.0].value.shape()
    }

    /// Batch statistics gathered so far (only in [`NormMode::Batch`]).
    pub fn norm_stats(&self) -> &[NormStats<T>] {
        &self.stats
    }

    pub fn take_norm_stats(&mut self) -> Vec<NormStats<T>> {
        std::mem::take(&mut self.stats)
    }

    /// Same-padded, stride-1 convolution with an odd square kernel.
    pub fn conv2d(&mut self, x: Var, weight: ParamId, bias: Option<ParamId>) -> Result<Var> {
        let w = self.params.get(weight);
        let xs = self.shape(x);
        let ws = w.shape();
        if ws[1] != xs[1] || ws[2] != ws[3] || ws[2].is_multiple_of(2) {
            return Err(Error::Shape(format!(
                "convolution weight {ws:?} does not fit input {xs:?}"
            )));
        }
        let b = bias.map(|b| self.params.get(b));
        let y = kernels::conv2d_forward(self.value(x), w, b);
        Ok(self.push(y, Op::Conv { x, weight, bias }, true))
    }

    pub fn batch_norm(&mut self, x: Var, layer: BatchNormRef) -> Result<Var> {
        let xs = self.shape(x);
        let c = xs[1];
        if self.params.get(layer.gamma).len() != c {
            return Err(Error::Shape(format!(
                "batch norm over {} channels applied to {xs:?}",
                self.params.get(layer.gamma).len()
            )));
        }
        let (mean, var, batch_stats) = match self.norm_mode {
            NormMode::Batch => {
                let (m, v) = kernels::channel_moments(self.value(x));
                self.stats.push(NormStats {
                    layer,
                    mean: m.clone(),
                    var: v.clone(),
                    count: xs[0] * xs[2] * xs[3],
                });
                (m, v, true)
            }
            NormMode::Running => (
                self.params.buffer(layer.running_mean).data().to_vec(),
                self.params.buffer(layer.running_var).data().to_vec(),
                false,
            ),
        };
        let inv_std: Vec<T> = var
            .iter()
            .map(|&v| T::one() / (v + T::from_f64_lossy(BN_EPS)).sqrt())
            .collect();
        let y = kernels::affine_normalize(
            self.value(x),
            &mean,
            &inv_std,
            self.params.get(layer.gamma).data(),
            self.params.get(layer.beta).data(),
        );
        let op = Op::Norm {
            x,
            layer,
            mean: mean.iter().map(|v| v.as_f64()).collect(),
            inv_std: inv_std.iter().map(|v| v.as_f64()).collect(),
            batch_stats,
        };
        Ok(self.push(y, op, true))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let y = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        let rg = self.rg(x);
        self.push(y, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let y = self.value(x).map(kernels::sigmoid);
        let rg = self.rg(x);
        self.push(y, Op::Sigmoid(x), rg)
    }

    /// 2x2 max pooling with stride 2; spatial sizes must be even.
    pub fn max_pool2(&mut self, x: Var) -> Result<Var> {
        let s = self.shape(x);
        if !s[2].is_multiple_of(2) || !s[3].is_multiple_of(2) {
            return Err(Error::Shape(format!("cannot 2x2-pool odd spatial size {s:?}")));
        }
        let (y, argmax) = kernels::max_pool2_forward(self.value(x));
        let rg = self.rg(x);
        Ok(self.push(y, Op::MaxPool { x, argmax }, rg))
    }

    /// 2x bilinear upsampling (half-pixel centres).
    pub fn upsample2(&mut self, x: Var) -> Var {
        let y = kernels::upsample2_forward(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::Upsample(x), rg)
    }

    /// Channel concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = self.shape(parts[0]);
        for &p in parts {
            let s = self.shape(p);
            if s[0] != first[0] || s[2] != first[2] || s[3] != first[3] {
                return Err(Error::Shape(format!("cannot concatenate {s:?} with {first:?}")));
            }
        }
        let values: Vec<&Tensor<T>> = parts.iter().map(|&p| self.value(p)).collect();
        let y = kernels::concat_channels(&values);
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(y, Op::Concat(parts.to_vec()), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "cannot add {:?} and {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b));
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(y, Op::Add(a, b), rg))
    }

    /// Elementwise product with size-1 broadcasting on either operand.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let out = kernels::broadcast_shape(self.shape(a), self.shape(b))
            .ok_or_else(|| Error::Shape(format!("cannot broadcast {:?} with {:?}", self.shape(a), self.shape(b))))?;
        let y = kernels::mul_broadcast_forward(self.value(a), self.value(b), out);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(y, Op::Mul(a, b), rg))
    }

    /// Mean over the spatial axes, giving `(N, C, 1, 1)`.
    pub fn global_avg_pool(&mut self, x: Var) -> Var {
        let y = kernels::global_avg_pool(self.value(x));
        let rg = self.rg(x);
        self.push(y, Op::GlobalAvgPool(x), rg)
    }

    /// Back-propagates `seed` (the gradient of some scalar with respect to
    /// `output`) through the recorded graph.
    pub fn backward(self, output: Var, seed: Tensor<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.shape(output) {
            return Err(Error::Shape(format!(
                "seed gradient {:?} does not match output {:?}",
                seed.shape(),
                self.shape(output)
            )));
        }
        let Tape { params, mut nodes, .. } = self;
        let mut grads: Vec<Option<Tensor<T>>> = (0..nodes.len()).map(|_| None).collect();
        let mut pgrads: Vec<Option<Tensor<T>>> = (0..params.len()).map(|_| None).collect();
        let mut inputs = HashMap::new();
        grads[output.0] = Some(seed);

        fn acc<T: Scalar>(slot: &mut Option<Tensor<T>>, g: Tensor<T>) {
            match slot {
                Some(s) => s.add_assign(&g),
                None => *slot = Some(g),
            }
        }

        for i in (0..nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !nodes[i].requires_grad {
                continue;
            }
            let node = &nodes[i];
            match &node.op {
                Op::Input => {
                    inputs.insert(Var(i), g);
                }
                Op::Conv { x, weight, bias } => {
                    let xn = &nodes[x.0];
                    let r =
                        kernels::conv2d_backward(&xn.value, params.get(*weight), &g, xn.requires_grad, bias.is_some());
                    acc(&mut pgrads[weight.0], r.dw);
                    if let (Some(b), Some(db)) = (bias, r.db) {
                        acc(&mut pgrads[b.0], db);
                    }
                    if let Some(dx) = r.dx {
                        acc(&mut grads[x.0], dx);
                    }
                }
                Op::Norm {
                    x,
                    layer,
                    mean,
                    inv_std,
                    batch_stats,
                } => {
                    let mean: Vec<T> = mean.iter().map(|&v| T::from_f64_lossy(v)).collect();
                    let inv_std: Vec<T> = inv_std.iter().map(|&v| T::from_f64_lossy(v)).collect();
                    let r = kernels::batch_norm_backward(
                        &nodes[x.0].value,
                        &mean,
                        &inv_std,
                        params.get(layer.gamma).data(),
                        &g,
                        *batch_stats,
                    );
                    acc(&mut pgrads[layer.gamma.0], r.dgamma);
                    acc(&mut pgrads[layer.beta.0], r.dbeta);
                    if nodes[x.0].requires_grad {
                        acc(&mut grads[x.0], r.dx);
                    }
                }
                Op::Relu(x) => {
                    let mut d = g;
                    for (dv, &y) in d.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= T::zero() {
                            *dv = T::zero();
                        }
                    }
                    acc(&mut grads[x.0], d);
                }
                Op::Sigmoid(x) => {
                    let mut d = g;
                    for (dv, &y) in d.data_mut().iter_mut().zip(node.value.data()) {
                        *dv *= y * (T::one() - y);
                    }
                    acc(&mut grads[x.0], d);
                }
                Op::MaxPool { x, argmax } => {
                    let dx = kernels::max_pool2_backward(nodes[x.0].value.shape(), argmax, &g);
                    acc(&mut grads[x.0], dx);
                }
                Op::Upsample(x) => {
                    let dx = kernels::upsample2_backward(nodes[x.0].value.shape(), &g);
                    acc(&mut grads[x.0], dx);
                }
                Op::Concat(parts) => {
                    let widths: Vec<usize> = parts.iter().map(|p| nodes[p.0].value.shape()[1]).collect();
                    for (p, d) in parts.iter().zip(kernels::split_channels(&g, &widths)) {
                        if nodes[p.0].requires_grad {
                            acc(&mut grads[p.0], d);
                        }
                    }
                }
                Op::Add(a, b) => {
                    if nodes[b.0].requires_grad {
                        acc(&mut grads[b.0], g.clone());
                    }
                    if nodes[a.0].requires_grad {
                        acc(&mut grads[a.0], g);
                    }
                }
                Op::Mul(a, b) => {
                    let (da, db) = kernels::mul_broadcast_backward(
                        &nodes[a.0].value,
                        &nodes[b.0].value,
                        &g,
                        nodes[a.0].requires_grad,
                        nodes[b.0].requires_grad,
                    );
                    if let Some(da) = da {
                        acc(&mut grads[a.0], da);
                    }
                    if let Some(db) = db {
                        acc(&mut grads[b.0], db);
                    }
                }
                Op::GlobalAvgPool(x) => {
                    let dx = kernels::global_avg_pool_backward(nodes[x.0].value.shape(), &g);
                    acc(&mut grads[x.0], dx);
                }
            }
            nodes[i].value = Tensor::zeros([0, 0, 0, 0]);
        }
        Ok(Gradients { params: pgrads, inputs })
    }
}

/// Gradients produced by [`Tape::backward`].
#[derive(Clone, Debug)]
pub struct Gradients<T> {
    params: Vec<Option<Tensor<T>>>,
    inputs: HashMap<Var, Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    /// Zero gradients for every parameter of `params`.
    pub fn zeros_like(params: &ParameterSet<T>) -> Self {
        Gradients {
            params: params
                .iter()
                .map(|(_, p)| Some(Tensor::zeros(p.tensor.shape())))
                .collect(),
            inputs: HashMap::new(),
        }
    }

    /// `None` when the parameter did not influence the output.
    pub fn param(&self, id: ParamId) -> Option<&Tensor<T>> {
        self.params.get(id.0).and_then(|g| g.as_ref())
    }

    pub fn input(&self, v: Var) -> Option<&Tensor<T>> {
        self.inputs.get(&v)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Adds parameter gradients of `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients<T>) {
        for (a, b) in self.params.iter_mut().zip(&other.params) {
            match (a.as_mut(), b) {
                (Some(a), Some(b)) => a.add_assign(b),
                (None, Some(b)) => *a = Some(b.clone()),
                _ => {}
            }
        }
    }

    pub fn scale(&mut self, factor: T) {
        for g in self.params.iter_mut().flatten() {
            g.scale(factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().flatten().all(|g| g.all_finite())
    }
}
