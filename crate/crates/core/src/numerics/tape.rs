//! Reverse-mode differentiation over a linear tape.
//!
//! Every operation appends one node holding its forward value. Nodes are
//! appended after their inputs, so walking the tape backwards is a valid
//! reverse topological order and each node is visited once.

use crate::error::{Error, Result};
use crate::numerics::tensor::{self, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatVec(Var, Var),
    MatMul(Var, Var),
    Concat(Vec<Var>),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Affine(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    LogSigmoid(Var),
    Softmax(Var),
    Mean(Vec<Var>),
    AddN(Vec<Var>),
    WeightedSum(Var, Vec<Var>),
    Stack(Vec<Var>),
    MeanRows(Var),
    Attention {
        q: Var,
        k: Var,
        v: Var,
        heads: usize,
        probs: Vec<f64>,
    },
    Dot(Var, Var),
    Cosine(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A recording of differentiable operations. One tape per training thread.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar output with respect to every recorded node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads[v.0].as_deref()
    }

    /// Gradient as a tensor shaped like the node, zero when no path exists.
    pub fn wrt(&self, v: Var) -> Tensor {
        match &self.grads[v.0] {
            Some(g) => Tensor::new(self.shapes[v.0].clone(), g.clone())
                .unwrap_or_else(|_| Tensor::zeros(&self.shapes[v.0])),
            None => Tensor::zeros(&self.shapes[v.0]),
        }
    }
}

fn shape_err(op: &str, shapes: &[&[usize]]) -> Error {
    Error::Shape(format!("{op}: incompatible operand shapes {shapes:?}"))
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize, f: impl FnOnce(&mut [f64])) {
    let buf = slot.get_or_insert_with(|| vec![0.0; len]);
    f(buf);
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

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn data(&self, v: Var) -> &[f64] {
        self.nodes[v.0].value.data()
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, requires_grad: bool) -> Result<Var> {
        let value = Tensor::new(shape, data).map_err(|e| match e {
            Error::NonFinite(msg) => Error::NonFinite(format!("{op:?}: {msg}")),
            other => other,
        })?;
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Trainable leaf.
    pub fn param(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            value: t.clone(),
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.nodes.push(Node {
            value: t.clone(),
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, t: &Tensor, trainable: bool) -> Var {
        if trainable {
            self.param(t)
        } else {
            self.constant(t)
        }
    }

    pub fn constant_vec(&mut self, v: &[f64]) -> Var {
        self.constant(&Tensor::vector(v.to_vec()))
    }

    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        let ws = self.shape(w).to_vec();
        let xs = self.shape(x).to_vec();
        if ws.len() != 2 || xs.len() != 1 || ws[1] != xs[0] {
            return Err(shape_err("matvec", &[&ws, &xs]));
        }
        let (r, c) = (ws[0], ws[1]);
        let wd = self.data(w);
        let xd = self.data(x);
        let out: Vec<f64> = (0..r).map(|i| tensor::dot(&wd[i * c..(i + 1) * c], xd)).collect();
        let rg = self.rg(w) || self.rg(x);
        self.push(vec![r], out, Op::MatVec(w, x), rg)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let as_ = self.shape(a).to_vec();
        let bs = self.shape(b).to_vec();
        if as_.len() != 2 || bs.len() != 2 || as_[1] != bs[0] {
            return Err(shape_err("matmul", &[&as_, &bs]));
        }
        let (m, k, n) = (as_[0], as_[1], bs[1]);
        let ad = self.data(a);
        let bd = self.data(b);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for p in 0..k {
                let av = ad[i * k + p];
                if av == 0.0 {
                    continue;
                }
                let row = &bd[p * n..(p + 1) * n];
                for (o, bv) in out[i * n..(i + 1) * n].iter_mut().zip(row) {
                    *o += av * bv;
                }
            }
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(vec![m, n], out, Op::MatMul(a, b), rg)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Shape("concat: no operands".into()));
        }
        let mut out = Vec::new();
        let mut rg = false;
        for &p in parts {
            if self.shape(p).len() != 1 {
                let shapes: Vec<&[usize]> = parts.iter().map(|&q| self.shape(q)).collect();
                return Err(shape_err("concat", &shapes));
            }
            out.extend_from_slice(self.data(p));
            rg |= self.rg(p);
        }
        let n = out.len();
        self.push(vec![n], out, Op::Concat(parts.to_vec()), rg)
    }

    fn binary(&mut self, name: &str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err(name, &[self.shape(a), self.shape(b)]));
        }
        let out = self.data(a).iter().zip(self.data(b)).map(|(x, y)| f(*x, *y)).collect();
        let shape = self.shape(a).to_vec();
        let rg = self.rg(a) || self.rg(b);
        self.push(shape, out, op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    /// `scale * x + shift`, elementwise.
    pub fn affine(&mut self, x: Var, scale: f64, shift: f64) -> Result<Var> {
        let out = self.data(x).iter().map(|v| scale * v + shift).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, Op::Affine(x, scale), rg)
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.data(x).iter().map(|v| f(*v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, op, rg)
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Result<Var> {
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, tensor::sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn log_sigmoid(&mut self, x: Var) -> Result<Var> {
        self.unary(x, tensor::log_sigmoid, Op::LogSigmoid(x))
    }

    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        if self.shape(x).len() != 1 || self.shape(x)[0] == 0 {
            return Err(shape_err("softmax", &[self.shape(x)]));
        }
        let out = softmax_slice(self.data(x));
        let n = out.len();
        let rg = self.rg(x);
        self.push(vec![n], out, Op::Softmax(x), rg)
    }

    fn check_same(&self, name: &str, xs: &[Var]) -> Result<Vec<usize>> {
        if xs.is_empty() {
            return Err(Error::EmptyNeighborhood(format!("{name}: no operands")));
        }
        let s0 = self.shape(xs[0]).to_vec();
        if xs.iter().any(|&x| self.shape(x) != s0.as_slice()) {
            let shapes: Vec<&[usize]> = xs.iter().map(|&q| self.shape(q)).collect();
            return Err(shape_err(name, &shapes));
        }
        Ok(s0)
    }

    pub fn mean(&mut self, xs: &[Var]) -> Result<Var> {
        let shape = self.check_same("mean", xs)?;
        let mut out = vec![0.0; shape.iter().product()];
        for &x in xs {
            for (o, v) in out.iter_mut().zip(self.data(x)) {
                *o += v;
            }
        }
        let n = xs.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(shape, out, Op::Mean(xs.to_vec()), rg)
    }

    pub fn add_n(&mut self, xs: &[Var]) -> Result<Var> {
        let shape = self.check_same("add_n", xs)?;
        let mut out = vec![0.0; shape.iter().product()];
        for &x in xs {
            for (o, v) in out.iter_mut().zip(self.data(x)) {
                *o += v;
            }
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(shape, out, Op::AddN(xs.to_vec()), rg)
    }

    /// `Σ_j weights[j] · xs[j]`.
    pub fn weighted_sum(&mut self, weights: Var, xs: &[Var]) -> Result<Var> {
        let shape = self.check_same("weighted_sum", xs)?;
        if self.shape(weights) != [xs.len()] {
            return Err(shape_err("weighted_sum", &[self.shape(weights), &shape]));
        }
        let mut out = vec![0.0; shape.iter().product()];
        let w = self.data(weights).to_vec();
        for (&x, wj) in xs.iter().zip(&w) {
            for (o, v) in out.iter_mut().zip(self.data(x)) {
                *o += wj * v;
            }
        }
        let rg = self.rg(weights) || xs.iter().any(|&x| self.rg(x));
        self.push(shape, out, Op::WeightedSum(weights, xs.to_vec()), rg)
    }

    /// Stack equal-length vectors into an `[n, d]` matrix.
    pub fn stack(&mut self, xs: &[Var]) -> Result<Var> {
        let shape = self.check_same("stack", xs)?;
        if shape.len() != 1 {
            return Err(shape_err("stack", &[&shape]));
        }
        let mut out = Vec::with_capacity(xs.len() * shape[0]);
        for &x in xs {
            out.extend_from_slice(self.data(x));
        }
        let rg = xs.iter().any(|&x| self.rg(x));
        self.push(vec![xs.len(), shape[0]], out, Op::Stack(xs.to_vec()), rg)
    }

    pub fn mean_rows(&mut self, m: Var) -> Result<Var> {
        let s = self.shape(m).to_vec();
        if s.len() != 2 || s[0] == 0 {
            return Err(shape_err("mean_rows", &[&s]));
        }
        let (n, d) = (s[0], s[1]);
        let md = self.data(m);
        let mut out = vec![0.0; d];
        for r in 0..n {
            for (o, v) in out.iter_mut().zip(&md[r * d..(r + 1) * d]) {
                *o += v;
            }
        }
        out.iter_mut().for_each(|o| *o /= n as f64);
        let rg = self.rg(m);
        self.push(vec![d], out, Op::MeanRows(m), rg)
    }

    /// Multi-head scaled dot-product attention over `[n, d]` query, key and
    /// value matrices. Heads split the feature dimension evenly.
    pub fn scaled_dot_attention(&mut self, q: Var, k: Var, v: Var, heads: usize) -> Result<Var> {
        let qs = self.shape(q).to_vec();
        if qs.len() != 2 || self.shape(k) != qs.as_slice() || self.shape(v) != qs.as_slice() {
            return Err(shape_err("attention", &[&qs, self.shape(k), self.shape(v)]));
        }
        let (n, d) = (qs[0], qs[1]);
        if heads == 0 || d % heads != 0 {
            return Err(Error::Shape(format!(
                "attention: {heads} heads do not divide width {d}"
            )));
        }
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let (qd, kd, vd) = (self.data(q), self.data(k), self.data(v));
        let mut probs = vec![0.0; heads * n * n];
        let mut out = vec![0.0; n * d];
        for h in 0..heads {
            let off = h * dh;
            for i in 0..n {
                let scores: Vec<f64> = (0..n)
                    .map(|j| {
                        scale
                            * tensor::dot(
                                &qd[i * d + off..i * d + off + dh],
                                &kd[j * d + off..j * d + off + dh],
                            )
                    })
                    .collect();
                let p = softmax_slice(&scores);
                for j in 0..n {
                    probs[(h * n + i) * n + j] = p[j];
                    for c in 0..dh {
                        out[i * d + off + c] += p[j] * vd[j * d + off + c];
                    }
                }
            }
        }
        let rg = self.rg(q) || self.rg(k) || self.rg(v);
        self.push(
            vec![n, d],
            out,
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            },
            rg,
        )
    }

    /// Attention weights recorded by an attention node, `[heads][query][key]`.
    pub fn attention_weights(&self, att: Var) -> Option<Vec<Vec<Vec<f64>>>> {
        match &self.nodes[att.0].op {
            Op::Attention { heads, probs, .. } => {
                let n = self.shape(att)[0];
                Some(
                    (0..*heads)
                        .map(|h| {
                            (0..n)
                                .map(|i| probs[(h * n + i) * n..(h * n + i + 1) * n].to_vec())
                                .collect()
                        })
                        .collect(),
                )
            }
            _ => None,
        }
    }

    pub fn dot(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("dot", &[self.shape(a), self.shape(b)]));
        }
        let out = tensor::dot(self.data(a), self.data(b));
        let rg = self.rg(a) || self.rg(b);
        self.push(vec![1], vec![out], Op::Dot(a, b), rg)
    }

    /// Cosine similarity; zero-norm operands are rejected.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(shape_err("cosine", &[self.shape(a), self.shape(b)]));
        }
        let c = tensor::cosine(self.data(a), self.data(b))
            .ok_or_else(|| Error::ZeroNorm("cosine operand has zero norm".into()))?;
        let rg = self.rg(a) || self.rg(b);
        self.push(vec![1], vec![c], Op::Cosine(a, b), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.data(x).iter().sum();
        let rg = self.rg(x);
        self.push(vec![1], vec![s], Op::Sum(x), rg)
    }

    /// Back-propagate from a scalar node.
    pub fn backward(&self, out: Var) -> Result<Gradients> {
        if self.value(out).len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar output, got shape {:?}",
                self.shape(out)
            )));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[out.0] = Some(vec![1.0]);
        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        for (g, node) in grads.iter().zip(&self.nodes) {
            if let Some(g) = g {
                if g.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite(format!("gradient of {:?}", node.op)));
                }
            }
        }
        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = node.value.data();
        let len = |v: Var| self.nodes[v.0].value.len();
        match &node.op {
            Op::Leaf => {}
            Op::MatVec(w, x) => {
                let (r, c) = (self.shape(*w)[0], self.shape(*w)[1]);
                let wd = self.data(*w);
                let xd = self.data(*x);
                if self.rg(*w) {
                    accumulate(&mut grads[w.0], r * c, |gw| {
                        for i in 0..r {
                            if g[i] == 0.0 {
                                continue;
                            }
                            for (gij, xj) in gw[i * c..(i + 1) * c].iter_mut().zip(xd) {
                                *gij += g[i] * xj;
                            }
                        }
                    });
                }
                if self.rg(*x) {
                    accumulate(&mut grads[x.0], c, |gx| {
                        for i in 0..r {
                            if g[i] == 0.0 {
                                continue;
                            }
                            for (gxj, wij) in gx.iter_mut().zip(&wd[i * c..(i + 1) * c]) {
                                *gxj += g[i] * wij;
                            }
                        }
                    });
                }
            }
            Op::MatMul(a, b) => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let nn = self.shape(*b)[1];
                let ad = self.data(*a);
                let bd = self.data(*b);
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], m * k, |ga| {
                        for i in 0..m {
                            for p in 0..k {
                                ga[i * k + p] += tensor::dot(&g[i * nn..(i + 1) * nn], &bd[p * nn..(p + 1) * nn]);
                            }
                        }
                    });
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], k * nn, |gb| {
                        for i in 0..m {
                            for p in 0..k {
                                let av = ad[i * k + p];
                                for (o, gv) in gb[p * nn..(p + 1) * nn].iter_mut().zip(&g[i * nn..(i + 1) * nn]) {
                                    *o += av * gv;
                                }
                            }
                        }
                    });
                }
            }
            Op::Concat(parts) => {
                let mut off = 0;
                for &p in parts {
                    let l = len(p);
                    if self.rg(p) {
                        accumulate(&mut grads[p.0], l, |gp| {
                            for (o, gv) in gp.iter_mut().zip(&g[off..off + l]) {
                                *o += gv;
                            }
                        });
                    }
                    off += l;
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.len(), |ga| add_into(ga, g, 1.0));
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g.len(), |gb| add_into(gb, g, sign));
                }
            }
            Op::Mul(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], g.len(), |ga| {
                        for i in 0..g.len() {
                            ga[i] += g[i] * bd[i];
                        }
                    });
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], g.len(), |gb| {
                        for i in 0..g.len() {
                            gb[i] += g[i] * ad[i];
                        }
                    });
                }
            }
            Op::Affine(x, scale) => {
                accumulate(&mut grads[x.0], g.len(), |gx| add_into(gx, g, *scale));
            }
            Op::Relu(x) => {
                let xd = self.data(*x);
                accumulate(&mut grads[x.0], g.len(), |gx| {
                    for i in 0..g.len() {
                        if xd[i] > 0.0 {
                            gx[i] += g[i];
                        }
                    }
                });
            }
            Op::LeakyRelu(x, slope) => {
                let xd = self.data(*x);
                accumulate(&mut grads[x.0], g.len(), |gx| {
                    for i in 0..g.len() {
                        gx[i] += if xd[i] > 0.0 { g[i] } else { slope * g[i] };
                    }
                });
            }
            Op::Sigmoid(x) => {
                accumulate(&mut grads[x.0], g.len(), |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * y[i] * (1.0 - y[i]);
                    }
                });
            }
            Op::Tanh(x) => {
                accumulate(&mut grads[x.0], g.len(), |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * (1.0 - y[i] * y[i]);
                    }
                });
            }
            Op::LogSigmoid(x) => {
                let xd = self.data(*x);
                accumulate(&mut grads[x.0], g.len(), |gx| {
                    for i in 0..g.len() {
                        gx[i] += g[i] * tensor::sigmoid(-xd[i]);
                    }
                });
            }
            Op::Softmax(x) => {
                let inner = tensor::dot(g, y);
                accumulate(&mut grads[x.0], g.len(), |gx| {
                    for i in 0..g.len() {
                        gx[i] += y[i] * (g[i] - inner);
                    }
                });
            }
            Op::Mean(xs) => {
                let inv = 1.0 / xs.len() as f64;
                for &x in xs {
                    if self.rg(x) {
                        accumulate(&mut grads[x.0], g.len(), |gx| add_into(gx, g, inv));
                    }
                }
            }
            Op::AddN(xs) => {
                for &x in xs {
                    if self.rg(x) {
                        accumulate(&mut grads[x.0], g.len(), |gx| add_into(gx, g, 1.0));
                    }
                }
            }
            Op::WeightedSum(w, xs) => {
                let wd = self.data(*w);
                if self.rg(*w) {
                    let gw: Vec<f64> = xs.iter().map(|&x| tensor::dot(g, self.data(x))).collect();
                    accumulate(&mut grads[w.0], xs.len(), |o| add_into(o, &gw, 1.0));
                }
                for (j, &x) in xs.iter().enumerate() {
                    if self.rg(x) {
                        accumulate(&mut grads[x.0], g.len(), |gx| add_into(gx, g, wd[j]));
                    }
                }
            }
            Op::Stack(xs) => {
                let d = len(xs[0]);
                for (r, &x) in xs.iter().enumerate() {
                    if self.rg(x) {
                        accumulate(&mut grads[x.0], d, |gx| add_into(gx, &g[r * d..(r + 1) * d], 1.0));
                    }
                }
            }
            Op::MeanRows(m) => {
                let (n, d) = (self.shape(*m)[0], self.shape(*m)[1]);
                let inv = 1.0 / n as f64;
                accumulate(&mut grads[m.0], n * d, |gm| {
                    for r in 0..n {
                        add_into(&mut gm[r * d..(r + 1) * d], g, inv);
                    }
                });
            }
            Op::Attention {
                q,
                k,
                v,
                heads,
                probs,
            } => {
                let (n, d) = (self.shape(*q)[0], self.shape(*q)[1]);
                let dh = d / heads;
                let scale = 1.0 / (dh as f64).sqrt();
                let (qd, kd, vd) = (self.data(*q), self.data(*k), self.data(*v));
                let mut gq = vec![0.0; n * d];
                let mut gk = vec![0.0; n * d];
                let mut gv = vec![0.0; n * d];
                for h in 0..*heads {
                    let off = h * dh;
                    for i in 0..n {
                        let p = &probs[(h * n + i) * n..(h * n + i + 1) * n];
                        let go = &g[i * d + off..i * d + off + dh];
                        let dp: Vec<f64> = (0..n)
                            .map(|j| tensor::dot(go, &vd[j * d + off..j * d + off + dh]))
                            .collect();
                        let inner = tensor::dot(p, &dp);
                        for j in 0..n {
                            for c in 0..dh {
                                gv[j * d + off + c] += p[j] * go[c];
                            }
                            let ds = p[j] * (dp[j] - inner) * scale;
                            if ds == 0.0 {
                                continue;
                            }
                            for c in 0..dh {
                                gq[i * d + off + c] += ds * kd[j * d + off + c];
                                gk[j * d + off + c] += ds * qd[i * d + off + c];
                            }
                        }
                    }
                }
                for (var, gvec) in [(*q, gq), (*k, gk), (*v, gv)] {
                    if self.rg(var) {
                        accumulate(&mut grads[var.0], n * d, |o| add_into(o, &gvec, 1.0));
                    }
                }
            }
            Op::Dot(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], ad.len(), |ga| add_into(ga, bd, g[0]));
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], bd.len(), |gb| add_into(gb, ad, g[0]));
                }
            }
            Op::Cosine(a, b) => {
                let (ad, bd) = (self.data(*a), self.data(*b));
                let na = tensor::norm(ad);
                let nb = tensor::norm(bd);
                let c = y[0];
                if self.rg(*a) {
                    accumulate(&mut grads[a.0], ad.len(), |ga| {
                        for i in 0..ad.len() {
                            ga[i] += g[0] * (bd[i] / (na * nb) - c * ad[i] / (na * na));
                        }
                    });
                }
                if self.rg(*b) {
                    accumulate(&mut grads[b.0], bd.len(), |gb| {
                        for i in 0..bd.len() {
                            gb[i] += g[0] * (ad[i] / (na * nb) - c * bd[i] / (nb * nb));
                        }
                    });
                }
            }
            Op::Sum(x) => {
                let l = len(*x);
                accumulate(&mut grads[x.0], l, |gx| gx.iter_mut().for_each(|o| *o += g[0]));
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64], scale: f64) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += scale * s;
    }
}

pub fn softmax_slice(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn forward_closed_forms() {
        let mut t = Tape::new();
        let z = t.constant_vec(&[0.0]);
        let s = t.sigmoid(z).unwrap();
        assert_eq!(t.value(s).item(), 0.5);

        let x = t.constant_vec(&[0.0, 0.0, 0.0]);
        let p = t.softmax(x).unwrap();
        for v in t.value(p).data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }

        let a = t.constant_vec(&[1.0, 0.0]);
        let b = t.constant_vec(&[0.0, 1.0]);
        let c = t.cosine(a, b).unwrap();
        assert_eq!(t.value(c).item(), 0.0);
        let m = t.mean(&[a, b]).unwrap();
        assert_eq!(t.value(m).data(), &[0.5, 0.5]);
    }

    #[test]
    fn shape_errors_name_operands() {
        let mut t = Tape::new();
        let w = t.constant(&Tensor::zeros(&[2, 3]));
        let x = t.constant_vec(&[1.0, 2.0]);
        let err = t.matvec(w, x).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("[2, 3]") && msg.contains("[2]"), "{msg}");
    }

    #[test]
    fn zero_norm_cosine_is_an_error() {
        let mut t = Tape::new();
        let a = t.constant_vec(&[0.0, 0.0]);
        let b = t.constant_vec(&[1.0, 0.0]);
        assert!(matches!(t.cosine(a, b), Err(Error::ZeroNorm(_))));
    }

    #[test]
    fn fan_out_gradients_accumulate() {
        // f(x) = sum(x*x) + sum(sigmoid(x)); df/dx = 2x + s(1-s)
        let xs = [0.3, -1.2, 2.0];
        let mut t = Tape::new();
        let x = t.param(&Tensor::vector(xs.to_vec()));
        let sq = t.mul(x, x).unwrap();
        let a = t.sum(sq).unwrap();
        let s = t.sigmoid(x).unwrap();
        let b = t.sum(s).unwrap();
        let f = t.add(a, b).unwrap();
        let g = t.backward(f).unwrap();
        for (i, xv) in xs.iter().enumerate() {
            let sv = tensor::sigmoid(*xv);
            let want = 2.0 * xv + sv * (1.0 - sv);
            assert!((g.get(x).unwrap()[i] - want).abs() < 1e-14);
        }
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let c = t.constant_vec(&[1.0, 2.0]);
        let p = t.param(&Tensor::vector(vec![3.0, 4.0]));
        let d = t.dot(c, p).unwrap();
        let g = t.backward(d).unwrap();
        assert!(g.get(c).is_none());
        assert_eq!(g.get(p).unwrap(), &[1.0, 2.0]);
    }

    #[test]
    fn attention_rows_are_distributions() {
        let mut t = Tape::new();
        let m = Tensor::matrix(3, 4, (0..12).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let q = t.constant(&m);
        let a = t.scaled_dot_attention(q, q, q, 2).unwrap();
        for head in t.attention_weights(a).unwrap() {
            for row in head {
                assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }
}
