use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AutodiffError, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// The differentiable primitive set.
///
/// Shape rules:
///
/// | primitive | inputs | rule |
/// |---|---|---|
/// | `matmul` | `a: m×k`, `b: k×n` | inner extents equal, both 2-D |
/// | `add`, `sub`, `mul` | `a`, `b` | `b` has `a`'s shape, or `b`'s shape (leading 1s dropped) is a suffix of `a`'s and is broadcast over the leading axes |
/// | `scale` | `a` | attr `scale` |
/// | `concat` | `a₁ … aₙ` | attr `axis`; all other extents equal |
/// | `slice` | `a` | attrs `axis`, `start`, `end`; `start ≤ end ≤ extent` |
/// | `transpose` | `a: m×n` | 2-D only |
/// | `softmax` | `a` | over the last axis |
/// | `layer_norm` | `x`, `gain`, `bias` | `gain`/`bias` hold `x`'s last extent; attr `eps` |
/// | `dropout` | `a` | attr `rate ∈ [0, 1)`; identity outside training |
/// | `mean` | `a` | reduces everything to shape `[1]` |
/// | `sin`, `tanh`, `sigmoid`, `relu`, `exp`, `square` | `a` | elementwise |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    Concat,
    Slice,
    Transpose,
    Sin,
    Tanh,
    Sigmoid,
    Relu,
    Exp,
    Softmax,
    LayerNorm,
    Dropout,
    Mean,
    Square,
}

impl Primitive {
    pub const ALL: [Primitive; 18] = [
        Primitive::MatMul,
        Primitive::Add,
        Primitive::Sub,
        Primitive::Mul,
        Primitive::Scale,
        Primitive::Concat,
        Primitive::Slice,
        Primitive::Transpose,
        Primitive::Sin,
        Primitive::Tanh,
        Primitive::Sigmoid,
        Primitive::Relu,
        Primitive::Exp,
        Primitive::Softmax,
        Primitive::LayerNorm,
        Primitive::Dropout,
        Primitive::Mean,
        Primitive::Square,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale => "scale",
            Primitive::Concat => "concat",
            Primitive::Slice => "slice",
            Primitive::Transpose => "transpose",
            Primitive::Sin => "sin",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Relu => "relu",
            Primitive::Exp => "exp",
            Primitive::Softmax => "softmax",
            Primitive::LayerNorm => "layer_norm",
            Primitive::Dropout => "dropout",
            Primitive::Mean => "mean",
            Primitive::Square => "square",
        }
    }
}

impl fmt::Display for Primitive {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Primitive {
    type Err = AutodiffError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Primitive::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| AutodiffError::UnknownPrimitive(s.to_string()))
    }
}

/// Attribute map for [`Graph::forward_primitive`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Attrs {
    pub scale: Option<f64>,
    pub axis: Option<usize>,
    pub start: Option<usize>,
    pub end: Option<usize>,
    pub eps: Option<f64>,
    pub rate: Option<f64>,
}

impl Attrs {
    pub fn scale(s: f64) -> Self {
        Attrs {
            scale: Some(s),
            ..Default::default()
        }
    }

    pub fn axis(axis: usize) -> Self {
        Attrs {
            axis: Some(axis),
            ..Default::default()
        }
    }

    pub fn slice(axis: usize, start: usize, end: usize) -> Self {
        Attrs {
            axis: Some(axis),
            start: Some(start),
            end: Some(end),
            ..Default::default()
        }
    }

    pub fn eps(eps: f64) -> Self {
        Attrs {
            eps: Some(eps),
            ..Default::default()
        }
    }

    pub fn rate(rate: f64) -> Self {
        Attrs {
            rate: Some(rate),
            ..Default::default()
        }
    }
}

fn need<T: Copy>(v: Option<T>, prim: Primitive, name: &str) -> Result<T, AutodiffError> {
    v.ok_or_else(|| AutodiffError::MissingAttribute {
        primitive: prim.name(),
        attr: name.to_string(),
    })
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Concat { inputs: Vec<Var>, axis: usize },
    Slice { x: Var, axis: usize, start: usize },
    Transpose(Var),
    Sin(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Exp(Var),
    Softmax(Var),
    LayerNorm { x: Var, gain: Var, bias: Var, xhat: Vec<f64>, inv_std: Vec<f64> },
    Dropout { x: Var, mask: Vec<f64> },
    Mean(Var),
    Square(Var),
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Define-by-run computation graph.
///
/// Nodes are appended in evaluation order, so creation order is a valid
/// topological order and [`Graph::backward`] simply walks it in reverse.
/// Dropout draws from the graph's own seeded generator; a graph built in
/// evaluation mode treats dropout as the identity.
pub struct Graph {
    nodes: Vec<Node>,
    training: bool,
    rng: ChaCha8Rng,
}

impl Default for Graph {
    fn default() -> Self {
        Graph::new()
    }
}

impl Graph {
    /// Evaluation-mode graph.
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            training: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Training-mode graph whose dropout masks are determined by `seed`.
    pub fn training(seed: u64) -> Self {
        Graph {
            nodes: Vec::new(),
            training: true,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn is_training(&self) -> bool {
        self.training
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Inserts a tensor as a leaf; it participates in differentiation iff
    /// `tensor.requires_grad()`.
    pub fn leaf(&mut self, tensor: Tensor) -> Var {
        self.nodes.push(Node {
            value: tensor,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn constant(&mut self, mut tensor: Tensor) -> Var {
        tensor.set_requires_grad(false);
        self.leaf(tensor)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, op: Op, parents: &[Var]) -> Var {
        let tracked = parents.iter().any(|p| self.requires_grad(*p));
        let mut value = Tensor::from_parts(shape, data);
        value.set_requires_grad(tracked);
        let op = if tracked { op } else { Op::Leaf };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    /// Dispatches a primitive by kind. The typed methods below are the
    /// everyday interface; this entry point exists for generic sweeps.
    pub fn forward_primitive(
        &mut self,
        kind: Primitive,
        inputs: &[Var],
        attrs: &Attrs,
    ) -> Result<Var, AutodiffError> {
        let arity = |n: usize| -> Result<(), AutodiffError> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(AutodiffError::Arity {
                    primitive: kind.name(),
                    expected: n,
                    got: inputs.len(),
                })
            }
        };
        match kind {
            Primitive::MatMul => {
                arity(2)?;
                self.matmul(inputs[0], inputs[1])
            }
            Primitive::Add => {
                arity(2)?;
                self.add(inputs[0], inputs[1])
            }
            Primitive::Sub => {
                arity(2)?;
                self.sub(inputs[0], inputs[1])
            }
            Primitive::Mul => {
                arity(2)?;
                self.mul(inputs[0], inputs[1])
            }
            Primitive::Scale => {
                arity(1)?;
                Ok(self.scale(inputs[0], need(attrs.scale, kind, "scale")?))
            }
            Primitive::Concat => self.concat(inputs, need(attrs.axis, kind, "axis")?),
            Primitive::Slice => {
                arity(1)?;
                self.slice(
                    inputs[0],
                    need(attrs.axis, kind, "axis")?,
                    need(attrs.start, kind, "start")?,
                    need(attrs.end, kind, "end")?,
                )
            }
            Primitive::Transpose => {
                arity(1)?;
                self.transpose(inputs[0])
            }
            Primitive::Sin => {
                arity(1)?;
                Ok(self.sin(inputs[0]))
            }
            Primitive::Tanh => {
                arity(1)?;
                Ok(self.tanh(inputs[0]))
            }
            Primitive::Sigmoid => {
                arity(1)?;
                Ok(self.sigmoid(inputs[0]))
            }
            Primitive::Relu => {
                arity(1)?;
                Ok(self.relu(inputs[0]))
            }
            Primitive::Exp => {
                arity(1)?;
                Ok(self.exp(inputs[0]))
            }
            Primitive::Softmax => {
                arity(1)?;
                Ok(self.softmax(inputs[0]))
            }
            Primitive::LayerNorm => {
                arity(3)?;
                self.layer_norm(
                    inputs[0],
                    inputs[1],
                    inputs[2],
                    need(attrs.eps, kind, "eps")?,
                )
            }
            Primitive::Dropout => {
                arity(1)?;
                self.dropout(inputs[0], need(attrs.rate, kind, "rate")?)
            }
            Primitive::Mean => {
                arity(1)?;
                Ok(self.mean(inputs[0]))
            }
            Primitive::Square => {
                arity(1)?;
                Ok(self.square(inputs[0]))
            }
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(AutodiffError::ShapeMismatch(format!(
                "matmul {sa:?} x {sb:?}"
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        Ok(self.push(vec![m, n], out, Op::MatMul(a, b), &[a, b]))
    }

    fn broadcast_check(&self, a: Var, b: Var, what: &str) -> Result<(), AutodiffError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa == sb {
            return Ok(());
        }
        let trimmed: Vec<usize> = sb.iter().copied().skip_while(|&d| d == 1).collect();
        if trimmed.len() <= sa.len() && sa.ends_with(&trimmed) {
            return Ok(());
        }
        Err(AutodiffError::ShapeMismatch(format!("{what} {sa:?} with {sb:?}")))
    }

    fn binary(
        &mut self,
        a: Var,
        b: Var,
        what: &str,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var, AutodiffError> {
        self.broadcast_check(a, b, what)?;
        let (va, vb) = (self.value(a), self.value(b));
        let nb = vb.numel();
        let out: Vec<f64> = if nb == 0 {
            Vec::new()
        } else {
            va.data()
                .chunks(nb)
                .flat_map(|chunk| chunk.iter().zip(vb.data()).map(|(&x, &y)| f(x, y)))
                .collect()
        };
        let shape = va.shape().to_vec();
        Ok(self.push(shape, out, op, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.binary(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let v = self.value(a);
        let out = v.data().iter().map(|x| x * s).collect();
        let shape = v.shape().to_vec();
        self.push(shape, out, Op::Scale(a, s), &[a])
    }

    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var, AutodiffError> {
        let first = inputs
            .first()
            .ok_or_else(|| AutodiffError::ShapeMismatch("concat of nothing".into()))?;
        let base = self.shape(*first).to_vec();
        if axis >= base.len() {
            return Err(AutodiffError::ShapeMismatch(format!(
                "concat axis {axis} out of range for {base:?}"
            )));
        }
        let mut total = 0;
        for v in inputs {
            let s = self.shape(*v);
            let ok = s.len() == base.len()
                && s.iter()
                    .zip(&base)
                    .enumerate()
                    .all(|(i, (x, y))| i == axis || x == y);
            if !ok {
                return Err(AutodiffError::ShapeMismatch(format!(
                    "concat along {axis}: {base:?} with {s:?}"
                )));
            }
            total += s[axis];
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for v in inputs {
                let t = self.value(*v);
                let seg = t.shape()[axis] * inner;
                out.extend_from_slice(&t.data()[o * seg..(o + 1) * seg]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(
            shape,
            out,
            Op::Concat {
                inputs: inputs.to_vec(),
                axis,
            },
            inputs,
        ))
    }

    pub fn slice(
        &mut self,
        x: Var,
        axis: usize,
        start: usize,
        end: usize,
    ) -> Result<Var, AutodiffError> {
        let s = self.shape(x).to_vec();
        if axis >= s.len() || start > end || end > s[axis] {
            return Err(AutodiffError::ShapeMismatch(format!(
                "slice [{start}..{end}) on axis {axis} of {s:?}"
            )));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let width = end - start;
        let data = self.value(x).data();
        let mut out = Vec::with_capacity(outer * width * inner);
        for o in 0..outer {
            let base = (o * s[axis] + start) * inner;
            out.extend_from_slice(&data[base..base + width * inner]);
        }
        let mut shape = s;
        shape[axis] = width;
        Ok(self.push(shape, out, Op::Slice { x, axis, start }, &[x]))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, AutodiffError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(AutodiffError::ShapeMismatch(format!(
                "transpose needs 2-D, got {s:?}"
            )));
        }
        let out = transposed(self.value(x).data(), s[0], s[1]);
        Ok(self.push(vec![s[1], s[0]], out, Op::Transpose(x), &[x]))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let v = self.value(x);
        let out = v.data().iter().map(|&z| f(z)).collect();
        let shape = v.shape().to_vec();
        self.push(shape, out, op, &[x])
    }

    pub fn sin(&mut self, x: Var) -> Var {
        self.unary(x, f64::sin, Op::Sin(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |z| if z < 0.0 { 0.0 } else { z }, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, f64::exp, Op::Exp(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |z| z * z, Op::Square(x))
    }

    /// Softmax over the last axis. Entries equal to `-inf` receive zero
    /// weight; a row with no finite entry yields all zeros.
    pub fn softmax(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let c = v.cols();
        let mut out = vec![0.0; v.numel()];
        if c > 0 {
            for (src, dst) in v.data().chunks(c).zip(out.chunks_mut(c)) {
                let max = src.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if max == f64::NEG_INFINITY && !src.iter().any(|s| s.is_nan()) {
                    continue;
                }
                let mut sum = 0.0;
                for (d, &s) in dst.iter_mut().zip(src) {
                    *d = (s - max).exp();
                    sum += *d;
                }
                dst.iter_mut().for_each(|d| *d /= sum);
            }
        }
        let shape = v.shape().to_vec();
        self.push(shape, out, Op::Softmax(x), &[x])
    }

    /// Normalizes each row over the last axis, then applies `gain` and `bias`.
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Var,
        bias: Var,
        eps: f64,
    ) -> Result<Var, AutodiffError> {
        let v = self.value(x);
        let c = v.cols();
        let (g, b) = (self.value(gain), self.value(bias));
        if g.numel() != c || b.numel() != c {
            return Err(AutodiffError::ShapeMismatch(format!(
                "layer_norm over {c} features with gain {:?} and bias {:?}",
                g.shape(),
                b.shape()
            )));
        }
        let rows = if c == 0 { 0 } else { v.numel() / c };
        let mut xhat = vec![0.0; v.numel()];
        let mut inv_std = vec![0.0; rows];
        let mut out = vec![0.0; v.numel()];
        for r in 0..rows {
            let src = &v.data()[r * c..(r + 1) * c];
            let mu = src.iter().sum::<f64>() / c as f64;
            let var = src.iter().map(|z| (z - mu) * (z - mu)).sum::<f64>() / c as f64;
            let inv = 1.0 / (var + eps).sqrt();
            inv_std[r] = inv;
            for j in 0..c {
                let h = (src[j] - mu) * inv;
                xhat[r * c + j] = h;
                out[r * c + j] = h * g.data()[j] + b.data()[j];
            }
        }
        let shape = v.shape().to_vec();
        Ok(self.push(
            shape,
            out,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            &[x, gain, bias],
        ))
    }

    /// Inverted dropout: in training mode each element is zeroed with
    /// probability `rate` and survivors are scaled by `1/(1-rate)`.
    pub fn dropout(&mut self, x: Var, rate: f64) -> Result<Var, AutodiffError> {
        if !(0.0..1.0).contains(&rate) {
            return Err(AutodiffError::InvalidAttribute(format!(
                "dropout rate {rate} outside [0, 1)"
            )));
        }
        if !self.training || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 / (1.0 - rate);
        let n = self.value(x).numel();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < rate { 0.0 } else { keep })
            .collect();
        let v = self.value(x);
        let out = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let shape = v.shape().to_vec();
        Ok(self.push(shape, out, Op::Dropout { x, mask }, &[x]))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let m = if v.numel() == 0 {
            0.0
        } else {
            v.data().iter().sum::<f64>() / v.numel() as f64
        };
        self.push(vec![1], vec![m], Op::Mean(x), &[x])
    }

    /// Reverse pass from a scalar `loss`. Gradients accumulate (`+=`) into
    /// every node that requires them, leaves included.
    pub fn backward(&mut self, loss: Var) -> Result<(), AutodiffError> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(AutodiffError::NonScalarLoss(lv.shape().to_vec()));
        }
        if !lv.requires_grad() {
            return Err(AutodiffError::DisconnectedGraph);
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=loss.0).map(|_| None).collect();
        grads[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            let slot = self.nodes[i].value.grad_mut_or_init();
            slot.iter_mut().zip(&g).for_each(|(s, x)| *s += x);
        }
        Ok(())
    }

    /// Clears every stored gradient.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.take_grad();
        }
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let out = &node.value;
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (m, k, n) = (va.shape()[0], va.shape()[1], vb.shape()[1]);
                if let Some(ga) = slot(nodes, grads, *a) {
                    // dA += G · Bᵀ
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let brow = &vb.data()[p * n..(p + 1) * n];
                            ga[r * k + p] += dot(grow, brow);
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    // dB += Aᵀ · G
                    for r in 0..m {
                        let grow = &g[r * n..(r + 1) * n];
                        for p in 0..k {
                            let s = va.data()[r * k + p];
                            if s != 0.0 {
                                axpy(s, grow, &mut gb[p * n..(p + 1) * n]);
                            }
                        }
                    }
                }
            }
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += y);
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    let nb = gb.len();
                    if nb > 0 {
                        for chunk in g.chunks(nb) {
                            gb.iter_mut().zip(chunk).for_each(|(x, y)| *x += sign * y);
                        }
                    }
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let nb = vb.numel();
                if let Some(ga) = slot(nodes, grads, *a) {
                    if nb > 0 {
                        for (gc, dst) in g.chunks(nb).zip(ga.chunks_mut(nb)) {
                            for j in 0..nb {
                                dst[j] += gc[j] * vb.data()[j];
                            }
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *b) {
                    if nb > 0 {
                        for (gc, ac) in g.chunks(nb).zip(va.data().chunks(nb)) {
                            for j in 0..nb {
                                gb[j] += gc[j] * ac[j];
                            }
                        }
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(ga) = slot(nodes, grads, *a) {
                    ga.iter_mut().zip(g).for_each(|(x, y)| *x += s * y);
                }
            }
            Op::Concat { inputs, axis } => {
                let shape = out.shape();
                let outer: usize = shape[..*axis].iter().product();
                let inner: usize = shape[axis + 1..].iter().product();
                let total = shape[*axis] * inner;
                let mut offset = 0;
                for v in inputs {
                    let seg = nodes[v.0].value.shape()[*axis] * inner;
                    if let Some(gv) = slot(nodes, grads, *v) {
                        for o in 0..outer {
                            let src = &g[o * total + offset..o * total + offset + seg];
                            gv[o * seg..(o + 1) * seg]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(x, y)| *x += y);
                        }
                    }
                    offset += seg;
                }
            }
            Op::Slice { x, axis, start } => {
                let xs = nodes[x.0].value.shape().to_vec();
                let width = out.shape()[*axis];
                if let Some(gx) = slot(nodes, grads, *x) {
                    let outer: usize = xs[..*axis].iter().product();
                    let inner: usize = xs[axis + 1..].iter().product();
                    for o in 0..outer {
                        let base = (o * xs[*axis] + start) * inner;
                        let src = &g[o * width * inner..(o + 1) * width * inner];
                        gx[base..base + width * inner]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::Transpose(x) => {
                let (r, c) = (out.shape()[0], out.shape()[1]);
                if let Some(gx) = slot(nodes, grads, *x) {
                    // out is r×c, x is c×r
                    for i in 0..r {
                        for j in 0..c {
                            gx[j * r + i] += g[i * c + j];
                        }
                    }
                }
            }
            Op::Sin(x) => {
                let xv = nodes[x.0].value.data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += g[j] * xv[j].cos();
                    }
                }
            }
            Op::Tanh(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (j, y) in out.data().iter().enumerate() {
                        gx[j] += g[j] * (1.0 - y * y);
                    }
                }
            }
            Op::Sigmoid(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (j, y) in out.data().iter().enumerate() {
                        gx[j] += g[j] * y * (1.0 - y);
                    }
                }
            }
            Op::Relu(x) => {
                let xv = nodes[x.0].value.data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        if xv[j] > 0.0 {
                            gx[j] += g[j];
                        }
                    }
                }
            }
            Op::Exp(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for (j, y) in out.data().iter().enumerate() {
                        gx[j] += g[j] * y;
                    }
                }
            }
            Op::Square(x) => {
                let xv = nodes[x.0].value.data();
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += 2.0 * xv[j] * g[j];
                    }
                }
            }
            Op::Softmax(x) => {
                let c = out.cols();
                if let Some(gx) = slot(nodes, grads, *x) {
                    if c > 0 {
                        for ((y, gy), dst) in out
                            .data()
                            .chunks(c)
                            .zip(g.chunks(c))
                            .zip(gx.chunks_mut(c))
                        {
                            let s = dot(y, gy);
                            for j in 0..c {
                                dst[j] += y[j] * (gy[j] - s);
                            }
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            } => {
                let c = out.cols();
                let gv = nodes[gain.0].value.data();
                if let Some(gg) = slot(nodes, grads, *gain) {
                    for (gr, hr) in g.chunks(c).zip(xhat.chunks(c)) {
                        for j in 0..c {
                            gg[j] += gr[j] * hr[j];
                        }
                    }
                }
                if let Some(gb) = slot(nodes, grads, *bias) {
                    for gr in g.chunks(c) {
                        gb.iter_mut().zip(gr).for_each(|(a, b)| *a += b);
                    }
                }
                if let Some(gx) = slot(nodes, grads, *x) {
                    let mut dh = vec![0.0; c];
                    for (r, inv) in inv_std.iter().enumerate() {
                        let gr = &g[r * c..(r + 1) * c];
                        let hr = &xhat[r * c..(r + 1) * c];
                        for j in 0..c {
                            dh[j] = gr[j] * gv[j];
                        }
                        let mean_dh = dh.iter().sum::<f64>() / c as f64;
                        let mean_dh_h = dot(&dh, hr) / c as f64;
                        for j in 0..c {
                            gx[r * c + j] += inv * (dh[j] - mean_dh - hr[j] * mean_dh_h);
                        }
                    }
                }
            }
            Op::Dropout { x, mask } => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    for j in 0..g.len() {
                        gx[j] += g[j] * mask[j];
                    }
                }
            }
            Op::Mean(x) => {
                if let Some(gx) = slot(nodes, grads, *x) {
                    let n = gx.len() as f64;
                    gx.iter_mut().for_each(|a| *a += g[0] / n);
                }
            }
        }
    }
}

fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], v: Var) -> Option<&'a mut Vec<f64>> {
    let t = &nodes[v.0].value;
    if !t.requires_grad() {
        return None;
    }
    let n = t.numel();
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n]))
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(a, b)| *a += s * b);
}

/// `out += a · b` for row-major `a: m×k`, `b: k×n`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    for r in 0..m {
        let orow = &mut out[r * n..(r + 1) * n];
        for p in 0..k {
            let s = a[r * k + p];
            if s != 0.0 {
                axpy(s, &b[p * n..(p + 1) * n], orow);
            }
        }
    }
}

fn transposed(data: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = data[i * c + j];
        }
    }
    out
}
