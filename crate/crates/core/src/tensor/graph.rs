//! Reverse-mode tape. Every op appends a node holding its forward value;
//! `backward` walks the nodes once in reverse creation order, which is a
//! reverse topological order because inputs always precede their users.

use super::scalar::{matmul, Scalar};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    Linear { x: Var, w: Var, b: Option<Var> },
    LeakyRelu { x: Var, slope: T },
    Concat { parts: Vec<Var> },
    Gather { x: Var, index: Vec<u32> },
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Exp(Var),
    ClampMax(Var, T),
    AttSet { x: Var, logits: Var, group: usize, alpha: Vec<T> },
    CrossEntropy { logits: Var, labels: Vec<u32>, mask: Vec<bool>, probs: Vec<T>, count: usize },
    L1 { pred: Var, target: Var },
    Sum(Var),
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Computation tape for one forward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar output with respect to every node that needs one.
#[derive(Debug)]
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf without a gradient.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// `y = x·W + b` over the last axis of `x`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if wv.shape().len() != 2 || xv.cols() != wv.shape()[0] {
            return Err(shape_err(format!(
                "linear: input {:?} against weight {:?}",
                xv.shape(),
                wv.shape()
            )));
        }
        let (rows, inp, out) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
        let mut y = vec![T::zero(); rows * out];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.len() != out {
                return Err(shape_err(format!(
                    "linear: bias {:?} for {out} outputs",
                    bv.shape()
                )));
            }
            for r in 0..rows {
                y[r * out..(r + 1) * out].copy_from_slice(bv.data());
            }
        }
        let beta = if b.is_some() { T::one() } else { T::zero() };
        matmul(rows, inp, out, xv.data(), false, wv.data(), false, beta, &mut y);
        let mut shape = xv.shape().to_vec();
        *shape.last_mut().expect("rank ≥ 1") = out;
        let needs = self.needs(x) || self.needs(w) || b.is_some_and(|b| self.needs(b));
        Ok(self.push(Tensor::new(shape, y)?, Op::Linear { x, w, b }, needs))
    }

    /// `max(x, slope·x)`; the positive branch is taken at 0.
    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        let s = T::of(slope);
        let xv = self.value(x);
        let data = xv
            .data()
            .iter()
            .map(|&v| if v >= T::zero() { v } else { v * s })
            .collect();
        let value = Tensor::new(xv.shape().to_vec(), data).expect("same shape");
        let needs = self.needs(x);
        self.push(value, Op::LeakyRelu { x, slope: s }, needs)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.leaky_relu(x, 0.0)
    }

    /// Concatenation along the last axis; leading axes must agree.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = self.value(parts[0]).rows();
        if let Some(p) = parts.iter().find(|p| self.value(**p).rows() != rows) {
            return Err(shape_err(format!(
                "concat: {} rows against {rows}",
                self.value(*p).rows()
            )));
        }
        let widths: Vec<usize> = parts.iter().map(|p| self.value(*p).cols()).collect();
        let total: usize = widths.iter().sum();
        let mut data = vec![T::zero(); rows * total];
        let mut offset = 0;
        for (p, &w) in parts.iter().zip(&widths) {
            let src = self.value(*p).data();
            for r in 0..rows {
                data[r * total + offset..r * total + offset + w]
                    .copy_from_slice(&src[r * w..(r + 1) * w]);
            }
            offset += w;
        }
        let needs = parts.iter().any(|p| self.needs(*p));
        let value = Tensor::matrix(rows, total, data)?;
        Ok(self.push(
            value,
            Op::Concat {
                parts: parts.to_vec(),
            },
            needs,
        ))
    }

    /// Row gather: output row `i` is input row `index[i]`.
    pub fn gather(&mut self, x: Var, index: Vec<u32>) -> Result<Var> {
        let xv = self.value(x);
        let (rows, cols) = (xv.rows(), xv.cols());
        if let Some(&bad) = index.iter().find(|&&i| i as usize >= rows) {
            return Err(shape_err(format!("gather: row {bad} of {rows}")));
        }
        let mut data = Vec::with_capacity(index.len() * cols);
        for &i in &index {
            data.extend_from_slice(xv.row(i as usize));
        }
        let value = Tensor::matrix(index.len(), cols, data)?;
        let needs = self.needs(x);
        Ok(self.push(value, Op::Gather { x, index }, needs))
    }

    fn binary(&mut self, a: Var, b: Var, f: impl Fn(T, T) -> T, name: &str) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.len() != bv.len() {
            return Err(shape_err(format!(
                "{name}: {:?} against {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| f(x, y))
            .collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x + y, "add")?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Add(a, b), needs))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x - y, "sub")?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Sub(a, b), needs))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.binary(a, b, |x, y| x * y, "mul")?;
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(v, Op::Mul(a, b), needs))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        let xv = self.value(x);
        let v = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|&v| v * c).collect())
            .expect("same shape");
        let needs = self.needs(x);
        self.push(v, Op::Scale(x, c), needs)
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let v = Tensor::new(xv.shape().to_vec(), xv.data().iter().map(|v| v.exp()).collect())
            .expect("same shape");
        let needs = self.needs(x);
        self.push(v, Op::Exp(x), needs)
    }

    /// `min(x, c)` elementwise.
    pub fn clamp_max(&mut self, x: Var, c: f64) -> Var {
        let c = T::of(c);
        let xv = self.value(x);
        let v = Tensor::new(
            xv.shape().to_vec(),
            xv.data().iter().map(|&v| if v > c { c } else { v }).collect(),
        )
        .expect("same shape");
        let needs = self.needs(x);
        self.push(v, Op::ClampMax(x, c), needs)
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s: f64 = self.value(x).data().iter().map(|v| v.as_f64()).sum();
        let needs = self.needs(x);
        self.push(Tensor::scalar(T::of(s)), Op::Sum(x), needs)
    }

    /// Attention pooling over consecutive groups of `group` rows: per channel,
    /// the logits are softmaxed across the group and weight a sum of `x`.
    /// Output has `rows / group` rows.
    pub fn attset(&mut self, x: Var, logits: Var, group: usize) -> Result<Var> {
        let (xv, lv) = (self.value(x), self.value(logits));
        if group == 0 {
            return Err(Error::EmptySet("attention pooling over an empty set".into()));
        }
        if xv.shape() != lv.shape() && (xv.rows(), xv.cols()) != (lv.rows(), lv.cols()) {
            return Err(shape_err(format!(
                "attset: values {:?} against logits {:?}",
                xv.shape(),
                lv.shape()
            )));
        }
        let (rows, cols) = (xv.rows(), xv.cols());
        if rows % group != 0 {
            return Err(shape_err(format!("attset: {rows} rows not divisible by {group}")));
        }
        let sets = rows / group;
        let (xd, ld) = (xv.data(), lv.data());
        let mut alpha = vec![T::zero(); rows * cols];
        let mut out = vec![T::zero(); sets * cols];
        for m in 0..sets {
            let base = m * group;
            for d in 0..cols {
                let mut mx = T::neg_infinity();
                for k in 0..group {
                    mx = mx.max(ld[(base + k) * cols + d]);
                }
                let mut z = T::zero();
                for k in 0..group {
                    let e = (ld[(base + k) * cols + d] - mx).exp();
                    alpha[(base + k) * cols + d] = e;
                    z += e;
                }
                let inv = T::one() / z;
                let mut acc = T::zero();
                for k in 0..group {
                    let i = (base + k) * cols + d;
                    alpha[i] *= inv;
                    acc += alpha[i] * xd[i];
                }
                out[m * cols + d] = acc;
            }
        }
        let needs = self.needs(x) || self.needs(logits);
        let value = Tensor::matrix(sets, cols, out)?;
        Ok(self.push(
            value,
            Op::AttSet {
                x,
                logits,
                group,
                alpha,
            },
            needs,
        ))
    }

    /// Mean softmax cross-entropy over the rows whose `mask` entry is true.
    /// With no selected rows the loss is 0.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[u32], mask: Option<&[bool]>) -> Result<Var> {
        let lv = self.value(logits);
        let (rows, classes) = (lv.rows(), lv.cols());
        if labels.len() != rows {
            return Err(shape_err(format!(
                "cross_entropy: {} labels for {rows} rows",
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= classes) {
            return Err(Error::Validation(format!(
                "label {bad} out of range for {classes} classes"
            )));
        }
        let mask: Vec<bool> = match mask {
            Some(m) if m.len() != rows => {
                return Err(shape_err(format!("cross_entropy: mask of {} for {rows} rows", m.len())))
            }
            Some(m) => m.to_vec(),
            None => vec![true; rows],
        };
        let mut probs = vec![T::zero(); rows * classes];
        let mut total = 0.0f64;
        let mut count = 0;
        for r in 0..rows {
            let row = lv.row(r);
            let (arg, mx) = row
                .iter()
                .enumerate()
                .fold((0, T::neg_infinity()), |a, (i, &b)| if b > a.1 { (i, b) } else { a });
            // z = 1 + rest, kept apart so that log z stays accurate when rest ≪ 1
            let mut rest = T::zero();
            for (c, &v) in row.iter().enumerate() {
                let e = (v - mx).exp();
                probs[r * classes + c] = e;
                if c != arg {
                    rest += e;
                }
            }
            let z = T::one() + rest;
            for c in 0..classes {
                probs[r * classes + c] = probs[r * classes + c] / z;
            }
            if mask[r] {
                let l = labels[r] as usize;
                // −log softmax = log z − (x_l − max)
                total += (rest.ln_1p() - (row[l] - mx)).as_f64();
                count += 1;
            }
        }
        let loss = if count > 0 { total / count as f64 } else { 0.0 };
        let needs = self.needs(logits);
        Ok(self.push(
            Tensor::scalar(T::of(loss)),
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                mask,
                probs,
                count,
            },
            needs,
        ))
    }

    /// Mean absolute difference.
    pub fn l1(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (pv, tv) = (self.value(pred), self.value(target));
        if pv.len() != tv.len() {
            return Err(shape_err(format!(
                "l1: prediction {:?} against target {:?}",
                pv.shape(),
                tv.shape()
            )));
        }
        let n = pv.len().max(1);
        let s: f64 = pv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(&a, &b)| (a - b).abs().as_f64())
            .sum();
        let needs = self.needs(pred) || self.needs(target);
        Ok(self.push(
            Tensor::scalar(T::of(s / n as f64)),
            Op::L1 { pred, target },
            needs,
        ))
    }

    /// Which side of every kink the forward pass landed on. Two evaluations
    /// with equal patterns lie in the same smooth piece of the function.
    pub fn kink_pattern(&self) -> Vec<bool> {
        let mut out = Vec::new();
        for node in &self.nodes {
            match &node.op {
                Op::LeakyRelu { x, .. } => out.extend(self.value(*x).data().iter().map(|&v| v >= T::zero())),
                Op::ClampMax(x, c) => out.extend(self.value(*x).data().iter().map(|&v| v <= *c)),
                Op::L1 { pred, target } => out.extend(
                    self.value(*pred)
                        .data()
                        .iter()
                        .zip(self.value(*target).data())
                        .map(|(a, b)| a >= b),
                ),
                _ => {}
            }
        }
        out
    }

    /// Gradients of the scalar `output` with respect to every node that needs one.
    pub fn backward(&self, output: Var) -> Result<Gradients<T>> {
        if self.value(output).len() != 1 {
            return Err(shape_err(format!(
                "backward needs a scalar output, got {:?}",
                self.value(output).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Tensor::new(
            self.value(output).shape().to_vec(),
            vec![T::one()],
        )?);
        for i in (0..=output.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.propagate(node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.needs(v) {
            return;
        }
        match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Adds into an existing gradient slot without building a temporary.
    fn accumulate_with(&self, grads: &mut [Option<Tensor<T>>], v: Var, f: impl FnOnce(&mut [T])) {
        if !self.needs(v) {
            return;
        }
        let slot = grads[v.0].get_or_insert_with(|| Tensor::zeros(self.value(v).shape().to_vec()));
        f(slot.data_mut());
    }

    fn propagate(&self, node: &Node<T>, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) {
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Linear { x, w, b } => {
                let (xv, wv) = (self.value(*x), self.value(*w));
                let (rows, inp, out) = (xv.rows(), wv.shape()[0], wv.shape()[1]);
                if self.needs(*x) {
                    self.accumulate_with(grads, *x, |dx| {
                        matmul(rows, out, inp, gd, false, wv.data(), true, T::one(), dx)
                    });
                }
                if self.needs(*w) {
                    self.accumulate_with(grads, *w, |dw| {
                        matmul(inp, rows, out, xv.data(), true, gd, false, T::one(), dw)
                    });
                }
                if let Some(b) = b {
                    self.accumulate_with(grads, *b, |db| {
                        let mut acc = vec![0.0f64; out];
                        for r in 0..rows {
                            for (a, &v) in acc.iter_mut().zip(&gd[r * out..(r + 1) * out]) {
                                *a += v.as_f64();
                            }
                        }
                        for (d, a) in db.iter_mut().zip(acc) {
                            *d += T::of(a);
                        }
                    });
                }
            }
            Op::LeakyRelu { x, slope } => {
                let xv = self.value(*x).data();
                self.accumulate_with(grads, *x, |dx| {
                    for ((d, &xi), &gi) in dx.iter_mut().zip(xv).zip(gd) {
                        *d += if xi >= T::zero() { gi } else { gi * *slope };
                    }
                });
            }
            Op::Concat { parts } => {
                let total = node.value.cols();
                let rows = node.value.rows();
                let mut offset = 0;
                for p in parts {
                    let w = self.value(*p).cols();
                    self.accumulate_with(grads, *p, |dp| {
                        for r in 0..rows {
                            for (d, &s) in dp[r * w..(r + 1) * w]
                                .iter_mut()
                                .zip(&gd[r * total + offset..r * total + offset + w])
                            {
                                *d += s;
                            }
                        }
                    });
                    offset += w;
                }
            }
            Op::Gather { x, index } => {
                let cols = node.value.cols();
                self.accumulate_with(grads, *x, |dx| {
                    for (r, &i) in index.iter().enumerate() {
                        let i = i as usize;
                        for (d, &s) in dx[i * cols..(i + 1) * cols]
                            .iter_mut()
                            .zip(&gd[r * cols..(r + 1) * cols])
                        {
                            *d += s;
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate(grads, *b, g.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, g.clone());
                self.accumulate_with(grads, *b, |db| {
                    for (d, &s) in db.iter_mut().zip(gd) {
                        *d -= s;
                    }
                });
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a).data(), self.value(*b).data());
                self.accumulate_with(grads, *a, |da| {
                    for ((d, &s), &y) in da.iter_mut().zip(gd).zip(bv) {
                        *d += s * y;
                    }
                });
                self.accumulate_with(grads, *b, |db| {
                    for ((d, &s), &x) in db.iter_mut().zip(gd).zip(av) {
                        *d += s * x;
                    }
                });
            }
            Op::Scale(x, c) => self.accumulate_with(grads, *x, |dx| {
                for (d, &s) in dx.iter_mut().zip(gd) {
                    *d += s * *c;
                }
            }),
            Op::Exp(x) => {
                let y = node.value.data();
                self.accumulate_with(grads, *x, |dx| {
                    for ((d, &s), &e) in dx.iter_mut().zip(gd).zip(y) {
                        *d += s * e;
                    }
                });
            }
            Op::ClampMax(x, c) => {
                let xv = self.value(*x).data();
                self.accumulate_with(grads, *x, |dx| {
                    for ((d, &s), &v) in dx.iter_mut().zip(gd).zip(xv) {
                        if v <= *c {
                            *d += s;
                        }
                    }
                });
            }
            Op::Sum(x) => {
                let s = gd[0];
                self.accumulate_with(grads, *x, |dx| dx.iter_mut().for_each(|d| *d += s));
            }
            Op::AttSet {
                x,
                logits,
                group,
                alpha,
            } => {
                let xd = self.value(*x).data();
                let cols = node.value.cols();
                let out = node.value.data();
                self.accumulate_with(grads, *x, |dx| {
                    for (i, d) in dx.iter_mut().enumerate() {
                        let (r, c) = (i / cols, i % cols);
                        *d += gd[(r / group) * cols + c] * alpha[i];
                    }
                });
                self.accumulate_with(grads, *logits, |dl| {
                    for (i, d) in dl.iter_mut().enumerate() {
                        let (r, c) = (i / cols, i % cols);
                        let o = (r / group) * cols + c;
                        *d += alpha[i] * (xd[i] - out[o]) * gd[o];
                    }
                });
            }
            Op::CrossEntropy {
                logits,
                labels,
                mask,
                probs,
                count,
            } => {
                if *count == 0 {
                    return;
                }
                let classes = self.value(*logits).cols();
                let scale = gd[0] / T::of(*count as f64);
                self.accumulate_with(grads, *logits, |dl| {
                    for (r, (&l, &m)) in labels.iter().zip(mask).enumerate() {
                        if !m {
                            continue;
                        }
                        for c in 0..classes {
                            let onehot = if c == l as usize { T::one() } else { T::zero() };
                            dl[r * classes + c] += scale * (probs[r * classes + c] - onehot);
                        }
                    }
                });
            }
            Op::L1 { pred, target } => {
                let (pv, tv) = (self.value(*pred).data(), self.value(*target).data());
                let scale = gd[0] / T::of(pv.len().max(1) as f64);
                let sign = |a: T, b: T| {
                    if a > b {
                        T::one()
                    } else if a < b {
                        -T::one()
                    } else {
                        T::zero()
                    }
                };
                self.accumulate_with(grads, *pred, |dp| {
                    for ((d, &a), &b) in dp.iter_mut().zip(pv).zip(tv) {
                        *d += scale * sign(a, b);
                    }
                });
                self.accumulate_with(grads, *target, |dt| {
                    for ((d, &a), &b) in dt.iter_mut().zip(pv).zip(tv) {
                        *d -= scale * sign(a, b);
                    }
                });
            }
        }
    }
}
