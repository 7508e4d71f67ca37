//! Dense f64 tensors and a minimal reverse-mode tape.
//!
//! Values are flat row-major buffers. Training code builds a fresh [`Tape`]
//! per step, records ops through it, and calls [`Tape::param_grads`] on a
//! scalar loss. Every arithmetic op checks its output for NaN/Inf and fails
//! fast, so a diverging run surfaces as an error instead of silent garbage.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Stable binary cross-entropy of a logit `z` against target `t`.
///
/// Equals `-t*ln(sigmoid(z)) - (1-t)*ln(1-sigmoid(z))` without ever forming
/// the probabilities.
pub fn bce_with_logit(z: f64, t: f64) -> f64 {
    z.max(0.0) - z * t + (-z.abs()).exp().ln_1p()
}

// ── Tensor ──────────────────────────────────────────────────────────────────

/// Dense tensor: rank 0 is a scalar, rank 1 a vector, rank 2 a matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Build a tensor, validating element count and finiteness.
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Tensor> {
        let want: usize = shape.iter().product();
        if want != data.len() {
            return Err(Error::Dimension(format!(
                "shape {:?} wants {} elements, got {}",
                shape,
                want,
                data.len()
            )));
        }
        let t = Tensor { shape, data };
        t.ensure_finite("tensor construction")?;
        Ok(t)
    }

    /// Rank-1 tensor from a vector, validating finiteness.
    pub fn from_vec(data: Vec<f64>) -> Result<Tensor> {
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor { shape: shape.to_vec(), data: vec![0.0; n] }
    }

    /// Rank-0 scalar. Panics on non-finite input: callers pass literals or
    /// already-validated values.
    pub fn scalar(v: f64) -> Tensor {
        assert!(v.is_finite(), "scalar tensor from non-finite value");
        Tensor { shape: Vec::new(), data: vec![v] }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Extract the single element of a rank-0 tensor.
    pub fn item(&self) -> Result<f64> {
        if self.rank() != 0 {
            return Err(Error::Contract(format!(
                "item() needs a rank-0 tensor, got shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(Error::NonFinite(format!("{what} produced NaN or Inf")))
        }
    }
}

/// Euclidean distance between two equal-length slices.
pub fn l2_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "l2_distance over lengths {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt())
}

// ── Tape ────────────────────────────────────────────────────────────────────

/// Handle to a tape node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Leaf,
    /// y = W x + b with x: [k], W: [m,k], b: [m].
    Affine { x: Var, w: Var, b: Var },
    Relu { x: Var },
    Concat { a: Var, b: Var },
    Add { a: Var, b: Var },
    Sub { a: Var, b: Var },
    Mul { a: Var, b: Var },
    AddMany { xs: Vec<Var> },
    Scale { x: Var, c: f64 },
    Index { x: Var, i: usize },
    Slice { x: Var, start: usize, len: usize },
    Pack { xs: Vec<Var> },
    SumAll { x: Var },
    MeanAll { x: Var },
    Norm2 { x: Var },
    MinMany { xs: Vec<Var> },
    MaxMany { xs: Vec<Var> },
    /// Mean over elements of stable BCE(logits, constant targets).
    BceLogitsMean { z: Var, targets: Vec<f64> },
    /// Mean over elements of (a - b)^2.
    MseMean { a: Var, b: Var },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Set for parameter leaves; gradients accumulate under this name.
    param: Option<String>,
}

/// Reverse-mode tape. Nodes are appended in topological order, so one reverse
/// sweep propagates gradients.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Tape {
        Tape { nodes: Vec::new() }
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

    /// Value of a rank-0 node.
    pub fn scalar_value(&self, v: Var) -> Result<f64> {
        self.nodes[v.0].value.item()
    }

    fn push(&mut self, value: Tensor, op: Op, param: Option<String>) -> Var {
        self.nodes.push(Node { value, op, param });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(&mut self, value: Tensor, op: Op, what: &str) -> Result<Var> {
        value.ensure_finite(what)?;
        Ok(self.push(value, op, None))
    }

    /// Leaf holding a constant (no gradient recorded).
    pub fn constant(&mut self, t: Tensor) -> Var {
        self.push(t, Op::Leaf, None)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(Tensor::scalar(v))
    }

    /// Leaf holding a named parameter; gradients accumulate under `name`.
    pub fn param(&mut self, name: &str, t: Tensor) -> Var {
        self.push(t, Op::Leaf, Some(name.to_string()))
    }

    // ── ops ──

    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        if xv.rank() != 1 || wv.rank() != 2 || bv.rank() != 1 {
            return Err(Error::Dimension(format!(
                "affine wants x:[k] w:[m,k] b:[m], got ranks {}/{}/{}",
                xv.rank(),
                wv.rank(),
                bv.rank()
            )));
        }
        let k = xv.len();
        let (m, wk) = (wv.shape()[0], wv.shape()[1]);
        if wk != k || bv.len() != m {
            return Err(Error::Dimension(format!(
                "affine shapes: x {:?}, w {:?}, b {:?}",
                xv.shape(),
                wv.shape(),
                bv.shape()
            )));
        }
        let mut out = vec![0.0; m];
        for (row, o) in out.iter_mut().enumerate() {
            let wrow = &wv.data()[row * k..(row + 1) * k];
            let mut acc = 0.0;
            for (wj, xj) in wrow.iter().zip(xv.data()) {
                acc += wj * xj;
            }
            *o = acc + bv.data()[row];
        }
        self.push_checked(Tensor { shape: vec![m], data: out }, Op::Affine { x, w, b }, "affine")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let v = self.value(x);
        let out = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|&a| a.max(0.0)).collect(),
        };
        self.push(out, Op::Relu { x }, None)
    }

    pub fn concat(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.rank() != 1 || bv.rank() != 1 {
            return Err(Error::Dimension(format!(
                "concat wants two rank-1 tensors, got ranks {}/{}",
                av.rank(),
                bv.rank()
            )));
        }
        let mut data = Vec::with_capacity(av.len() + bv.len());
        data.extend_from_slice(av.data());
        data.extend_from_slice(bv.data());
        let n = data.len();
        Ok(self.push(Tensor { shape: vec![n], data }, Op::Concat { a, b }, None))
    }

    fn elementwise(&mut self, a: Var, b: Var, op: &str) -> Result<(Vec<usize>, Vec<f64>)> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::Dimension(format!(
                "{op} over shapes {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let data = match op {
            "add" => av.data().iter().zip(bv.data()).map(|(x, y)| x + y).collect(),
            "sub" => av.data().iter().zip(bv.data()).map(|(x, y)| x - y).collect(),
            "mul" => av.data().iter().zip(bv.data()).map(|(x, y)| x * y).collect(),
            _ => unreachable!(),
        };
        Ok((av.shape().to_vec(), data))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data) = self.elementwise(a, b, "add")?;
        self.push_checked(Tensor { shape, data }, Op::Add { a, b }, "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data) = self.elementwise(a, b, "sub")?;
        self.push_checked(Tensor { shape, data }, Op::Sub { a, b }, "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (shape, data) = self.elementwise(a, b, "mul")?;
        self.push_checked(Tensor { shape, data }, Op::Mul { a, b }, "mul")
    }

    /// Elementwise sum of one or more same-shaped tensors.
    pub fn add_many(&mut self, xs: &[Var]) -> Result<Var> {
        let Some(&first) = xs.first() else {
            return Err(Error::Contract("add_many over an empty list".into()));
        };
        let shape = self.value(first).shape().to_vec();
        let mut data = self.value(first).data().to_vec();
        for &x in &xs[1..] {
            let xv = self.value(x);
            if xv.shape() != shape.as_slice() {
                return Err(Error::Dimension(format!(
                    "add_many over shapes {:?} vs {:?}",
                    shape,
                    xv.shape()
                )));
            }
            for (d, s) in data.iter_mut().zip(xv.data()) {
                *d += s;
            }
        }
        self.push_checked(Tensor { shape, data }, Op::AddMany { xs: xs.to_vec() }, "add_many")
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Result<Var> {
        let v = self.value(x);
        let out = Tensor {
            shape: v.shape().to_vec(),
            data: v.data().iter().map(|&a| a * c).collect(),
        };
        self.push_checked(out, Op::Scale { x, c }, "scale")
    }

    /// Extract element `i` of a rank-1 tensor as a scalar.
    pub fn index(&mut self, x: Var, i: usize) -> Result<Var> {
        let v = self.value(x);
        if v.rank() != 1 || i >= v.len() {
            return Err(Error::Dimension(format!(
                "index {} into shape {:?}",
                i,
                v.shape()
            )));
        }
        let out = Tensor::scalar(v.data()[i]);
        Ok(self.push(out, Op::Index { x, i }, None))
    }

    pub fn slice(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let v = self.value(x);
        if v.rank() != 1 || start + len > v.len() {
            return Err(Error::Dimension(format!(
                "slice [{start}, {start}+{len}) of shape {:?}",
                v.shape()
            )));
        }
        let data = v.data()[start..start + len].to_vec();
        Ok(self.push(Tensor { shape: vec![len], data }, Op::Slice { x, start, len }, None))
    }

    /// Stack rank-0 scalars into a rank-1 vector.
    pub fn pack(&mut self, xs: &[Var]) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Contract("pack over an empty list".into()));
        }
        let mut data = Vec::with_capacity(xs.len());
        for &x in xs {
            data.push(self.scalar_value(x)?);
        }
        let n = data.len();
        Ok(self.push(Tensor { shape: vec![n], data }, Op::Pack { xs: xs.to_vec() }, None))
    }

    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().sum();
        self.push_checked(Tensor { shape: Vec::new(), data: vec![s] }, Op::SumAll { x }, "sum_all")
    }

    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::Contract("mean_all over an empty tensor".into()));
        }
        let m = v.data().iter().sum::<f64>() / v.len() as f64;
        self.push_checked(Tensor { shape: Vec::new(), data: vec![m] }, Op::MeanAll { x }, "mean_all")
    }

    /// Euclidean norm of all elements, as a scalar.
    pub fn norm2(&mut self, x: Var) -> Result<Var> {
        let s: f64 = self.value(x).data().iter().map(|a| a * a).sum();
        let n = s.sqrt();
        self.push_checked(Tensor { shape: Vec::new(), data: vec![n] }, Op::Norm2 { x }, "norm2")
    }

    fn extremum(&mut self, xs: &[Var], smallest: bool) -> Result<Var> {
        if xs.is_empty() {
            return Err(Error::Contract("extremum over an empty list".into()));
        }
        let mut bestv = self.scalar_value(xs[0])?;
        for &x in &xs[1..] {
            let v = self.scalar_value(x)?;
            if (smallest && v < bestv) || (!smallest && v > bestv) {
                bestv = v;
            }
        }
        // The achieving element (first, on ties) is re-derived in backward;
        // node values are immutable once recorded.
        let op = if smallest {
            Op::MinMany { xs: xs.to_vec() }
        } else {
            Op::MaxMany { xs: xs.to_vec() }
        };
        Ok(self.push(Tensor::scalar(bestv), op, None))
    }

    /// Minimum of rank-0 scalars; gradient routes to the first argmin.
    pub fn min_many(&mut self, xs: &[Var]) -> Result<Var> {
        self.extremum(xs, true)
    }

    /// Maximum of rank-0 scalars; gradient routes to the first argmax.
    pub fn max_many(&mut self, xs: &[Var]) -> Result<Var> {
        self.extremum(xs, false)
    }

    /// Mean over elements of stable BCE between logits `z` and fixed targets.
    pub fn bce_logits_mean(&mut self, z: Var, targets: &[f64]) -> Result<Var> {
        let zv = self.value(z);
        if zv.len() != targets.len() || zv.is_empty() {
            return Err(Error::Dimension(format!(
                "bce_logits_mean over {} logits vs {} targets",
                zv.len(),
                targets.len()
            )));
        }
        let mut acc = 0.0;
        for (&zi, &ti) in zv.data().iter().zip(targets) {
            acc += bce_with_logit(zi, ti);
        }
        let m = acc / targets.len() as f64;
        self.push_checked(
            Tensor { shape: Vec::new(), data: vec![m] },
            Op::BceLogitsMean { z, targets: targets.to_vec() },
            "bce_logits_mean",
        )
    }

    /// Mean squared error between two same-shaped tensors.
    pub fn mse_mean(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() || av.is_empty() {
            return Err(Error::Dimension(format!(
                "mse_mean over shapes {:?} vs {:?}",
                av.shape(),
                bv.shape()
            )));
        }
        let mut acc = 0.0;
        for (&x, &y) in av.data().iter().zip(bv.data()) {
            acc += (x - y) * (x - y);
        }
        let m = acc / av.len() as f64;
        self.push_checked(
            Tensor { shape: Vec::new(), data: vec![m] },
            Op::MseMean { a, b },
            "mse_mean",
        )
    }

    // ── backward ──

    /// Reverse sweep from a rank-0 `loss` node. Returns gradients for every
    /// parameter leaf reached, keyed by name; repeated leaves accumulate.
    pub fn param_grads(&self, loss: Var) -> Result<BTreeMap<String, Tensor>> {
        if self.value(loss).rank() != 0 {
            return Err(Error::Contract(format!(
                "backward target must be rank-0, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = Vec::with_capacity(loss.0 + 1);
        grads.resize(loss.0 + 1, None);
        grads[loss.0] = Some(Tensor::scalar(1.0));

        let mut by_name: BTreeMap<String, Tensor> = BTreeMap::new();

        for id in (0..=loss.0).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if let Some(name) = &node.param {
                match by_name.get_mut(name) {
                    Some(acc) => {
                        for (a, b) in acc.data_mut().iter_mut().zip(g.data()) {
                            *a += b;
                        }
                    }
                    None => {
                        by_name.insert(name.clone(), g.clone());
                    }
                }
            }
            self.propagate(id, &g, &mut grads);
        }
        Ok(by_name)
    }

    fn accumulate(grads: &mut [Option<Tensor>], target: Var, delta: Tensor) {
        match &mut grads[target.0] {
            Some(acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(delta.data()) {
                    *a += b;
                }
            }
            slot => *slot = Some(delta),
        }
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Affine { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w);
                let k = xv.len();
                let m = self.value(*b).len();
                // dx = W^T g, dW = g x^T, db = g
                let mut dx = vec![0.0; k];
                let mut dw = vec![0.0; m * k];
                for row in 0..m {
                    let go = g.data()[row];
                    let wrow = &wv.data()[row * k..(row + 1) * k];
                    for col in 0..k {
                        dx[col] += wrow[col] * go;
                        dw[row * k + col] = go * xv.data()[col];
                    }
                }
                Self::accumulate(grads, *x, Tensor { shape: vec![k], data: dx });
                Self::accumulate(grads, *w, Tensor { shape: vec![m, k], data: dw });
                Self::accumulate(grads, *b, g.clone());
            }
            Op::Relu { x } => {
                let xv = self.value(*x);
                let data = xv
                    .data()
                    .iter()
                    .zip(g.data())
                    .map(|(&a, &go)| if a > 0.0 { go } else { 0.0 })
                    .collect();
                Self::accumulate(grads, *x, Tensor { shape: xv.shape().to_vec(), data });
            }
            Op::Concat { a, b } => {
                let na = self.value(*a).len();
                let da = g.data()[..na].to_vec();
                let db = g.data()[na..].to_vec();
                let nb = db.len();
                Self::accumulate(grads, *a, Tensor { shape: vec![na], data: da });
                Self::accumulate(grads, *b, Tensor { shape: vec![nb], data: db });
            }
            Op::Add { a, b } => {
                Self::accumulate(grads, *a, g.clone());
                Self::accumulate(grads, *b, g.clone());
            }
            Op::Sub { a, b } => {
                Self::accumulate(grads, *a, g.clone());
                let neg = Tensor {
                    shape: g.shape().to_vec(),
                    data: g.data().iter().map(|v| -v).collect(),
                };
                Self::accumulate(grads, *b, neg);
            }
            Op::Mul { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let da = Tensor {
                    shape: g.shape().to_vec(),
                    data: g.data().iter().zip(bv.data()).map(|(go, y)| go * y).collect(),
                };
                let db = Tensor {
                    shape: g.shape().to_vec(),
                    data: g.data().iter().zip(av.data()).map(|(go, x)| go * x).collect(),
                };
                Self::accumulate(grads, *a, da);
                Self::accumulate(grads, *b, db);
            }
            Op::AddMany { xs } => {
                for &x in xs {
                    Self::accumulate(grads, x, g.clone());
                }
            }
            Op::Scale { x, c } => {
                let d = Tensor {
                    shape: g.shape().to_vec(),
                    data: g.data().iter().map(|v| v * c).collect(),
                };
                Self::accumulate(grads, *x, d);
            }
            Op::Index { x, i } => {
                let n = self.value(*x).len();
                let mut data = vec![0.0; n];
                data[*i] = g.data()[0];
                Self::accumulate(grads, *x, Tensor { shape: vec![n], data });
            }
            Op::Slice { x, start, len } => {
                let n = self.value(*x).len();
                let mut data = vec![0.0; n];
                data[*start..start + len].copy_from_slice(g.data());
                Self::accumulate(grads, *x, Tensor { shape: vec![n], data });
            }
            Op::Pack { xs } => {
                for (i, &x) in xs.iter().enumerate() {
                    Self::accumulate(grads, x, Tensor::scalar(g.data()[i]));
                }
            }
            Op::SumAll { x } => {
                let xv = self.value(*x);
                let d = Tensor {
                    shape: xv.shape().to_vec(),
                    data: vec![g.data()[0]; xv.len()],
                };
                Self::accumulate(grads, *x, d);
            }
            Op::MeanAll { x } => {
                let xv = self.value(*x);
                let go = g.data()[0] / xv.len() as f64;
                let d = Tensor { shape: xv.shape().to_vec(), data: vec![go; xv.len()] };
                Self::accumulate(grads, *x, d);
            }
            Op::Norm2 { x } => {
                let xv = self.value(*x);
                let norm = self.nodes[id].value.data()[0];
                // d||x||/dx = x/||x||; zero vector gets the zero subgradient.
                let data = if norm > 0.0 {
                    xv.data().iter().map(|&v| g.data()[0] * v / norm).collect()
                } else {
                    vec![0.0; xv.len()]
                };
                Self::accumulate(grads, *x, Tensor { shape: xv.shape().to_vec(), data });
            }
            Op::MinMany { xs } | Op::MaxMany { xs } => {
                let smallest = matches!(self.nodes[id].op, Op::MinMany { .. });
                let mut best = 0usize;
                let mut bestv = self.value(xs[0]).data()[0];
                for (i, &x) in xs.iter().enumerate().skip(1) {
                    let v = self.value(x).data()[0];
                    if (smallest && v < bestv) || (!smallest && v > bestv) {
                        best = i;
                        bestv = v;
                    }
                }
                Self::accumulate(grads, xs[best], Tensor::scalar(g.data()[0]));
            }
            Op::BceLogitsMean { z, targets } => {
                let zv = self.value(*z);
                let n = targets.len() as f64;
                let data = zv
                    .data()
                    .iter()
                    .zip(targets)
                    .map(|(&zi, &ti)| g.data()[0] * (sigmoid(zi) - ti) / n)
                    .collect();
                Self::accumulate(grads, *z, Tensor { shape: zv.shape().to_vec(), data });
            }
            Op::MseMean { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                let n = av.len() as f64;
                let da: Vec<f64> = av
                    .data()
                    .iter()
                    .zip(bv.data())
                    .map(|(&x, &y)| g.data()[0] * 2.0 * (x - y) / n)
                    .collect();
                let db: Vec<f64> = da.iter().map(|v| -v).collect();
                Self::accumulate(grads, *a, Tensor { shape: av.shape().to_vec(), data: da });
                Self::accumulate(grads, *b, Tensor { shape: av.shape().to_vec(), data: db });
            }
        }
    }
}
