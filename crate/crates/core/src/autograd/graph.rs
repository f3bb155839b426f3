use super::conv::{self, ConvGeom, Padding};
use super::Tensor;
use crate::error::{Error, Result};

/// Lower/upper clamp applied to probabilities before taking logarithms.
const PROB_FLOOR: f64 = 1e-7;

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolKind {
    Avg,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BnMode {
    Train,
    Infer,
}

/// Running statistics of one batch-norm layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BnStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    ready: bool,
}

impl BnStats {
    /// Mean 0, variance 1: inference is the identity map (up to eps)
    /// before any training.
    pub fn identity(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels], ready: true }
    }

    /// No statistics yet; inference mode refuses to run.
    pub fn empty(channels: usize) -> Self {
        Self { mean: vec![0.0; channels], var: vec![1.0; channels], ready: false }
    }

    pub fn from_parts(mean: Vec<f64>, var: Vec<f64>) -> Self {
        Self { mean, var, ready: true }
    }

    pub fn is_ready(&self) -> bool {
        self.ready
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom },
    Relu { x: Var },
    BatchNorm { x: Var, gamma: Var, beta: Var, xhat: Vec<f64>, inv_std: Vec<f64>, train: bool, dims: [usize; 3] },
    Pool { x: Var, kind: PoolKind, width: usize, stride: usize, dims: [usize; 3], argmax: Vec<usize> },
    GlobalAvgPool { x: Var, len: usize },
    Softmax { x: Var, cols: usize },
    Select { x: Var, col: usize, cols: usize },
    Reshape { x: Var },
    MaxLast { x: Var, cols: usize, argmax: Vec<usize> },
    CrossEntropy { p: Var, targets: Vec<usize>, weights: Vec<f64>, cols: usize },
    BinaryCrossEntropy { p: Var, targets: Vec<f64>, weights: [f64; 2] },
    Sum { x: Var },
    Mul { a: Var, b: Var },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Tape of operations in execution order.
#[derive(Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
    backward_done: bool,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Leaf that receives a gradient.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, true, Op::Leaf)
    }

    /// Leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, false, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    /// Takes the gradient out as a tensor shaped like the value.
    pub fn take_grad(&mut self, v: Var) -> Option<Tensor> {
        let shape = self.nodes[v.0].value.shape().to_vec();
        self.nodes[v.0].grad.take().map(|g| Tensor::new(shape, g).expect("grad matches value shape"))
    }

    /// Clears all gradients so that `backward` may run again.
    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.backward_done = false;
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        self.nodes.push(Node { value, grad: None, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    /// `x: [B, C_in, L]`, `w: [C_out, C_in, width]`, `b: [C_out]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var, stride: usize, padding: Padding) -> Result<Var> {
        let (xs, ws, bs) = (self.shape(x), self.shape(w), self.shape(b));
        if xs.len() != 3 || ws.len() != 3 || bs.len() != 1 || xs[1] != ws[1] || bs[0] != ws[0] {
            return Err(Error::Shape(format!("conv1d: x {xs:?}, w {ws:?}, b {bs:?}")));
        }
        if stride == 0 || ws[2] % 2 == 0 {
            return Err(Error::Shape(format!("conv1d: width {} must be odd and stride {stride} >= 1", ws[2])));
        }
        let (out_len, pad_left) = conv::conv1d_output_len(xs[2], ws[2], stride, padding);
        let geom = ConvGeom {
            batch: xs[0],
            c_in: xs[1],
            len: xs[2],
            c_out: ws[0],
            width: ws[2],
            stride,
            pad_left,
            out_len,
        };
        let y = conv::forward(&geom, self.value(x).data(), self.value(w).data(), self.value(b).data());
        let value = Tensor::new(vec![geom.batch, geom.c_out, out_len], y)?;
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(value, rg, Op::Conv { x, w, b, geom }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let src = self.value(x);
        let data = src.data().iter().map(|&v| v.max(0.0)).collect();
        let value = Tensor::new(src.shape().to_vec(), data).expect("same shape");
        let rg = self.needs(&[x]);
        self.push(value, rg, Op::Relu { x })
    }

    /// Normalises each feature map of `x: [B, C, L]` (or `[B, C]`) over the
    /// batch and position axes. Train mode also folds the batch statistics
    /// into `stats` with weight `momentum`.
    pub fn batch_norm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        stats: &mut BnStats,
        mode: BnMode,
        momentum: f64,
        eps: f64,
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let dims = match xs.as_slice() {
            &[b, c, l] => [b, c, l],
            &[b, c] => [b, c, 1],
            _ => return Err(Error::Shape(format!("batch_norm: x {xs:?}"))),
        };
        let [nb, nc, nl] = dims;
        if self.shape(gamma) != [nc] || self.shape(beta) != [nc] || stats.mean.len() != nc {
            return Err(Error::Shape(format!("batch_norm: {nc} channels vs gamma {:?}", self.shape(gamma))));
        }
        let xd = self.value(x).data();
        let (mean, var) = match mode {
            BnMode::Train => {
                let n = (nb * nl) as f64;
                if nb * nl == 0 {
                    return Err(Error::Shape("batch_norm: empty batch".into()));
                }
                let mut mean = vec![0.0; nc];
                for b in 0..nb {
                    for (c, m) in mean.iter_mut().enumerate() {
                        *m += xd[(b * nc + c) * nl..(b * nc + c + 1) * nl].iter().sum::<f64>();
                    }
                }
                mean.iter_mut().for_each(|m| *m /= n);
                let mut var = vec![0.0; nc];
                for b in 0..nb {
                    for (c, v) in var.iter_mut().enumerate() {
                        let m = mean[c];
                        *v += xd[(b * nc + c) * nl..(b * nc + c + 1) * nl].iter().map(|&t| (t - m) * (t - m)).sum::<f64>();
                    }
                }
                var.iter_mut().for_each(|v| *v /= n);
                let unbias = if n > 1.0 { n / (n - 1.0) } else { 1.0 };
                for c in 0..nc {
                    stats.mean[c] = (1.0 - momentum) * stats.mean[c] + momentum * mean[c];
                    stats.var[c] = (1.0 - momentum) * stats.var[c] + momentum * var[c] * unbias;
                }
                stats.ready = true;
                (mean, var)
            }
            BnMode::Infer => {
                if !stats.ready {
                    return Err(Error::MissingStatistics);
                }
                (stats.mean.clone(), stats.var.clone())
            }
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
        let (g, bt) = (self.value(gamma).data(), self.value(beta).data());
        let mut xhat = vec![0.0; xd.len()];
        let mut y = vec![0.0; xd.len()];
        for b in 0..nb {
            for c in 0..nc {
                let r = (b * nc + c) * nl..(b * nc + c + 1) * nl;
                for ((h, o), &t) in xhat[r.clone()].iter_mut().zip(&mut y[r.clone()]).zip(&xd[r]) {
                    *h = (t - mean[c]) * inv_std[c];
                    *o = g[c] * *h + bt[c];
                }
            }
        }
        let value = Tensor::new(xs, y)?;
        let rg = self.needs(&[x, gamma, beta]);
        Ok(self.push(
            value,
            rg,
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train: mode == BnMode::Train, dims },
        ))
    }

    /// Pools `x: [B, C, L]` along L; trailing samples that do not fill a
    /// window are dropped. Max pooling routes gradients to the first maximum.
    pub fn pool1d(&mut self, x: Var, kind: PoolKind, width: usize, stride: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || width == 0 || stride == 0 {
            return Err(Error::Shape(format!("pool1d: x {xs:?}, width {width}, stride {stride}")));
        }
        let [nb, nc, nl] = [xs[0], xs[1], xs[2]];
        let out = if nl < width { 0 } else { (nl - width) / stride + 1 };
        let xd = self.value(x).data();
        let mut y = vec![0.0; nb * nc * out];
        let mut argmax = Vec::new();
        if kind == PoolKind::Max {
            argmax = vec![0; y.len()];
        }
        for r in 0..nb * nc {
            let row = &xd[r * nl..(r + 1) * nl];
            for i in 0..out {
                let win = &row[i * stride..i * stride + width];
                let o = r * out + i;
                match kind {
                    PoolKind::Avg => y[o] = win.iter().sum::<f64>() / width as f64,
                    PoolKind::Max => {
                        let mut best = 0;
                        for (j, &v) in win.iter().enumerate() {
                            if v > win[best] {
                                best = j;
                            }
                        }
                        y[o] = win[best];
                        argmax[o] = i * stride + best;
                    }
                }
            }
        }
        let value = Tensor::new(vec![nb, nc, out], y)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Pool { x, kind, width, stride, dims: [nb, nc, nl], argmax }))
    }

    /// Mean over the last axis: `[B, C, L] -> [B, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || xs[2] == 0 {
            return Err(Error::Shape(format!("global_avg_pool needs [B, C, L >= 1], got {xs:?}")));
        }
        let len = xs[2];
        let y = self.value(x).data().chunks(len).map(|row| row.iter().sum::<f64>() / len as f64).collect();
        let value = Tensor::new(vec![xs[0], xs[1]], y)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::GlobalAvgPool { x, len }))
    }

    /// Row-wise softmax over the last axis of `[R, C]` (or `[C]`).
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let cols = *xs.last().ok_or_else(|| Error::Shape("softmax of a scalar".into()))?;
        if cols == 0 {
            return Err(Error::Shape("softmax over zero classes".into()));
        }
        let mut y = self.value(x).data().to_vec();
        for row in y.chunks_mut(cols) {
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
        }
        let value = Tensor::new(xs, y)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Softmax { x, cols }))
    }

    /// Column `col` of `[R, C]`, giving `[R]`.
    pub fn select(&mut self, x: Var, col: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || col >= xs[1] {
            return Err(Error::Shape(format!("select column {col} of {xs:?}")));
        }
        let cols = xs[1];
        let y = self.value(x).data().chunks(cols).map(|r| r[col]).collect();
        let value = Tensor::new(vec![xs[0]], y)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Select { x, col, cols }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::Reshape { x }))
    }

    /// Maximum over the last axis of `[R, C]`, giving `[R]`; ties resolve
    /// to the first column.
    pub fn max_last(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 2 || xs[1] == 0 {
            return Err(Error::Shape(format!("max_last needs [R, C >= 1], got {xs:?}")));
        }
        let cols = xs[1];
        let mut argmax = Vec::with_capacity(xs[0]);
        let y = self
            .value(x)
            .data()
            .chunks(cols)
            .map(|r| {
                let mut best = 0;
                for (j, &v) in r.iter().enumerate() {
                    if v > r[best] {
                        best = j;
                    }
                }
                argmax.push(best);
                r[best]
            })
            .collect();
        let value = Tensor::new(vec![xs[0]], y)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, rg, Op::MaxLast { x, cols, argmax }))
    }

    /// Weighted categorical cross-entropy of probabilities `p: [B, C]`
    /// against class indices, averaged over the batch.
    pub fn cross_entropy(&mut self, p: Var, targets: &[usize], weights: &[f64]) -> Result<Var> {
        let ps = self.shape(p).to_vec();
        if ps.len() != 2 || ps[0] != targets.len() || weights.len() != ps[1] {
            return Err(Error::Shape(format!(
                "cross_entropy: p {ps:?}, {} targets, {} weights",
                targets.len(),
                weights.len()
            )));
        }
        let cols = ps[1];
        if let Some(t) = targets.iter().find(|&&t| t >= cols) {
            return Err(Error::InvalidArgument(format!("target class {t} out of range for {cols} classes")));
        }
        let pd = self.value(p).data();
        let batch = targets.len().max(1) as f64;
        let loss = targets
            .iter()
            .enumerate()
            .map(|(b, &t)| -weights[t] * pd[b * cols + t].clamp(PROB_FLOOR, 1.0 - PROB_FLOOR).ln())
            .sum::<f64>()
            / batch;
        let rg = self.needs(&[p]);
        Ok(self.push(
            Tensor::scalar(loss),
            rg,
            Op::CrossEntropy { p, targets: targets.to_vec(), weights: weights.to_vec(), cols },
        ))
    }

    /// Weighted binary cross-entropy of `p: [B]` against 0/1 targets;
    /// `weights = [w_negative, w_positive]`.
    pub fn binary_cross_entropy(&mut self, p: Var, targets: &[f64], weights: [f64; 2]) -> Result<Var> {
        let ps = self.shape(p).to_vec();
        if ps.len() != 1 || ps[0] != targets.len() {
            return Err(Error::Shape(format!("binary_cross_entropy: p {ps:?}, {} targets", targets.len())));
        }
        if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
            return Err(Error::InvalidArgument(format!("binary target {t} outside [0, 1]")));
        }
        let pd = self.value(p).data();
        let batch = targets.len().max(1) as f64;
        let loss = targets
            .iter()
            .zip(pd)
            .map(|(&y, &q)| {
                let q = q.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR);
                -(weights[1] * y * q.ln() + weights[0] * (1.0 - y) * (1.0 - q).ln())
            })
            .sum::<f64>()
            / batch;
        let rg = self.needs(&[p]);
        Ok(self.push(Tensor::scalar(loss), rg, Op::BinaryCrossEntropy { p, targets: targets.to_vec(), weights }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), rg, Op::Sum { x })
    }

    /// Elementwise product of equally shaped tensors.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!("mul: {:?} vs {:?}", self.shape(a), self.shape(b))));
        }
        let data = self.value(a).data().iter().zip(self.value(b).data()).map(|(x, y)| x * y).collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        let rg = self.needs(&[a, b]);
        Ok(self.push(value, rg, Op::Mul { a, b }))
    }

    /// Reverse sweep from a single-element `loss`. Every node that requires
    /// a gradient and feeds the loss ends up with one.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.backward_done {
            return Err(Error::BackwardTwice);
        }
        if self.value(loss).len() != 1 {
            return Err(Error::Shape(format!("backward from non-scalar {:?}", self.shape(loss))));
        }
        self.backward_done = true;
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = self.nodes[i].grad.take() else { continue };
            let contributions = self.local_backward(i, &g);
            self.nodes[i].grad = Some(g);
            for (parent, delta) in contributions {
                if !self.nodes[parent.0].requires_grad {
                    continue;
                }
                match &mut self.nodes[parent.0].grad {
                    Some(acc) => acc.iter_mut().zip(&delta).for_each(|(a, d)| *a += d),
                    slot @ None => *slot = Some(delta),
                }
            }
        }
        Ok(())
    }

    fn local_backward(&self, i: usize, g: &[f64]) -> Vec<(Var, Vec<f64>)> {
        let node = &self.nodes[i];
        let val = |v: Var| self.nodes[v.0].value.data();
        let rg = |v: Var| self.nodes[v.0].requires_grad;
        match &node.op {
            Op::Leaf => Vec::new(),
            Op::Conv { x, w, b, geom } => {
                let grads = conv::backward(geom, val(*x), val(*w), g, rg(*x));
                let mut out = vec![(*w, grads.dw), (*b, grads.db)];
                if let Some(dx) = grads.dx {
                    out.push((*x, dx));
                }
                out
            }
            Op::Relu { x } => {
                let dx = val(*x).iter().zip(g).map(|(&v, &d)| if v > 0.0 { d } else { 0.0 }).collect();
                vec![(*x, dx)]
            }
            Op::BatchNorm { x, gamma, beta, xhat, inv_std, train, dims } => {
                let [nb, nc, nl] = *dims;
                let gm = val(*gamma);
                let mut dgamma = vec![0.0; nc];
                let mut dbeta = vec![0.0; nc];
                for b in 0..nb {
                    for c in 0..nc {
                        let r = (b * nc + c) * nl..(b * nc + c + 1) * nl;
                        for (&d, &h) in g[r.clone()].iter().zip(&xhat[r]) {
                            dgamma[c] += d * h;
                            dbeta[c] += d;
                        }
                    }
                }
                let mut dx = vec![0.0; g.len()];
                if *train {
                    // dx = γ·inv/n · (n·dy − Σdy − x̂·Σ(dy·x̂))
                    let n = (nb * nl) as f64;
                    for b in 0..nb {
                        for c in 0..nc {
                            let k = gm[c] * inv_std[c] / n;
                            let r = (b * nc + c) * nl..(b * nc + c + 1) * nl;
                            for ((o, &d), &h) in dx[r.clone()].iter_mut().zip(&g[r.clone()]).zip(&xhat[r]) {
                                *o = k * (n * d - dbeta[c] - h * dgamma[c]);
                            }
                        }
                    }
                } else {
                    for b in 0..nb {
                        for c in 0..nc {
                            let k = gm[c] * inv_std[c];
                            let r = (b * nc + c) * nl..(b * nc + c + 1) * nl;
                            for (o, &d) in dx[r.clone()].iter_mut().zip(&g[r]) {
                                *o = k * d;
                            }
                        }
                    }
                }
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Pool { x, kind, width, stride, dims, argmax } => {
                let [nb, nc, nl] = *dims;
                let out = node.value.shape()[2];
                let mut dx = vec![0.0; nb * nc * nl];
                for r in 0..nb * nc {
                    for i in 0..out {
                        let d = g[r * out + i];
                        match kind {
                            PoolKind::Avg => {
                                let share = d / *width as f64;
                                dx[r * nl + i * stride..r * nl + i * stride + width]
                                    .iter_mut()
                                    .for_each(|v| *v += share);
                            }
                            PoolKind::Max => dx[r * nl + argmax[r * out + i]] += d,
                        }
                    }
                }
                vec![(*x, dx)]
            }
            Op::GlobalAvgPool { x, len } => {
                let dx = g.iter().flat_map(|&d| std::iter::repeat(d / *len as f64).take(*len)).collect();
                vec![(*x, dx)]
            }
            Op::Softmax { x, cols } => {
                let y = node.value.data();
                let mut dx = vec![0.0; y.len()];
                for ((yr, gr), dr) in y.chunks(*cols).zip(g.chunks(*cols)).zip(dx.chunks_mut(*cols)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for ((o, &yv), &gv) in dr.iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                vec![(*x, dx)]
            }
            Op::Select { x, col, cols } => {
                let mut dx = vec![0.0; g.len() * cols];
                for (r, &d) in g.iter().enumerate() {
                    dx[r * cols + col] = d;
                }
                vec![(*x, dx)]
            }
            Op::Reshape { x } => vec![(*x, g.to_vec())],
            Op::MaxLast { x, cols, argmax } => {
                let mut dx = vec![0.0; g.len() * cols];
                for (r, (&d, &j)) in g.iter().zip(argmax).enumerate() {
                    dx[r * cols + j] = d;
                }
                vec![(*x, dx)]
            }
            Op::CrossEntropy { p, targets, weights, cols } => {
                let pd = val(*p);
                let batch = targets.len().max(1) as f64;
                let mut dp = vec![0.0; pd.len()];
                for (b, &t) in targets.iter().enumerate() {
                    let q = pd[b * cols + t];
                    if (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&q) {
                        dp[b * cols + t] = -g[0] * weights[t] / (batch * q);
                    }
                }
                vec![(*p, dp)]
            }
            Op::BinaryCrossEntropy { p, targets, weights } => {
                let pd = val(*p);
                let batch = targets.len().max(1) as f64;
                let dp = pd
                    .iter()
                    .zip(targets)
                    .map(|(&q, &y)| {
                        if (PROB_FLOOR..=1.0 - PROB_FLOOR).contains(&q) {
                            -g[0] * (weights[1] * y / q - weights[0] * (1.0 - y) / (1.0 - q)) / batch
                        } else {
                            0.0
                        }
                    })
                    .collect();
                vec![(*p, dp)]
            }
            Op::Sum { x } => vec![(*x, vec![g[0]; self.nodes[x.0].value.len()])],
            Op::Mul { a, b } => {
                let (ad, bd) = (val(*a), val(*b));
                let mut out = Vec::new();
                if rg(*a) {
                    out.push((*a, g.iter().zip(bd).map(|(d, v)| d * v).collect()));
                }
                if rg(*b) {
                    out.push((*b, g.iter().zip(ad).map(|(d, v)| d * v).collect()));
                }
                out
            }
        }
    }
}
