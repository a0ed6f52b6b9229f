use std::sync::atomic::{AtomicU64, Ordering};

use super::kernels::{self, ConvGeom};
use super::{Gradients, Tensor};
use crate::error::{Error, Result};

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var {
    tape: u64,
    id: usize,
}

#[derive(Debug)]
enum Op {
    Leaf { param: Option<String> },
    Conv2d { input: usize, kernel: usize, bias: usize, geom: ConvGeom },
    AvgPool2 { input: usize },
    Affine { input: usize, weight: usize, bias: usize },
    Relu { input: usize },
    Sigmoid { input: usize },
    GlobalMeanPool { input: usize },
    Reshape { input: usize },
    Mul { a: usize, b: usize },
    Add { a: usize, b: usize },
    Scale { input: usize, factor: f64 },
    Sum { input: usize },
    SumSquares { input: usize },
    Bce { scores: usize, labels: Vec<f64> },
    PairwiseMargin { scores: usize, pos: Vec<usize>, neg: Vec<usize>, gamma: f64, power: f64 },
    WeightedSum { terms: Vec<(usize, f64)> },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Single-use Wengert list. Nodes are appended in execution order, so inputs
/// always precede their consumers; [`Tape::backward`] consumes the tape.
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
    grad_enabled: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

/// Lower clamp applied to probabilities before taking logs.
pub const PROB_CLAMP: f64 = 1e-12;

impl Tape {
    pub fn new() -> Self {
        Self {
            id: NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
            grad_enabled: true,
        }
    }

    /// A tape on which nothing requires grad; used for evaluation.
    pub fn no_grad() -> Self {
        Self {
            grad_enabled: false,
            ..Self::new()
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.id >= self.nodes.len() {
            return Err(Error::StaleTape {
                var_tape: v.tape,
                tape: self.id,
            });
        }
        Ok(v.id)
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[usize]) -> Var {
        let requires_grad = inputs.iter().any(|&i| self.nodes[i].requires_grad);
        let op = if requires_grad { op } else { Op::Leaf { param: None } };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var {
            tape: self.id,
            id: self.nodes.len() - 1,
        }
    }

    /// Records a constant (never receives gradient).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf { param: None },
            requires_grad: false,
        });
        Var {
            tape: self.id,
            id: self.nodes.len() - 1,
        }
    }

    /// Records a named leaf. Its gradient is reported under `name` by backward.
    pub fn param(&mut self, name: impl Into<String>, value: Tensor, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf {
                param: Some(name.into()),
            },
            requires_grad: requires_grad && self.grad_enabled,
        });
        Var {
            tape: self.id,
            id: self.nodes.len() - 1,
        }
    }

    pub fn value(&self, v: Var) -> Result<&Tensor> {
        let id = self.check(v)?;
        Ok(&self.nodes[id].value)
    }

    pub fn requires_grad(&self, v: Var) -> Result<bool> {
        let id = self.check(v)?;
        Ok(self.nodes[id].requires_grad)
    }

    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Var, stride: usize, padding: usize) -> Result<Var> {
        let (i, k, b) = (self.check(input)?, self.check(kernel)?, self.check(bias)?);
        let xs = self.nodes[i].value.dims4("conv2d")?;
        let ks = self.nodes[k].value.dims4("conv2d")?;
        if self.nodes[b].value.rank() != 1 {
            return Err(Error::shape("conv2d", "bias must be rank 1"));
        }
        let geom = ConvGeom::new(xs, ks, self.nodes[b].value.len(), stride, padding)?;
        let out = kernels::conv2d_forward(
            &geom,
            self.nodes[i].value.data(),
            self.nodes[k].value.data(),
            self.nodes[b].value.data(),
        );
        let value = Tensor::new(vec![geom.n, geom.f, geom.ho, geom.wo], out)?;
        Ok(self.push(value, Op::Conv2d { input: i, kernel: k, bias: b, geom }, &[i, k, b]))
    }

    pub fn avg_pool2(&mut self, input: Var) -> Result<Var> {
        let i = self.check(input)?;
        let [n, c, h, w] = self.nodes[i].value.dims4("avg_pool2")?;
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::OddDimension {
                op: "avg_pool2",
                height: h,
                width: w,
            });
        }
        let out = kernels::avg_pool2_forward([n, c, h, w], self.nodes[i].value.data());
        let value = Tensor::new(vec![n, c, h / 2, w / 2], out)?;
        Ok(self.push(value, Op::AvgPool2 { input: i }, &[i]))
    }

    pub fn affine(&mut self, input: Var, weight: Var, bias: Var) -> Result<Var> {
        let (i, w, b) = (self.check(input)?, self.check(weight)?, self.check(bias)?);
        let [n, d] = self.nodes[i].value.dims2("affine")?;
        let [wd, e] = self.nodes[w].value.dims2("affine")?;
        if wd != d {
            return Err(Error::shape(
                "affine",
                format!("input inner dimension {d} != weight rows {wd}"),
            ));
        }
        if self.nodes[b].value.shape() != [e] {
            return Err(Error::shape(
                "affine",
                format!("bias shape {:?} != [{e}]", self.nodes[b].value.shape()),
            ));
        }
        let out = kernels::affine_forward(
            n,
            d,
            e,
            self.nodes[i].value.data(),
            self.nodes[w].value.data(),
            self.nodes[b].value.data(),
        );
        let value = Tensor::new(vec![n, e], out)?;
        Ok(self.push(value, Op::Affine { input: i, weight: w, bias: b }, &[i, w, b]))
    }

    fn map(&mut self, input: Var, f: impl Fn(f64) -> f64, op: impl FnOnce(usize) -> Op) -> Result<Var> {
        let i = self.check(input)?;
        let src = &self.nodes[i].value;
        let value = Tensor::new(src.shape().to_vec(), src.data().iter().map(|&x| f(x)).collect())?;
        Ok(self.push(value, op(i), &[i]))
    }

    pub fn relu(&mut self, input: Var) -> Result<Var> {
        self.map(input, |x| x.max(0.0), |input| Op::Relu { input })
    }

    pub fn sigmoid(&mut self, input: Var) -> Result<Var> {
        self.map(input, kernels::sigmoid, |input| Op::Sigmoid { input })
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Result<Var> {
        self.map(input, |x| x * factor, |input| Op::Scale { input, factor })
    }

    pub fn global_mean_pool(&mut self, input: Var) -> Result<Var> {
        let i = self.check(input)?;
        let [n, c, h, w] = self.nodes[i].value.dims4("global_mean_pool")?;
        let plane = h * w;
        let out = self.nodes[i]
            .value
            .data()
            .chunks_exact(plane)
            .map(|p| p.iter().sum::<f64>() / plane as f64)
            .collect();
        let value = Tensor::new(vec![n, c], out)?;
        Ok(self.push(value, Op::GlobalMeanPool { input: i }, &[i]))
    }

    pub fn reshape(&mut self, input: Var, shape: Vec<usize>) -> Result<Var> {
        let i = self.check(input)?;
        let value = self.nodes[i].value.clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape { input: i }, &[i]))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<(usize, usize, Tensor)> {
        let (a, b) = (self.check(a)?, self.check(b)?);
        let (va, vb) = (&self.nodes[a].value, &self.nodes[b].value);
        if va.shape() != vb.shape() {
            return Err(Error::shape(name, format!("{:?} vs {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        Ok((a, b, Tensor::new(va.shape().to_vec(), data)?))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b, value) = self.binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push(value, Op::Mul { a, b }, &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (a, b, value) = self.binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push(value, Op::Add { a, b }, &[a, b]))
    }

    pub fn sum(&mut self, input: Var) -> Result<Var> {
        let i = self.check(input)?;
        let s = self.nodes[i].value.data().iter().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum { input: i }, &[i]))
    }

    pub fn sum_squares(&mut self, input: Var) -> Result<Var> {
        let i = self.check(input)?;
        let s = self.nodes[i].value.data().iter().map(|x| x * x).sum();
        Ok(self.push(Tensor::scalar(s), Op::SumSquares { input: i }, &[i]))
    }

    /// Mean binary cross-entropy of probabilities `scores` against targets in
    /// `[0, 1]`. Probabilities are clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn bce(&mut self, scores: Var, labels: &[f64]) -> Result<Var> {
        let i = self.check(scores)?;
        let s = self.nodes[i].value.data();
        if s.is_empty() || labels.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if s.len() != labels.len() {
            return Err(Error::shape(
                "bce",
                format!("{} scores vs {} labels", s.len(), labels.len()),
            ));
        }
        if let Some(&bad) = labels.iter().find(|y| !(0.0..=1.0).contains(*y)) {
            return Err(Error::InvalidLabel(bad));
        }
        let total: f64 = s
            .iter()
            .zip(labels)
            .map(|(&p, &y)| {
                let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let value = Tensor::scalar(total / s.len() as f64);
        Ok(self.push(
            value,
            Op::Bce {
                scores: i,
                labels: labels.to_vec(),
            },
            &[i],
        ))
    }

    /// Mean over the given (positive, negative) index pairs of
    /// `max(0, gamma - (s_pos - s_neg))^power`.
    pub fn pairwise_margin(&mut self, scores: Var, pos: &[usize], neg: &[usize], gamma: f64, power: f64) -> Result<Var> {
        let i = self.check(scores)?;
        let s = self.nodes[i].value.data();
        if pos.is_empty() || neg.is_empty() {
            return Err(Error::DegenerateBatch(
                "pairwise margin needs at least one positive and one negative".into(),
            ));
        }
        if let Some(&bad) = pos.iter().chain(neg).find(|&&k| k >= s.len()) {
            return Err(Error::shape("pairwise_margin", format!("index {bad} out of {}", s.len())));
        }
        let mut total = 0.0;
        for &a in pos {
            for &b in neg {
                total += crate::losses::wmw_pair(s[a], s[b], gamma, power);
            }
        }
        let value = Tensor::scalar(total / (pos.len() * neg.len()) as f64);
        Ok(self.push(
            value,
            Op::PairwiseMargin {
                scores: i,
                pos: pos.to_vec(),
                neg: neg.to_vec(),
                gamma,
                power,
            },
            &[i],
        ))
    }

    /// `sum_k w_k * x_k` over scalar vars.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut ids = Vec::with_capacity(terms.len());
        let mut total = 0.0;
        for &(v, w) in terms {
            let id = self.check(v)?;
            let t = &self.nodes[id].value;
            if !t.is_scalar() {
                return Err(Error::shape("weighted_sum", format!("term has shape {:?}", t.shape())));
            }
            total += w * t.item();
            ids.push((id, w));
        }
        let inputs: Vec<usize> = ids.iter().map(|&(i, _)| i).collect();
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum { terms: ids }, &inputs))
    }

    /// Reverse sweep from a scalar `loss`. Returns the gradient of every named
    /// leaf that requires grad and is reachable from `loss`; leaves registered
    /// more than once under the same name have their contributions summed.
    pub fn backward(self, loss: Var) -> Result<Gradients> {
        let root = self.check(loss)?;
        let root_value = &self.nodes[root].value;
        if !root_value.is_scalar() {
            return Err(Error::NonScalarLoss(root_value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Vec<f64>>> = (0..=root).map(|_| None).collect();
        grads[root] = Some(vec![1.0]);
        let mut out = Gradients::new();

        for id in (0..=root).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            // Slot for input `j`, allocated lazily only if that input needs grad.
            macro_rules! slot {
                ($j:expr) => {{
                    let j = $j;
                    if self.nodes[j].requires_grad {
                        Some(grads[j].get_or_insert_with(|| vec![0.0; self.nodes[j].value.len()]))
                    } else {
                        None
                    }
                }};
            }
            match &node.op {
                Op::Leaf { param } => {
                    if let Some(name) = param {
                        match out.get_mut(name) {
                            Some(acc) => {
                                for (a, v) in acc.data_mut().iter_mut().zip(&g) {
                                    *a += v;
                                }
                            }
                            None => {
                                out.insert(name.clone(), Tensor::new(node.value.shape().to_vec(), g)?);
                            }
                        }
                    }
                }
                Op::Conv2d { input, kernel, bias, geom } => {
                    let (x, k) = (self.nodes[*input].value.data(), self.nodes[*kernel].value.data());
                    // Take the buffers out to satisfy the borrow checker; they are restored below.
                    let mut gi = self.nodes[*input].requires_grad.then(|| {
                        grads[*input].take().unwrap_or_else(|| vec![0.0; x.len()])
                    });
                    let mut gk = self.nodes[*kernel].requires_grad.then(|| {
                        grads[*kernel].take().unwrap_or_else(|| vec![0.0; k.len()])
                    });
                    let mut gb = self.nodes[*bias].requires_grad.then(|| {
                        grads[*bias].take().unwrap_or_else(|| vec![0.0; geom.f])
                    });
                    kernels::conv2d_backward(
                        geom,
                        x,
                        k,
                        &g,
                        gi.as_deref_mut(),
                        gk.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    if gi.is_some() {
                        grads[*input] = gi;
                    }
                    if gk.is_some() {
                        grads[*kernel] = gk;
                    }
                    if gb.is_some() {
                        grads[*bias] = gb;
                    }
                }
                Op::AvgPool2 { input } => {
                    let dims = self.nodes[*input].value.dims4("avg_pool2")?;
                    if let Some(gi) = slot!(*input) {
                        kernels::avg_pool2_backward(dims, &g, gi);
                    }
                }
                Op::Affine { input, weight, bias } => {
                    let [n, d] = self.nodes[*input].value.dims2("affine")?;
                    let [_, e] = self.nodes[*weight].value.dims2("affine")?;
                    let x = self.nodes[*input].value.data();
                    let w = self.nodes[*weight].value.data();
                    let mut gx = self.nodes[*input].requires_grad.then(|| {
                        grads[*input].take().unwrap_or_else(|| vec![0.0; n * d])
                    });
                    let mut gw = self.nodes[*weight].requires_grad.then(|| {
                        grads[*weight].take().unwrap_or_else(|| vec![0.0; d * e])
                    });
                    let mut gb = self.nodes[*bias].requires_grad.then(|| {
                        grads[*bias].take().unwrap_or_else(|| vec![0.0; e])
                    });
                    kernels::affine_backward(
                        n,
                        d,
                        e,
                        x,
                        w,
                        &g,
                        gx.as_deref_mut(),
                        gw.as_deref_mut(),
                        gb.as_deref_mut(),
                    );
                    if gx.is_some() {
                        grads[*input] = gx;
                    }
                    if gw.is_some() {
                        grads[*weight] = gw;
                    }
                    if gb.is_some() {
                        grads[*bias] = gb;
                    }
                }
                Op::Relu { input } => {
                    let x = self.nodes[*input].value.data();
                    if let Some(gi) = slot!(*input) {
                        for ((acc, &xv), gv) in gi.iter_mut().zip(x).zip(&g) {
                            if xv > 0.0 {
                                *acc += gv;
                            }
                        }
                    }
                }
                Op::Sigmoid { input } => {
                    let y = node.value.data();
                    if let Some(gi) = slot!(*input) {
                        for ((acc, &yv), gv) in gi.iter_mut().zip(y).zip(&g) {
                            *acc += gv * yv * (1.0 - yv);
                        }
                    }
                }
                Op::GlobalMeanPool { input } => {
                    let [_, _, h, w] = self.nodes[*input].value.dims4("global_mean_pool")?;
                    let plane = h * w;
                    if let Some(gi) = slot!(*input) {
                        for (chunk, gv) in gi.chunks_exact_mut(plane).zip(&g) {
                            let share = gv / plane as f64;
                            chunk.iter_mut().for_each(|a| *a += share);
                        }
                    }
                }
                Op::Reshape { input } => {
                    if let Some(gi) = slot!(*input) {
                        gi.iter_mut().zip(&g).for_each(|(a, v)| *a += v);
                    }
                }
                Op::Mul { a, b } => {
                    let (va, vb) = (self.nodes[*a].value.data(), self.nodes[*b].value.data());
                    let da: Vec<f64> = g.iter().zip(vb).map(|(x, y)| x * y).collect();
                    let db: Vec<f64> = g.iter().zip(va).map(|(x, y)| x * y).collect();
                    if let Some(ga) = slot!(*a) {
                        ga.iter_mut().zip(&da).for_each(|(acc, v)| *acc += v);
                    }
                    if let Some(gb) = slot!(*b) {
                        gb.iter_mut().zip(&db).for_each(|(acc, v)| *acc += v);
                    }
                }
                Op::Add { a, b } => {
                    if let Some(ga) = slot!(*a) {
                        ga.iter_mut().zip(&g).for_each(|(acc, v)| *acc += v);
                    }
                    if let Some(gb) = slot!(*b) {
                        gb.iter_mut().zip(&g).for_each(|(acc, v)| *acc += v);
                    }
                }
                Op::Scale { input, factor } => {
                    if let Some(gi) = slot!(*input) {
                        gi.iter_mut().zip(&g).for_each(|(acc, v)| *acc += factor * v);
                    }
                }
                Op::Sum { input } => {
                    let g0 = g[0];
                    if let Some(gi) = slot!(*input) {
                        gi.iter_mut().for_each(|acc| *acc += g0);
                    }
                }
                Op::SumSquares { input } => {
                    let g0 = g[0];
                    let x = self.nodes[*input].value.data();
                    let d: Vec<f64> = x.iter().map(|v| 2.0 * v * g0).collect();
                    if let Some(gi) = slot!(*input) {
                        gi.iter_mut().zip(&d).for_each(|(acc, v)| *acc += v);
                    }
                }
                Op::Bce { scores, labels } => {
                    let g0 = g[0];
                    let s = self.nodes[*scores].value.data();
                    let n = s.len() as f64;
                    let d: Vec<f64> = s
                        .iter()
                        .zip(labels)
                        .map(|(&p, &y)| {
                            if p > PROB_CLAMP && p < 1.0 - PROB_CLAMP {
                                g0 * (-y / p + (1.0 - y) / (1.0 - p)) / n
                            } else {
                                0.0
                            }
                        })
                        .collect();
                    if let Some(gi) = slot!(*scores) {
                        gi.iter_mut().zip(&d).for_each(|(acc, v)| *acc += v);
                    }
                }
                Op::PairwiseMargin {
                    scores,
                    pos,
                    neg,
                    gamma,
                    power,
                } => {
                    let g0 = g[0];
                    let s = self.nodes[*scores].value.data();
                    let mut d = vec![0.0; s.len()];
                    let norm = g0 / (pos.len() * neg.len()) as f64;
                    for &a in pos {
                        for &b in neg {
                            let slope = crate::losses::wmw_pair_slope(s[a], s[b], *gamma, *power);
                            d[a] -= norm * slope;
                            d[b] += norm * slope;
                        }
                    }
                    if let Some(gi) = slot!(*scores) {
                        gi.iter_mut().zip(&d).for_each(|(acc, v)| *acc += v);
                    }
                }
                Op::WeightedSum { terms } => {
                    let g0 = g[0];
                    for &(j, w) in terms {
                        if let Some(gj) = slot!(j) {
                            gj[0] += w * g0;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}
