//! Differentiable operations recorded on the [`Tape`], each paired with its
//! backward rule.

use super::conv::{gemm, ConvGeometry, PoolGeometry};
use super::tape::{Tape, Var};
use super::Tensor;
use crate::error::{Error, Result};

pub(super) enum Op {
    Leaf,
    Conv {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    MaxPool {
        x: Var,
        argmax: Vec<usize>,
    },
    GlobalAvg {
        x: Var,
    },
    SpatialMean {
        x: Var,
    },
    Linear {
        x: Var,
        w: Var,
        b: Option<Var>,
    },
    Relu {
        x: Var,
    },
    Sigmoid {
        x: Var,
    },
    Tanh {
        x: Var,
    },
    Softmax {
        x: Var,
        axis: usize,
    },
    Add {
        a: Var,
        b: Var,
    },
    Mul {
        a: Var,
        b: Var,
    },
    Scale {
        x: Var,
        factor: f64,
    },
    ScaleChannels {
        x: Var,
        gate: Var,
    },
    Reshape {
        x: Var,
    },
    SwapLast2 {
        x: Var,
    },
    WeightedSumLast {
        x: Var,
        weights: Var,
    },
    SelectLast {
        x: Var,
        index: usize,
    },
    Sum {
        x: Var,
    },
    Mae {
        pred: Var,
        target: Tensor,
    },
}

impl Op {
    pub(super) fn inputs(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::Conv { x, w, b, .. } | Op::Linear { x, w, b } => {
                let mut v = vec![*x, *w];
                v.extend(b);
                v
            }
            Op::Add { a, b } | Op::Mul { a, b } => vec![*a, *b],
            Op::ScaleChannels { x, gate: other } | Op::WeightedSumLast { x, weights: other } => {
                vec![*x, *other]
            }
            Op::MaxPool { x, .. }
            | Op::GlobalAvg { x }
            | Op::SpatialMean { x }
            | Op::Relu { x }
            | Op::Sigmoid { x }
            | Op::Tanh { x }
            | Op::Softmax { x, .. }
            | Op::Scale { x, .. }
            | Op::Reshape { x }
            | Op::SwapLast2 { x }
            | Op::SelectLast { x, .. }
            | Op::Sum { x } => vec![*x],
            Op::Mae { pred, .. } => vec![*pred],
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            op,
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

fn unary(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    x.map(f)
}

impl Tape {
    /// 3-D convolution over `[N, C, T, H, W]` with kernel `[K, C, kT, kH, kW]`.
    pub fn conv3d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Var> {
        let geom = ConvGeometry::new(self.shape(x), self.shape(w), stride, pad)?;
        if let Some(b) = b {
            if self.shape(b) != [geom.out_ch] {
                return Err(Error::shape(
                    "conv3d",
                    format!("bias {:?} for {} output channels", self.shape(b), geom.out_ch),
                ));
            }
        }
        let out = geom.forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
        );
        let value = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(value, Op::Conv { x, w, b, geom }))
    }

    /// 2-D convolution over `[N, C, H, W]`, lowered to a depth-1 [`Tape::conv3d`].
    pub fn conv2d(
        &mut self,
        x: Var,
        w: Var,
        b: Option<Var>,
        stride: [usize; 2],
        pad: [usize; 2],
    ) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 4 || ws.len() != 4 {
            return Err(Error::shape(
                "conv2d",
                format!("expected 4-D input and kernel, got {xs:?} and {ws:?}"),
            ));
        }
        let x5 = self.reshape(x, &[xs[0], xs[1], 1, xs[2], xs[3]])?;
        let w5 = self.reshape(w, &[ws[0], ws[1], 1, ws[2], ws[3]])?;
        let y = self.conv3d(x5, w5, b, [1, stride[0], stride[1]], [0, pad[0], pad[1]])?;
        let ys = self.shape(y).to_vec();
        self.reshape(y, &[ys[0], ys[1], ys[3], ys[4]])
    }

    pub fn maxpool3d(
        &mut self,
        x: Var,
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Var> {
        let geom = PoolGeometry::new(self.shape(x), kernel, stride, pad)?;
        let (out, argmax) = geom.forward(self.value(x).data());
        let value = Tensor::new(geom.output_shape(), out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }))
    }

    pub fn maxpool2d(&mut self, x: Var, kernel: [usize; 2], stride: [usize; 2]) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 4 {
            return Err(Error::shape("maxpool2d", format!("expected 4-D input, got {xs:?}")));
        }
        let x5 = self.reshape(x, &[xs[0], xs[1], 1, xs[2], xs[3]])?;
        let y = self.maxpool3d(x5, [1, kernel[0], kernel[1]], [1, stride[0], stride[1]], [0; 3])?;
        let ys = self.shape(y).to_vec();
        self.reshape(y, &[ys[0], ys[1], ys[3], ys[4]])
    }

    /// Mean over every axis after the channel axis; trailing axes are kept
    /// with extent 1, so `[N, C, T, H, W] -> [N, C, 1, 1, 1]`.
    pub fn adaptive_avg_pool(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() < 3 {
            return Err(Error::shape("adaptive_avg_pool", format!("need ≥3 dims, got {xs:?}")));
        }
        let inner: usize = xs[2..].iter().product();
        let data: Vec<f64> = self
            .value(x)
            .data()
            .chunks(inner)
            .map(|c| c.iter().sum::<f64>() / inner as f64)
            .collect();
        let mut shape = vec![xs[0], xs[1]];
        shape.extend(std::iter::repeat_n(1, xs.len() - 2));
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, Op::GlobalAvg { x }))
    }

    /// `[N, C, T, H, W] -> [N, C, T]`, averaging each frame spatially.
    pub fn spatial_mean(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 5 {
            return Err(Error::shape("spatial_mean", format!("expected 5-D, got {xs:?}")));
        }
        let inner = xs[3] * xs[4];
        let data: Vec<f64> = self
            .value(x)
            .data()
            .chunks(inner)
            .map(|c| c.iter().sum::<f64>() / inner as f64)
            .collect();
        let value = Tensor::new(vec![xs[0], xs[1], xs[2]], data)?;
        Ok(self.push(value, Op::SpatialMean { x }))
    }

    /// Affine map `x[N, F] · w[F, G] + b[G]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(w).to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[0] {
            return Err(Error::shape(
                "linear",
                format!("cannot multiply {xs:?} by {ws:?}"),
            ));
        }
        let (n, f, g) = (xs[0], xs[1], ws[1]);
        let mut out = vec![0.0; n * g];
        if let Some(b) = b {
            let bv = self.value(b);
            if bv.shape() != [g] {
                return Err(Error::shape(
                    "linear",
                    format!("bias {:?} for {g} outputs", bv.shape()),
                ));
            }
            for row in out.chunks_mut(g) {
                row.copy_from_slice(bv.data());
            }
        }
        gemm(n, f, g, self.value(x).data(), false, self.value(w).data(), false, &mut out);
        let value = Tensor::new(vec![n, g], out)?;
        Ok(self.push(value, Op::Linear { x, w, b }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let value = unary(self.value(x), |v| v.max(0.0));
        self.push(value, Op::Relu { x })
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let value = unary(self.value(x), sigmoid);
        self.push(value, Op::Sigmoid { x })
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let value = unary(self.value(x), f64::tanh);
        self.push(value, Op::Tanh { x })
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if axis >= xs.len() {
            return Err(Error::shape(
                "softmax",
                format!("axis {axis} out of range for {xs:?}"),
            ));
        }
        let (outer, len, inner) = axis_split(&xs, axis);
        let src = self.value(x).data();
        let mut out = vec![0.0; src.len()];
        for o in 0..outer {
            for i in 0..inner {
                let at = |k: usize| (o * len + k) * inner + i;
                let max = (0..len).map(|k| src[at(k)]).fold(f64::NEG_INFINITY, f64::max);
                let mut total = 0.0;
                for k in 0..len {
                    let e = (src[at(k)] - max).exp();
                    out[at(k)] = e;
                    total += e;
                }
                for k in 0..len {
                    out[at(k)] /= total;
                }
            }
        }
        let value = Tensor::new(xs, out)?;
        Ok(self.push(value, Op::Softmax { x, axis }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("add", self.value(a), self.value(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(p, q)| p + q)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        same_shape("mul", self.value(a), self.value(b))?;
        let data = self
            .value(a)
            .data()
            .iter()
            .zip(self.value(b).data())
            .map(|(p, q)| p * q)
            .collect();
        let value = Tensor::new(self.shape(a).to_vec(), data)?;
        Ok(self.push(value, Op::Mul { a, b }))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let value = unary(self.value(x), |v| v * factor);
        self.push(value, Op::Scale { x, factor })
    }

    /// Multiplies each `[n, c, ..]` slab of `x` by `gate[n, c]`.
    pub fn scale_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let gs = self.shape(gate).to_vec();
        if xs.len() < 2 || gs != xs[..2] {
            return Err(Error::shape(
                "scale_channels",
                format!("gate {gs:?} does not match leading dims of {xs:?}"),
            ));
        }
        let inner: usize = xs[2..].iter().product();
        let g = self.value(gate).data();
        let data = self
            .value(x)
            .data()
            .chunks(inner)
            .zip(g)
            .flat_map(|(c, &s)| c.iter().map(move |v| v * s))
            .collect();
        let value = Tensor::new(xs, data)?;
        Ok(self.push(value, Op::ScaleChannels { x, gate }))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).clone().reshape(shape.to_vec())?;
        Ok(self.push(value, Op::Reshape { x }))
    }

    /// `[N, A, B] -> [N, B, A]`.
    pub fn swap_last2(&mut self, x: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 {
            return Err(Error::shape("swap_last2", format!("expected 3-D, got {xs:?}")));
        }
        let value = swap_last2(self.value(x), &xs);
        Ok(self.push(value, Op::SwapLast2 { x }))
    }

    /// `out[n, c] = Σ_t weights[n, t] · x[n, c, t]`.
    pub fn weighted_sum_last(&mut self, x: Var, weights: Var) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        let ws = self.shape(weights).to_vec();
        if xs.len() != 3 || ws != [xs[0], xs[2]] {
            return Err(Error::shape(
                "weighted_sum_last",
                format!("weights {ws:?} do not match {xs:?}"),
            ));
        }
        let (n, c, t) = (xs[0], xs[1], xs[2]);
        let xv = self.value(x).data();
        let wv = self.value(weights).data();
        let mut out = vec![0.0; n * c];
        for i in 0..n {
            for j in 0..c {
                out[i * c + j] = (0..t).map(|k| wv[i * t + k] * xv[(i * c + j) * t + k]).sum();
            }
        }
        let value = Tensor::new(vec![n, c], out)?;
        Ok(self.push(value, Op::WeightedSumLast { x, weights }))
    }

    /// `[N, C, T] -> [N, C]` at a fixed position of the last axis.
    pub fn select_last(&mut self, x: Var, index: usize) -> Result<Var> {
        let xs = self.shape(x).to_vec();
        if xs.len() != 3 || index >= xs[2] {
            return Err(Error::shape(
                "select_last",
                format!("index {index} invalid for {xs:?}"),
            ));
        }
        let t = xs[2];
        let data = self.value(x).data().chunks(t).map(|c| c[index]).collect();
        let value = Tensor::new(vec![xs[0], xs[1]], data)?;
        Ok(self.push(value, Op::SelectLast { x, index }))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.push(value, Op::Sum { x })
    }

    /// Mean absolute error against a constant target of the same shape.
    pub fn mae(&mut self, pred: Var, target: Tensor) -> Result<Var> {
        same_shape("mae", self.value(pred), &target)?;
        let p = self.value(pred).data();
        let loss = p
            .iter()
            .zip(target.data())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / p.len() as f64;
        Ok(self.push(Tensor::scalar(loss), Op::Mae { pred, target }))
    }

    pub(super) fn backward_node(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let out = &self.nodes[idx].value;
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Conv { x, w, b, geom } => {
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                if let Some(b) = b {
                    self.accumulate_with(grads, *b, |db| {
                        geom.backward(xv, wv, g.data(), None, None, Some(db))
                    });
                }
                self.accumulate_with(grads, *w, |dw| {
                    geom.backward(xv, wv, g.data(), None, Some(dw), None)
                });
                self.accumulate_with(grads, *x, |dx| {
                    geom.backward(xv, wv, g.data(), Some(dx), None, None)
                });
            }
            Op::MaxPool { x, argmax } => {
                self.accumulate_with(grads, *x, |dx| {
                    for (&src, &d) in argmax.iter().zip(g.data()) {
                        dx[src] += d;
                    }
                });
            }
            Op::GlobalAvg { x } | Op::SpatialMean { x } => {
                let inner = self.value(*x).len() / out.len();
                self.accumulate_with(grads, *x, |dx| {
                    for (chunk, &d) in dx.chunks_mut(inner).zip(g.data()) {
                        let share = d / inner as f64;
                        chunk.iter_mut().for_each(|v| *v += share);
                    }
                });
            }
            Op::Linear { x, w, b } => {
                let xs = self.shape(*x);
                let (n, f) = (xs[0], xs[1]);
                let gcols = self.shape(*w)[1];
                if let Some(b) = b {
                    self.accumulate_with(grads, *b, |db| {
                        for row in g.data().chunks(gcols) {
                            for (a, v) in db.iter_mut().zip(row) {
                                *a += v;
                            }
                        }
                    });
                }
                let xv = self.value(*x).data();
                let wv = self.value(*w).data();
                self.accumulate_with(grads, *w, |dw| gemm(f, n, gcols, xv, true, g.data(), false, dw));
                self.accumulate_with(grads, *x, |dx| gemm(n, gcols, f, g.data(), false, wv, true, dx));
            }
            Op::Relu { x } => self.accumulate(grads, *x, |xv| {
                zip_map(xv, g, |v, d| if v > 0.0 { d } else { 0.0 })
            }),
            Op::Sigmoid { x } => self.accumulate(grads, *x, |_| zip_map(out, g, |y, d| d * y * (1.0 - y))),
            Op::Tanh { x } => self.accumulate(grads, *x, |_| zip_map(out, g, |y, d| d * (1.0 - y * y))),
            Op::Softmax { x, axis } => self.accumulate(grads, *x, |_| {
                let (outer, len, inner) = axis_split(out.shape(), *axis);
                let y = out.data();
                let gd = g.data();
                let mut dx = vec![0.0; y.len()];
                for o in 0..outer {
                    for i in 0..inner {
                        let at = |k: usize| (o * len + k) * inner + i;
                        let dot: f64 = (0..len).map(|k| gd[at(k)] * y[at(k)]).sum();
                        for k in 0..len {
                            dx[at(k)] = y[at(k)] * (gd[at(k)] - dot);
                        }
                    }
                }
                Tensor::new(out.shape().to_vec(), dx).expect("same shape")
            }),
            Op::Add { a, b } => {
                self.accumulate(grads, *a, |_| g.clone());
                self.accumulate(grads, *b, |_| g.clone());
            }
            Op::Mul { a, b } => {
                let av = self.value(*a);
                let bv = self.value(*b);
                self.accumulate(grads, *a, |_| zip_map(bv, g, |v, d| v * d));
                self.accumulate(grads, *b, |_| zip_map(av, g, |v, d| v * d));
            }
            Op::Scale { x, factor } => self.accumulate(grads, *x, |_| g.map(|d| d * factor)),
            Op::ScaleChannels { x, gate } => {
                let xv = self.value(*x);
                let gv = self.value(*gate);
                let inner = xv.len() / gv.len();
                self.accumulate_with(grads, *x, |dx| {
                    for ((dchunk, gchunk), &s) in
                        dx.chunks_mut(inner).zip(g.data().chunks(inner)).zip(gv.data())
                    {
                        for (a, d) in dchunk.iter_mut().zip(gchunk) {
                            *a += d * s;
                        }
                    }
                });
                self.accumulate_with(grads, *gate, |dg| {
                    for ((a, gchunk), xchunk) in dg
                        .iter_mut()
                        .zip(g.data().chunks(inner))
                        .zip(xv.data().chunks(inner))
                    {
                        *a += gchunk.iter().zip(xchunk).map(|(d, v)| d * v).sum::<f64>();
                    }
                });
            }
            Op::Reshape { x } => self.accumulate(grads, *x, |xv| {
                g.clone().reshape(xv.shape().to_vec()).expect("same element count")
            }),
            Op::SwapLast2 { x } => self.accumulate(grads, *x, |_| swap_last2(g, out.shape())),
            Op::WeightedSumLast { x, weights } => {
                let xs = self.shape(*x);
                let (n, c, t) = (xs[0], xs[1], xs[2]);
                let xv = self.value(*x).data();
                let wv = self.value(*weights).data();
                let gd = g.data();
                self.accumulate_with(grads, *x, |dx| {
                    for i in 0..n {
                        for j in 0..c {
                            for k in 0..t {
                                dx[(i * c + j) * t + k] += gd[i * c + j] * wv[i * t + k];
                            }
                        }
                    }
                });
                self.accumulate_with(grads, *weights, |dw| {
                    for i in 0..n {
                        for k in 0..t {
                            dw[i * t + k] +=
                                (0..c).map(|j| gd[i * c + j] * xv[(i * c + j) * t + k]).sum::<f64>();
                        }
                    }
                });
            }
            Op::SelectLast { x, index } => {
                let t = self.shape(*x)[2];
                self.accumulate_with(grads, *x, |dx| {
                    for (chunk, &d) in dx.chunks_mut(t).zip(g.data()) {
                        chunk[*index] += d;
                    }
                });
            }
            Op::Sum { x } => {
                let d = g.item();
                self.accumulate(grads, *x, |xv| Tensor::full(xv.shape().to_vec(), d));
            }
            Op::Mae { pred, target } => {
                let d = g.item();
                self.accumulate(grads, *pred, |pv| {
                    let n = pv.len() as f64;
                    zip_map(pv, target, |p, t| {
                        // subgradient 0 at a tie
                        if p > t {
                            d / n
                        } else if p < t {
                            -d / n
                        } else {
                            0.0
                        }
                    })
                });
            }
        }
    }
}

pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::new(a.shape().to_vec(), data).expect("shapes checked at record time")
}

fn swap_last2(x: &Tensor, shape: &[usize]) -> Tensor {
    let (n, a, b) = (shape[0], shape[1], shape[2]);
    let src = x.data();
    let mut data = vec![0.0; src.len()];
    for i in 0..n {
        for j in 0..a {
            for k in 0..b {
                data[(i * b + k) * a + j] = src[(i * a + j) * b + k];
            }
        }
    }
    Tensor::new(vec![n, b, a], data).expect("element count preserved")
}
