//! Raw convolution and pooling kernels over 5-D `[N, C, T, H, W]` buffers.
//!
//! Convolution lowers each sample to an im2col matrix and multiplies it with
//! the flattened kernel; the backward pass reuses the same lowering.

use crate::error::{Error, Result};

fn out_extent(input: usize, kernel: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = input + 2 * pad;
    if stride == 0 || kernel == 0 || kernel > padded {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

/// Resolved shapes of one 3-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_ch: usize,
    pub input: [usize; 3],
    pub out_ch: usize,
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl ConvGeometry {
    pub fn new(
        x_shape: &[usize],
        w_shape: &[usize],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        if x_shape.len() != 5 || w_shape.len() != 5 {
            return Err(Error::shape(
                "conv3d",
                format!("expected 5-D input and kernel, got {x_shape:?} and {w_shape:?}"),
            ));
        }
        if x_shape[1] != w_shape[1] {
            return Err(Error::shape(
                "conv3d",
                format!(
                    "input has {} channels but kernel expects {}",
                    x_shape[1], w_shape[1]
                ),
            ));
        }
        let input = [x_shape[2], x_shape[3], x_shape[4]];
        let kernel = [w_shape[2], w_shape[3], w_shape[4]];
        let mut output = [0; 3];
        for d in 0..3 {
            output[d] = out_extent(input[d], kernel[d], stride[d], pad[d]).ok_or_else(|| {
                Error::shape(
                    "conv3d",
                    format!(
                        "axis {d}: kernel {} stride {} does not fit input {} with padding {}",
                        kernel[d], stride[d], input[d], pad[d]
                    ),
                )
            })?;
        }
        Ok(ConvGeometry {
            batch: x_shape[0],
            in_ch: x_shape[1],
            input,
            out_ch: w_shape[0],
            kernel,
            stride,
            pad,
            output,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![
            self.batch,
            self.out_ch,
            self.output[0],
            self.output[1],
            self.output[2],
        ]
    }

    fn col_rows(&self) -> usize {
        self.in_ch * self.kernel.iter().product::<usize>()
    }

    fn col_cols(&self) -> usize {
        self.output.iter().product()
    }

    fn in_volume(&self) -> usize {
        self.input.iter().product()
    }

    /// Output rows `(t, h)` processed per im2col block, sized so one block
    /// of the lowered matrix stays around 512 KiB.
    fn block_rows(&self) -> usize {
        const BLOCK_ELEMS: usize = 1 << 16;
        let per_row = self.col_rows() * self.output[2];
        (BLOCK_ELEMS / per_row.max(1)).clamp(1, self.output[0] * self.output[1])
    }

    fn blocks(&self) -> impl Iterator<Item = (usize, usize)> {
        let total = self.output[0] * self.output[1];
        let step = self.block_rows();
        (0..total).step_by(step).map(move |r0| (r0, (r0 + step).min(total)))
    }

    /// Fills `col` (rows = in_ch·kT·kH·kW, cols = output positions of the
    /// output rows `r0..r1`) for one sample.
    fn im2col(&self, x: &[f64], r0: usize, r1: usize, col: &mut [f64]) {
        let [it, ih, iw] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [_, oh, ow] = self.output;
        let p = (r1 - r0) * ow;
        let mut row = 0;
        for c in 0..self.in_ch {
            let xc = &x[c * it * ih * iw..(c + 1) * it * ih * iw];
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let dst = &mut col[row * p..(row + 1) * p];
                        for (j, r) in (r0..r1).enumerate() {
                            let out = &mut dst[j * ow..(j + 1) * ow];
                            let st = ((r / oh) * self.stride[0] + dt) as isize - self.pad[0] as isize;
                            let sh = ((r % oh) * self.stride[1] + dh) as isize - self.pad[1] as isize;
                            if st < 0 || st >= it as isize || sh < 0 || sh >= ih as isize {
                                out.fill(0.0);
                                continue;
                            }
                            let base = (st as usize * ih + sh as usize) * iw;
                            for (zw, v) in out.iter_mut().enumerate() {
                                let sw = (zw * self.stride[2] + dw) as isize - self.pad[2] as isize;
                                *v = if sw < 0 || sw >= iw as isize { 0.0 } else { xc[base + sw as usize] };
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    /// Scatter-adds an im2col-shaped gradient block back into input layout.
    fn col2im(&self, col: &[f64], r0: usize, r1: usize, dx: &mut [f64]) {
        let [it, ih, iw] = self.input;
        let [kt, kh, kw] = self.kernel;
        let [_, oh, ow] = self.output;
        let p = (r1 - r0) * ow;
        let mut row = 0;
        for c in 0..self.in_ch {
            let dxc = &mut dx[c * it * ih * iw..(c + 1) * it * ih * iw];
            for dt in 0..kt {
                for dh in 0..kh {
                    for dw in 0..kw {
                        let src = &col[row * p..(row + 1) * p];
                        for (j, r) in (r0..r1).enumerate() {
                            let st = ((r / oh) * self.stride[0] + dt) as isize - self.pad[0] as isize;
                            let sh = ((r % oh) * self.stride[1] + dh) as isize - self.pad[1] as isize;
                            if st < 0 || st >= it as isize || sh < 0 || sh >= ih as isize {
                                continue;
                            }
                            let base = (st as usize * ih + sh as usize) * iw;
                            for (zw, &g) in src[j * ow..(j + 1) * ow].iter().enumerate() {
                                let sw = (zw * self.stride[2] + dw) as isize - self.pad[2] as isize;
                                if sw >= 0 && sw < iw as isize {
                                    dxc[base + sw as usize] += g;
                                }
                            }
                        }
                        row += 1;
                    }
                }
            }
        }
    }

    pub(crate) fn forward(&self, x: &[f64], w: &[f64], b: Option<&[f64]>) -> Vec<f64> {
        let rows = self.col_rows();
        let p = self.col_cols();
        let ow = self.output[2];
        let k = self.out_ch;
        let in_len = self.in_ch * self.in_volume();
        let mut out = vec![0.0; self.batch * k * p];
        let mut col = vec![0.0; rows * self.block_rows() * ow];
        for n in 0..self.batch {
            let xs = &x[n * in_len..(n + 1) * in_len];
            let dst = &mut out[n * k * p..(n + 1) * k * p];
            if let Some(b) = b {
                for (ch, chunk) in dst.chunks_mut(p).enumerate() {
                    chunk.fill(b[ch]);
                }
            }
            for (r0, r1) in self.blocks() {
                let cols = (r1 - r0) * ow;
                self.im2col(xs, r0, r1, &mut col[..rows * cols]);
                // out[:, block] += W[K, rows] · col[rows, cols]
                strided_gemm(k, rows, cols, (w, rows, 1), (&col[..rows * cols], cols, 1), (&mut dst[r0 * ow..], p));
            }
        }
        out
    }

    /// Accumulates gradients for input, kernel and bias (each optional).
    pub(crate) fn backward(
        &self,
        x: &[f64],
        w: &[f64],
        dout: &[f64],
        mut dx: Option<&mut [f64]>,
        mut dw: Option<&mut [f64]>,
        db: Option<&mut [f64]>,
    ) {
        let rows = self.col_rows();
        let p = self.col_cols();
        let ow = self.output[2];
        let k = self.out_ch;
        let in_len = self.in_ch * self.in_volume();
        if let Some(db) = db {
            for n in 0..self.batch {
                for ch in 0..k {
                    let s: f64 = dout[(n * k + ch) * p..(n * k + ch + 1) * p].iter().sum();
                    db[ch] += s;
                }
            }
        }
        if dx.is_none() && dw.is_none() {
            return;
        }
        let mut col = vec![0.0; rows * self.block_rows() * ow];
        for n in 0..self.batch {
            let g = &dout[n * k * p..(n + 1) * k * p];
            for (r0, r1) in self.blocks() {
                let cols = (r1 - r0) * ow;
                let col = &mut col[..rows * cols];
                let gb = &g[r0 * ow..];
                if let Some(dw) = dw.as_deref_mut() {
                    self.im2col(&x[n * in_len..(n + 1) * in_len], r0, r1, col);
                    // dW[K, rows] += dOut[K, block] · colᵀ[cols, rows]
                    strided_gemm(k, cols, rows, (gb, p, 1), (col, 1, cols), (dw, rows));
                }
                if let Some(dx) = dx.as_deref_mut() {
                    col.fill(0.0);
                    // dcol[rows, cols] = Wᵀ[rows, K] · dOut[K, block]
                    strided_gemm(rows, k, cols, (w, 1, rows), (gb, p, 1), (col, cols));
                    self.col2im(col, r0, r1, &mut dx[n * in_len..(n + 1) * in_len]);
                }
            }
        }
    }
}

/// `c += a · b` for an `m×k` by `k×n` product where every operand is given
/// as `(slice, row stride, column stride)` and `c` as `(slice, row stride)`.
fn strided_gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], usize, usize),
    b: (&[f64], usize, usize),
    c: (&mut [f64], usize),
) {
    let last = |rows: usize, cols: usize, rs: usize, cs: usize| (rows - 1) * rs + (cols - 1) * cs;
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(last(m, k, a.1, a.2) < a.0.len(), "gemm: a out of bounds");
    assert!(last(k, n, b.1, b.2) < b.0.len(), "gemm: b out of bounds");
    assert!(last(m, n, c.1, 1) < c.0.len(), "gemm: c out of bounds");
    // SAFETY: the asserts above bound every addressed element of a, b and c.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            1.0,
            c.0.as_mut_ptr(),
            c.1 as isize,
            1,
        );
    }
}

/// `c[m×n] += a[m×k] · b[k×n]`, with optional transposed storage of `a`/`b`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_t { (1, m) } else { (k, 1) };
    let (rsb, csb) = if b_t { (1, k) } else { (n, 1) };
    strided_gemm(m, k, n, (a, rsa, csa), (b, rsb, csb), (c, n));
}

/// Resolved shapes of one 3-D max-pool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PoolGeometry {
    pub batch: usize,
    pub channels: usize,
    pub input: [usize; 3],
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub pad: [usize; 3],
    pub output: [usize; 3],
}

impl PoolGeometry {
    pub fn new(
        x_shape: &[usize],
        kernel: [usize; 3],
        stride: [usize; 3],
        pad: [usize; 3],
    ) -> Result<Self> {
        if x_shape.len() != 5 {
            return Err(Error::shape(
                "maxpool3d",
                format!("expected 5-D input, got {x_shape:?}"),
            ));
        }
        let input = [x_shape[2], x_shape[3], x_shape[4]];
        let mut output = [0; 3];
        for d in 0..3 {
            if pad[d] >= kernel[d] {
                return Err(Error::shape(
                    "maxpool3d",
                    format!("axis {d}: padding {} must be below kernel {}", pad[d], kernel[d]),
                ));
            }
            output[d] = out_extent(input[d], kernel[d], stride[d], pad[d]).ok_or_else(|| {
                Error::shape(
                    "maxpool3d",
                    format!(
                        "axis {d}: kernel {} stride {} does not fit input {} with padding {}",
                        kernel[d], stride[d], input[d], pad[d]
                    ),
                )
            })?;
        }
        Ok(PoolGeometry {
            batch: x_shape[0],
            channels: x_shape[1],
            input,
            kernel,
            stride,
            pad,
            output,
        })
    }

    pub fn output_shape(&self) -> Vec<usize> {
        vec![
            self.batch,
            self.channels,
            self.output[0],
            self.output[1],
            self.output[2],
        ]
    }

    /// Returns pooled values and, per output, the flat input index of the
    /// first maximal element in scan order.
    pub(crate) fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let [it, ih, iw] = self.input;
        let [ot, oh, ow] = self.output;
        let vol = it * ih * iw;
        let planes = self.batch * self.channels;
        let out_len = planes * ot * oh * ow;
        let mut out = Vec::with_capacity(out_len);
        let mut arg = Vec::with_capacity(out_len);
        for plane in 0..planes {
            let base = plane * vol;
            for zt in 0..ot {
                for zh in 0..oh {
                    for zw in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = usize::MAX;
                        for dt in 0..self.kernel[0] {
                            let st = (zt * self.stride[0] + dt) as isize - self.pad[0] as isize;
                            if st < 0 || st >= it as isize {
                                continue;
                            }
                            for dh in 0..self.kernel[1] {
                                let sh = (zh * self.stride[1] + dh) as isize - self.pad[1] as isize;
                                if sh < 0 || sh >= ih as isize {
                                    continue;
                                }
                                for dw in 0..self.kernel[2] {
                                    let sw =
                                        (zw * self.stride[2] + dw) as isize - self.pad[2] as isize;
                                    if sw < 0 || sw >= iw as isize {
                                        continue;
                                    }
                                    let idx = base
                                        + (st as usize * ih + sh as usize) * iw
                                        + sw as usize;
                                    if best_idx == usize::MAX || x[idx] > best {
                                        best = x[idx];
                                        best_idx = idx;
                                    }
                                }
                            }
                        }
                        out.push(best);
                        arg.push(best_idx);
                    }
                }
            }
        }
        (out, arg)
    }
}
