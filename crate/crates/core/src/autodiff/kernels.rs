//! Forward and backward kernels over flat row-major buffers.
//!
//! Convolution is lowered to im2col plus a single GEMM per batch. Backward
//! kernels accumulate into the provided gradient buffers.

use crate::error::{Error, Result};

/// `c = a * b + beta * c` for row-major `c` of shape `m x n`; `a` and `b` are
/// addressed through explicit strides so transposes are free.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    rsa: usize,
    csa: usize,
    b: &[f64],
    rsb: usize,
    csb: usize,
    beta: f64,
    c: &mut [f64],
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(m.saturating_sub(1) * rsa + k.saturating_sub(1) * csa < a.len().max(1));
    assert!(k.saturating_sub(1) * rsb + n.saturating_sub(1) * csb < b.len().max(1));
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above bound every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub f: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub pad: usize,
    pub ho: usize,
    pub wo: usize,
}

impl ConvGeom {
    pub fn new(
        input: [usize; 4],
        kernel: [usize; 4],
        bias_len: usize,
        stride: usize,
        pad: usize,
    ) -> Result<Self> {
        let [n, c, h, w] = input;
        let [f, kc, kh, kw] = kernel;
        if stride == 0 {
            return Err(Error::InvalidArgument("conv2d stride must be positive".into()));
        }
        if kc != c {
            return Err(Error::shape(
                "conv2d",
                format!("input channels {c} != kernel channels {kc} (dim 1)"),
            ));
        }
        if bias_len != f {
            return Err(Error::shape(
                "conv2d",
                format!("bias length {bias_len} != output channels {f}"),
            ));
        }
        if kh > h + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                format!("kernel height {kh} exceeds padded input height {}", h + 2 * pad),
            ));
        }
        if kw > w + 2 * pad {
            return Err(Error::shape(
                "conv2d",
                format!("kernel width {kw} exceeds padded input width {}", w + 2 * pad),
            ));
        }
        let ho = (h + 2 * pad - kh) / stride + 1;
        let wo = (w + 2 * pad - kw) / stride + 1;
        Ok(Self {
            n,
            c,
            h,
            w,
            f,
            kh,
            kw,
            stride,
            pad,
            ho,
            wo,
        })
    }

    fn col_rows(&self) -> usize {
        self.c * self.kh * self.kw
    }

    fn col_cols(&self) -> usize {
        self.n * self.ho * self.wo
    }

    /// Maps an output coordinate and kernel tap to an input coordinate, if inside.
    #[inline]
    fn source(&self, o: usize, k: usize, limit: usize) -> Option<usize> {
        let pos = (o * self.stride + k) as isize - self.pad as isize;
        (pos >= 0 && (pos as usize) < limit).then_some(pos as usize)
    }

    fn im2col(&self, input: &[f64]) -> Vec<f64> {
        let cols = self.col_cols();
        let plane = self.ho * self.wo;
        let mut col = vec![0.0; self.col_rows() * cols];
        for ch in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ch * self.kh + ki) * self.kw + kj;
                    let dst = &mut col[row * cols..(row + 1) * cols];
                    for b in 0..self.n {
                        let src = &input[(b * self.c + ch) * self.h * self.w..][..self.h * self.w];
                        for oy in 0..self.ho {
                            let Some(iy) = self.source(oy, ki, self.h) else {
                                continue;
                            };
                            for ox in 0..self.wo {
                                if let Some(ix) = self.source(ox, kj, self.w) {
                                    dst[b * plane + oy * self.wo + ox] = src[iy * self.w + ix];
                                }
                            }
                        }
                    }
                }
            }
        }
        col
    }

    fn col2im_add(&self, col: &[f64], grad_in: &mut [f64]) {
        let cols = self.col_cols();
        let plane = self.ho * self.wo;
        for ch in 0..self.c {
            for ki in 0..self.kh {
                for kj in 0..self.kw {
                    let row = (ch * self.kh + ki) * self.kw + kj;
                    let src = &col[row * cols..(row + 1) * cols];
                    for b in 0..self.n {
                        let dst =
                            &mut grad_in[(b * self.c + ch) * self.h * self.w..][..self.h * self.w];
                        for oy in 0..self.ho {
                            let Some(iy) = self.source(oy, ki, self.h) else {
                                continue;
                            };
                            for ox in 0..self.wo {
                                if let Some(ix) = self.source(ox, kj, self.w) {
                                    dst[iy * self.w + ix] += src[b * plane + oy * self.wo + ox];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

pub(crate) fn conv2d_forward(g: &ConvGeom, input: &[f64], kernel: &[f64], bias: &[f64]) -> Vec<f64> {
    let col = g.im2col(input);
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let mut tmp = vec![0.0; g.f * cols];
    gemm(g.f, rows, cols, kernel, rows, 1, &col, cols, 1, 0.0, &mut tmp);
    let plane = g.ho * g.wo;
    let mut out = vec![0.0; g.n * g.f * plane];
    for b in 0..g.n {
        for f in 0..g.f {
            let dst = &mut out[(b * g.f + f) * plane..][..plane];
            let src = &tmp[f * cols + b * plane..][..plane];
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s + bias[f];
            }
        }
    }
    out
}

pub(crate) fn conv2d_backward(
    g: &ConvGeom,
    input: &[f64],
    kernel: &[f64],
    grad_out: &[f64],
    grad_input: Option<&mut [f64]>,
    grad_kernel: Option<&mut [f64]>,
    grad_bias: Option<&mut [f64]>,
) {
    let (rows, cols) = (g.col_rows(), g.col_cols());
    let plane = g.ho * g.wo;
    // grad_out [N,F,P] -> [F, N*P]
    let mut gt = vec![0.0; g.f * cols];
    for b in 0..g.n {
        for f in 0..g.f {
            gt[f * cols + b * plane..][..plane]
                .copy_from_slice(&grad_out[(b * g.f + f) * plane..][..plane]);
        }
    }
    if let Some(gb) = grad_bias {
        for f in 0..g.f {
            gb[f] += gt[f * cols..(f + 1) * cols].iter().sum::<f64>();
        }
    }
    if let Some(gk) = grad_kernel {
        let col = g.im2col(input);
        // gk[F, CK] += gt[F, NP] * col^T
        gemm(g.f, cols, rows, &gt, cols, 1, &col, 1, cols, 1.0, gk);
    }
    if let Some(gi) = grad_input {
        let mut dcol = vec![0.0; rows * cols];
        // dcol[CK, NP] = kernel^T * gt
        gemm(rows, g.f, cols, kernel, 1, rows, &gt, cols, 1, 0.0, &mut dcol);
        g.col2im_add(&dcol, gi);
    }
}

pub(crate) fn avg_pool2_forward(dims: [usize; 4], input: &[f64]) -> Vec<f64> {
    let [n, c, h, w] = dims;
    let (ho, wo) = (h / 2, w / 2);
    let mut out = vec![0.0; n * c * ho * wo];
    for plane in 0..n * c {
        let src = &input[plane * h * w..][..h * w];
        let dst = &mut out[plane * ho * wo..][..ho * wo];
        for y in 0..ho {
            for x in 0..wo {
                let i = 2 * y * w + 2 * x;
                dst[y * wo + x] = 0.25 * (src[i] + src[i + 1] + src[i + w] + src[i + w + 1]);
            }
        }
    }
    out
}

pub(crate) fn avg_pool2_backward(dims: [usize; 4], grad_out: &[f64], grad_in: &mut [f64]) {
    let [n, c, h, w] = dims;
    let (ho, wo) = (h / 2, w / 2);
    for plane in 0..n * c {
        let src = &grad_out[plane * ho * wo..][..ho * wo];
        let dst = &mut grad_in[plane * h * w..][..h * w];
        for y in 0..ho {
            for x in 0..wo {
                let g = 0.25 * src[y * wo + x];
                let i = 2 * y * w + 2 * x;
                dst[i] += g;
                dst[i + 1] += g;
                dst[i + w] += g;
                dst[i + w + 1] += g;
            }
        }
    }
}

/// `[N,D] x [D,E] + bias[E]`.
pub(crate) fn affine_forward(n: usize, d: usize, e: usize, x: &[f64], wt: &[f64], bias: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(n * e);
    for _ in 0..n {
        out.extend_from_slice(bias);
    }
    gemm(n, d, e, x, d, 1, wt, e, 1, 1.0, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn affine_backward(
    n: usize,
    d: usize,
    e: usize,
    x: &[f64],
    wt: &[f64],
    grad_out: &[f64],
    grad_x: Option<&mut [f64]>,
    grad_w: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) {
    if let Some(gx) = grad_x {
        // gx[N,D] += g[N,E] * W^T
        gemm(n, e, d, grad_out, e, 1, wt, 1, e, 1.0, gx);
    }
    if let Some(gw) = grad_w {
        // gw[D,E] += X^T * g
        gemm(d, n, e, x, 1, d, grad_out, e, 1, 1.0, gw);
    }
    if let Some(gb) = grad_b {
        for row in grad_out.chunks_exact(e) {
            for (acc, v) in gb.iter_mut().zip(row) {
                *acc += v;
            }
        }
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_conv(g: &ConvGeom, input: &[f64], kernel: &[f64], bias: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; g.n * g.f * g.ho * g.wo];
        for b in 0..g.n {
            for f in 0..g.f {
                for oy in 0..g.ho {
                    for ox in 0..g.wo {
                        let mut acc = bias[f];
                        for c in 0..g.c {
                            for i in 0..g.kh {
                                for j in 0..g.kw {
                                    let iy = (oy * g.stride + i) as isize - g.pad as isize;
                                    let ix = (ox * g.stride + j) as isize - g.pad as isize;
                                    if iy < 0 || ix < 0 || iy >= g.h as isize || ix >= g.w as isize {
                                        continue;
                                    }
                                    acc += input[((b * g.c + c) * g.h + iy as usize) * g.w + ix as usize]
                                        * kernel[((f * g.c + c) * g.kh + i) * g.kw + j];
                                }
                            }
                        }
                        out[((b * g.f + f) * g.ho + oy) * g.wo + ox] = acc;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn gemm_conv_matches_direct_loops() {
        let g = ConvGeom::new([2, 3, 5, 6], [4, 3, 3, 3], 4, 2, 1).unwrap();
        let input: Vec<f64> = (0..2 * 3 * 5 * 6).map(|i| ((i * 37 % 11) as f64) - 5.0).collect();
        let kernel: Vec<f64> = (0..4 * 3 * 9).map(|i| ((i * 13 % 7) as f64) * 0.1 - 0.3).collect();
        let bias = [0.1, -0.2, 0.3, 0.0];
        let fast = conv2d_forward(&g, &input, &kernel, &bias);
        let slow = naive_conv(&g, &input, &kernel, &bias);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
