//! Image augmentations: horizontal flip, Gaussian blur, a codec-free JPEG
//! proxy (8x8 block DCT quantization) and CutMix.

use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Image;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    pub p_flip: f64,
    pub p_blur: f64,
    pub p_jpeg: f64,
    pub p_cutmix: f64,
    pub blur_sigma_range: (f64, f64),
    pub jpeg_quality_range: (u8, u8),
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            p_flip: 0.5,
            p_blur: 0.5,
            p_jpeg: 0.5,
            p_cutmix: 0.5,
            blur_sigma_range: (0.1, 3.0),
            jpeg_quality_range: (30, 100),
            seed: 0,
        }
    }
}

impl AugmentConfig {
    pub fn none() -> Self {
        Self {
            p_flip: 0.0,
            p_blur: 0.0,
            p_jpeg: 0.0,
            p_cutmix: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("p_flip", self.p_flip),
            ("p_blur", self.p_blur),
            ("p_jpeg", self.p_jpeg),
            ("p_cutmix", self.p_cutmix),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} = {p} outside [0, 1]")));
            }
        }
        let (lo, hi) = self.blur_sigma_range;
        if !(lo > 0.0 && lo <= hi) {
            return Err(Error::InvalidArgument(format!("bad blur sigma range {lo}..{hi}")));
        }
        let (qlo, qhi) = self.jpeg_quality_range;
        if !(1..=100).contains(&qlo) || !(1..=100).contains(&qhi) || qlo > qhi {
            return Err(Error::InvalidArgument(format!("bad JPEG quality range {qlo}..{qhi}")));
        }
        Ok(())
    }
}

pub fn hflip(img: &Image) -> Image {
    let mut out = img.clone();
    let w = img.width;
    for c in 0..img.channels {
        let src = img.plane(c);
        let dst = out.plane_mut(c);
        for (srow, drow) in src.chunks_exact(w).zip(dst.chunks_exact_mut(w)) {
            for (d, s) in drow.iter_mut().zip(srow.iter().rev()) {
                *d = *s;
            }
        }
    }
    out
}

/// Mirror index without repeating the edge sample (`d c b | a b c d | c b a`).
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

/// Normalized 1-D Gaussian taps over `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let taps: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|v| v / sum).collect()
}

/// Separable Gaussian blur with reflect padding.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Result<Image> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::InvalidArgument(format!("blur sigma must be positive, got {sigma}")));
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let (h, w) = (img.height, img.width);
    let mut out = img.clone();
    let mut tmp = vec![0.0; h * w];
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..h {
            for x in 0..w {
                tmp[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * src[y * w + reflect(x as isize + t as isize - r, w)])
                    .sum();
            }
        }
        let dst = out.plane_mut(c);
        for y in 0..h {
            for x in 0..w {
                dst[y * w + x] = k
                    .iter()
                    .enumerate()
                    .map(|(t, kv)| kv * tmp[reflect(y as isize + t as isize - r, h) * w + x])
                    .sum();
            }
        }
    }
    Ok(out)
}

/// Baseline luminance quantization table, natural (row-major) order.
pub const LUMA_QUANT_TABLE: [u16; 64] = [
    16, 11, 10, 16, 24, 40, 51, 61, //
    12, 12, 14, 19, 26, 58, 60, 55, //
    14, 13, 16, 24, 40, 57, 69, 56, //
    14, 17, 22, 29, 51, 87, 80, 62, //
    18, 22, 37, 56, 68, 109, 103, 77, //
    24, 35, 55, 64, 81, 104, 113, 92, //
    49, 64, 78, 87, 103, 121, 120, 101, //
    72, 92, 95, 98, 112, 100, 103, 99,
];

/// Luminance table scaled for `quality` with the IJG rule.
pub fn scaled_quant_table(quality: u8) -> Result<[f64; 64]> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidArgument(format!("JPEG quality {quality} outside 1..=100")));
    }
    let q = quality as u32;
    let scale = if q < 50 { 5000 / q } else { 200 - 2 * q };
    let mut out = [0.0; 64];
    for (o, &e) in out.iter_mut().zip(&LUMA_QUANT_TABLE) {
        *o = ((e as u32 * scale + 50) / 100).clamp(1, 255) as f64;
    }
    Ok(out)
}

/// Orthonormal DCT-II basis, `BASIS[u][x] = a(u) cos((2x + 1) u pi / 16)`.
fn dct_basis() -> &'static [[f64; 8]; 8] {
    static BASIS: OnceLock<[[f64; 8]; 8]> = OnceLock::new();
    BASIS.get_or_init(|| {
        let mut b = [[0.0; 8]; 8];
        for (u, row) in b.iter_mut().enumerate() {
            let a = if u == 0 { (1.0f64 / 8.0).sqrt() } else { (2.0f64 / 8.0).sqrt() };
            for (x, v) in row.iter_mut().enumerate() {
                *v = a * (((2 * x + 1) * u) as f64 * std::f64::consts::PI / 16.0).cos();
            }
        }
        b
    })
}

/// Separable forward 8x8 DCT of a row-major block.
pub fn dct8x8(block: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|x| b[u][x] * block[y * 8 + x]).sum();
        }
    }
    let mut out = [0.0; 64];
    for v in 0..8 {
        for u in 0..8 {
            out[v * 8 + u] = (0..8).map(|y| b[v][y] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

pub fn idct8x8(coef: &[f64; 64]) -> [f64; 64] {
    let b = dct_basis();
    let mut tmp = [0.0; 64];
    for y in 0..8 {
        for u in 0..8 {
            tmp[y * 8 + u] = (0..8).map(|v| b[v][y] * coef[v * 8 + u]).sum();
        }
    }
    let mut out = [0.0; 64];
    for y in 0..8 {
        for x in 0..8 {
            out[y * 8 + x] = (0..8).map(|u| b[u][x] * tmp[y * 8 + u]).sum();
        }
    }
    out
}

/// JPEG-style distortion at `quality`: per channel and 8x8 block, DCT,
/// quantize with the scaled luminance table, dequantize, inverse DCT, clamp.
/// Non-multiple-of-8 sizes are reflect-padded and cropped back.
pub fn jpeg_proxy(img: &Image, quality: u8) -> Result<Image> {
    let table = scaled_quant_table(quality)?;
    let (h, w) = (img.height, img.width);
    let (ph, pw) = (h.div_ceil(8) * 8, w.div_ceil(8) * 8);
    let mut out = img.clone();
    let mut padded = vec![0.0; ph * pw];
    for c in 0..img.channels {
        let src = img.plane(c);
        for y in 0..ph {
            for x in 0..pw {
                padded[y * pw + x] =
                    src[reflect(y as isize, h) * w + reflect(x as isize, w)] * 255.0 - 128.0;
            }
        }
        let dst = out.plane_mut(c);
        for by in (0..ph).step_by(8) {
            for bx in (0..pw).step_by(8) {
                let mut block = [0.0; 64];
                for y in 0..8 {
                    block[y * 8..y * 8 + 8].copy_from_slice(&padded[(by + y) * pw + bx..][..8]);
                }
                let mut coef = dct8x8(&block);
                for (cv, q) in coef.iter_mut().zip(&table) {
                    *cv = (*cv / q).round() * q;
                }
                let rec = idct8x8(&coef);
                for y in 0..8 {
                    for x in 0..8 {
                        let (yy, xx) = (by + y, bx + x);
                        if yy < h && xx < w {
                            dst[yy * w + xx] = ((rec[y * 8 + x] + 128.0) / 255.0).clamp(0.0, 1.0);
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Pastes a `(W sqrt(1-lambda)) x (H sqrt(1-lambda))` box of `b` centred at
/// `(cx, cy)` into `a`, clipped to the image. Returns the mixed image and
/// `lambda_adj = 1 - pasted_area / (H W)`.
pub fn cutmix_at(a: &Image, b: &Image, lambda: f64, cx: usize, cy: usize) -> Result<(Image, f64)> {
    if a.dims() != b.dims() {
        return Err(Error::shape("cutmix", format!("{:?} vs {:?}", a.dims(), b.dims())));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("cutmix lambda {lambda} outside [0, 1]")));
    }
    let (h, w) = (a.height, a.width);
    let ratio = (1.0 - lambda).sqrt();
    let cut_w = (w as f64 * ratio).round() as isize;
    let cut_h = (h as f64 * ratio).round() as isize;
    let x1 = (cx as isize - cut_w / 2).clamp(0, w as isize) as usize;
    let x2 = (cx as isize - cut_w / 2 + cut_w).clamp(0, w as isize) as usize;
    let y1 = (cy as isize - cut_h / 2).clamp(0, h as isize) as usize;
    let y2 = (cy as isize - cut_h / 2 + cut_h).clamp(0, h as isize) as usize;
    let mut out = a.clone();
    for c in 0..a.channels {
        let src = b.plane(c);
        let dst = out.plane_mut(c);
        for y in y1..y2 {
            dst[y * w + x1..y * w + x2].copy_from_slice(&src[y * w + x1..y * w + x2]);
        }
    }
    let area = ((x2 - x1) * (y2 - y1)) as f64;
    Ok((out, 1.0 - area / (h * w) as f64))
}

/// Label mix for a pasted box; equal labels stay exact.
pub fn mix_labels(label_a: f64, label_b: f64, lambda_adj: f64) -> f64 {
    if label_a == label_b {
        label_a
    } else {
        lambda_adj * label_a + (1.0 - lambda_adj) * label_b
    }
}

/// CutMix with `lambda ~ U[0, 1]` and a uniformly random box centre.
pub fn cutmix<R: Rng>(a: &Image, label_a: f64, b: &Image, label_b: f64, rng: &mut R) -> Result<(Image, f64)> {
    let lambda: f64 = rng.gen_range(0.0..=1.0);
    let cx = rng.gen_range(0..a.width);
    let cy = rng.gen_range(0..a.height);
    let (img, lam) = cutmix_at(a, b, lambda, cx, cy)?;
    Ok((img, mix_labels(label_a, label_b, lam)))
}
