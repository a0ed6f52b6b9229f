use std::path::Path;

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const XIMG_MAGIC: &[u8; 4] = b"XIMG";
pub const XIMG_VERSION: u32 = 1;

/// Channel-major image with values nominally in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl Image {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels * height * width != data.len() || data.is_empty() {
            return Err(Error::shape(
                "image",
                format!("{channels}x{height}x{width} vs {} values", data.len()),
            ));
        }
        Ok(Self {
            channels,
            height,
            width,
            data,
        })
    }

    pub fn filled(channels: usize, height: usize, width: usize, value: f64) -> Self {
        Self {
            channels,
            height,
            width,
            data: vec![value; channels * height * width],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.channels, self.height, self.width)
    }

    pub fn plane(&self, c: usize) -> &[f64] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn plane_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.height * self.width;
        &mut self.data[c * n..(c + 1) * n]
    }

    #[inline]
    pub fn at(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn clamp_unit(&mut self) {
        self.data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    }

    /// Values as stored on disk (rounded through `f32`).
    pub fn quantized(mut self) -> Self {
        self.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
        self
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(vec![self.channels, self.height, self.width], self.data.clone())
            .expect("image dims are positive")
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.data.len() * 4);
        out.extend_from_slice(XIMG_MAGIC);
        out.extend_from_slice(&XIMG_VERSION.to_le_bytes());
        for d in [self.channels, self.height, self.width] {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 20 {
            return Err(Error::Format("truncated XIMG header".into()));
        }
        if &bytes[..4] != XIMG_MAGIC {
            return Err(Error::Format("bad XIMG magic".into()));
        }
        let word = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("4 bytes"));
        let version = word(4);
        if version != XIMG_VERSION {
            return Err(Error::Format(format!("unsupported XIMG version {version}")));
        }
        let (c, h, w) = (word(8) as usize, word(12) as usize, word(16) as usize);
        let n = c
            .checked_mul(h)
            .and_then(|v| v.checked_mul(w))
            .ok_or_else(|| Error::Format("XIMG dimensions overflow".into()))?;
        if n == 0 {
            return Err(Error::Format("XIMG has a zero dimension".into()));
        }
        let body = &bytes[20..];
        if body.len() != n * 4 {
            return Err(Error::Format(format!(
                "XIMG payload is {} bytes, expected {}",
                body.len(),
                n * 4
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")) as f64)
            .collect();
        Self::new(c, h, w, data)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_and_roundtrip() {
        let img = Image::new(1, 2, 3, vec![0.0, 0.1, 0.2, 0.3, 0.4, 1.0]).unwrap();
        let bytes = img.encode();
        assert_eq!(&bytes[..4], b"XIMG");
        assert_eq!(&bytes[8..20], &[1, 0, 0, 0, 2, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(bytes.len(), 20 + 24);
        let back = Image::decode(&bytes).unwrap();
        assert_eq!(back, img.clone().quantized());
        assert_eq!(back.encode(), bytes);
    }

    #[test]
    fn rejects_bad_input() {
        let bytes = Image::filled(1, 2, 2, 0.5).encode();
        let mut bad = bytes.clone();
        bad[1] = b'!';
        assert!(matches!(Image::decode(&bad), Err(Error::Format(_))));
        assert!(matches!(Image::decode(&bytes[..bytes.len() - 1]), Err(Error::Format(_))));
        assert!(matches!(Image::decode(&bytes[..10]), Err(Error::Format(_))));
    }
}
