//! Binary checkpoint format.
//!
//! ```text
//! "XTCK"            4 bytes
//! version           u32 LE (1)
//! param count       u32 LE
//! per parameter, in name order:
//!   name length     u32 LE, then UTF-8 bytes
//!   rank            u32 LE, then each dimension u32 LE
//!   values          f32 LE, row-major
//! ```

use std::path::Path;

use crate::autodiff::{ParamSet, Tensor};
use crate::blocknet::{conv_weight_name, BlockNet, ConvSpec, NetSpec, SegmentSpec};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"XTCK";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(net: &BlockNet) -> Vec<u8> {
    let params = net.params();
    let mut out = Vec::with_capacity(12 + params.num_values() * 4 + params.len() * 48);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(params.len() as u32).to_le_bytes());
    for (name, p) in params.iter() {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(p.value.rank() as u32).to_le_bytes());
        for &d in p.value.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in p.value.data() {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| Error::Format(format!("truncated checkpoint at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Parameters in file order, without any spec check.
fn parse(bytes: &[u8]) -> Result<Vec<(String, Tensor)>> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Format("parameter name is not UTF-8".into()))?
            .to_string();
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank.min(8));
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n = shape
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .and_then(|n| n.checked_mul(4))
            .ok_or_else(|| Error::Format("size overflow".into()))?;
        let data = r
            .take(n)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        out.push((name, Tensor::new(shape, data).map_err(|e| Error::Format(e.to_string()))?));
    }
    if r.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after checkpoint",
            bytes.len() - r.pos
        )));
    }
    Ok(out)
}

/// Rebuilds the spec from stored shapes. The format does not record
/// downsampling, so every segment is assumed to end with one.
pub fn infer_spec(bytes: &[u8]) -> Result<NetSpec> {
    let params = parse(bytes)?;
    let mut segments: Vec<SegmentSpec> = Vec::new();
    let mut input_channels = None;
    for k in 1.. {
        let mut convs = Vec::new();
        for j in 1.. {
            let name = conv_weight_name(k, j);
            let Some((_, t)) = params.iter().find(|(n, _)| *n == name) else { break };
            let s = t.shape();
            if s.len() != 4 || s[2] != s[3] {
                return Err(Error::CheckpointMismatch(format!("{name} has shape {s:?}")));
            }
            if k == 1 && j == 1 {
                input_channels = Some(s[1]);
            }
            convs.push(ConvSpec {
                out_channels: s[0],
                kernel_size: s[2],
            });
        }
        if convs.is_empty() {
            break;
        }
        segments.push(SegmentSpec {
            conv_layers: convs,
            ends_with_downsample: true,
        });
    }
    let spec = NetSpec {
        input_channels: input_channels
            .ok_or_else(|| Error::CheckpointMismatch("no seg1.conv1.weight in checkpoint".into()))?,
        segments,
    };
    spec.validate().map_err(|e| Error::CheckpointMismatch(e.to_string()))?;
    Ok(spec)
}

/// Parses checkpoint bytes and checks them against `spec`.
pub fn decode(bytes: &[u8], spec: &NetSpec) -> Result<BlockNet> {
    spec.validate()?;
    let parsed = parse(bytes)?;
    let mut stored: Vec<(String, Vec<usize>)> = parsed.iter().map(|(n, t)| (n.clone(), t.shape().to_vec())).collect();
    let mut params = ParamSet::new();
    for (name, t) in parsed {
        params.insert(name, t);
    }
    stored.sort_by(|a, b| a.0.cmp(&b.0));
    let expected = spec.param_shapes();
    if stored != expected {
        let detail = if stored.len() != expected.len() {
            format!("{} stored parameters, spec needs {}", stored.len(), expected.len())
        } else {
            stored
                .iter()
                .zip(&expected)
                .find(|(a, b)| a != b)
                .map(|(a, b)| format!("stored {}{:?}, spec expects {}{:?}", a.0, a.1, b.0, b.1))
                .unwrap_or_default()
        };
        return Err(Error::CheckpointMismatch(detail));
    }
    Ok(BlockNet::from_parts(spec.clone(), params))
}

pub fn save_checkpoint(net: &BlockNet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode(net)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>, spec: &NetSpec) -> Result<BlockNet> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, spec)
}
