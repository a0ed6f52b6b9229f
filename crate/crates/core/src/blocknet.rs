//! Segmented CNN classifier.
//!
//! A [`BlockNet`] is a stack of segments, each a run of `conv -> relu` layers
//! optionally closed by 2x2 average pooling, followed by a scoring head
//! (`global mean pool -> affine(D -> 1) -> sigmoid`). Segment boundaries are
//! where sibling routes may hand features from one network to the other.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Param, ParamSet, ParamStore, Tape, Tensor, Var};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub out_channels: usize,
    pub kernel_size: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub conv_layers: Vec<ConvSpec>,
    pub ends_with_downsample: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetSpec {
    pub input_channels: usize,
    pub segments: Vec<SegmentSpec>,
}

impl NetSpec {
    /// One conv layer per segment with the given output channels, every
    /// segment closed by a downsample.
    pub fn uniform(input_channels: usize, channels: &[usize], kernel_size: usize) -> Self {
        Self {
            input_channels,
            segments: channels
                .iter()
                .map(|&c| SegmentSpec {
                    conv_layers: vec![ConvSpec {
                        out_channels: c,
                        kernel_size,
                    }],
                    ends_with_downsample: true,
                })
                .collect(),
        }
    }

    /// Three segments of 8, 16 and 32 channels with 3x3 kernels on one input channel.
    pub fn desk() -> Self {
        Self::uniform(1, &[8, 16, 32], 3)
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.segments.len();
        if k < 2 {
            return Err(Error::TooFewSegments(k));
        }
        if self.input_channels == 0 {
            return Err(Error::InvalidArgument("input_channels must be positive".into()));
        }
        for (i, seg) in self.segments.iter().enumerate() {
            if seg.conv_layers.is_empty() {
                return Err(Error::InvalidArgument(format!("segment {} has no conv layers", i + 1)));
            }
            if i + 1 < k && !seg.ends_with_downsample {
                return Err(Error::InvalidArgument(format!(
                    "segment {} must end with a downsample (only the last may not)",
                    i + 1
                )));
            }
            for conv in &seg.conv_layers {
                if conv.kernel_size % 2 == 0 || conv.out_channels == 0 {
                    return Err(Error::InvalidArgument(format!(
                        "segment {}: kernel size must be odd and channels positive, got {:?}",
                        i + 1,
                        conv
                    )));
                }
            }
        }
        Ok(())
    }

    /// Channels entering segment `k` (1-based).
    pub fn segment_input_channels(&self, k: usize) -> usize {
        if k == 1 {
            self.input_channels
        } else {
            self.segment_output_channels(k - 1)
        }
    }

    pub fn segment_output_channels(&self, k: usize) -> usize {
        self.segments[k - 1]
            .conv_layers
            .last()
            .map(|c| c.out_channels)
            .unwrap_or(0)
    }

    /// Width of the head's affine input.
    pub fn head_input_dim(&self) -> usize {
        self.segment_output_channels(self.segments.len())
    }

    /// Output shape of segment `k` for an `[N,C,H,W]` input, without running it.
    pub fn segment_output_shape(&self, k: usize, input: [usize; 4]) -> [usize; 4] {
        let [n, _, h, w] = input;
        let c = self.segment_output_channels(k);
        if self.segments[k - 1].ends_with_downsample {
            [n, c, h / 2, w / 2]
        } else {
            [n, c, h, w]
        }
    }

    /// Expected ordered `(name, shape)` list of all parameters.
    pub fn param_shapes(&self) -> Vec<(String, Vec<usize>)> {
        let mut out = Vec::new();
        for (si, seg) in self.segments.iter().enumerate() {
            let k = si + 1;
            let mut cin = self.segment_input_channels(k);
            for (ci, conv) in seg.conv_layers.iter().enumerate() {
                let j = ci + 1;
                out.push((
                    conv_weight_name(k, j),
                    vec![conv.out_channels, cin, conv.kernel_size, conv.kernel_size],
                ));
                out.push((conv_bias_name(k, j), vec![conv.out_channels]));
                cin = conv.out_channels;
            }
        }
        out.push((HEAD_WEIGHT.to_string(), vec![self.head_input_dim(), 1]));
        out.push((HEAD_BIAS.to_string(), vec![1]));
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }
}

pub const HEAD_WEIGHT: &str = "head.weight";
pub const HEAD_BIAS: &str = "head.bias";

pub fn conv_weight_name(segment: usize, conv: usize) -> String {
    format!("seg{segment}.conv{conv}.weight")
}

pub fn conv_bias_name(segment: usize, conv: usize) -> String {
    format!("seg{segment}.conv{conv}.bias")
}

/// Prefixes `name` with `scope.` unless `scope` is empty.
pub fn qualify(scope: &str, name: &str) -> String {
    if scope.is_empty() {
        name.to_string()
    } else {
        format!("{scope}.{name}")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlockNet {
    spec: NetSpec,
    params: ParamSet,
}

impl BlockNet {
    /// Kaiming-uniform weights (`U(-b, b)`, `b = sqrt(6 / fan_in)`) and zero
    /// biases, drawn in declaration order from a ChaCha stream seeded by `seed`.
    pub fn build(spec: &NetSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (si, seg) in spec.segments.iter().enumerate() {
            let k = si + 1;
            let mut cin = spec.segment_input_channels(k);
            for (ci, conv) in seg.conv_layers.iter().enumerate() {
                let j = ci + 1;
                let fan_in = cin * conv.kernel_size * conv.kernel_size;
                let shape = [conv.out_channels, cin, conv.kernel_size, conv.kernel_size];
                params.insert(conv_weight_name(k, j), kaiming_uniform(&mut rng, &shape, fan_in));
                params.insert(conv_bias_name(k, j), Tensor::zeros(&[conv.out_channels]));
                cin = conv.out_channels;
            }
        }
        let d = spec.head_input_dim();
        params.insert(HEAD_WEIGHT, kaiming_uniform(&mut rng, &[d, 1], d));
        params.insert(HEAD_BIAS, Tensor::zeros(&[1]));
        Ok(Self {
            spec: spec.clone(),
            params,
        })
    }

    pub(crate) fn from_parts(spec: NetSpec, params: ParamSet) -> Self {
        Self { spec, params }
    }

    pub fn spec(&self) -> &NetSpec {
        &self.spec
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn num_segments(&self) -> usize {
        self.spec.segments.len()
    }

    /// Unqualified names of segment `k`'s parameters.
    pub fn segment_param_names(&self, k: usize) -> Vec<String> {
        let seg = &self.spec.segments[k - 1];
        (1..=seg.conv_layers.len())
            .flat_map(|j| [conv_weight_name(k, j), conv_bias_name(k, j)])
            .collect()
    }

    pub fn head_param_names(&self) -> Vec<String> {
        vec![HEAD_WEIGHT.to_string(), HEAD_BIAS.to_string()]
    }

    fn leaf(&self, tape: &mut Tape, scope: &str, name: &str) -> Result<Var> {
        let p = self
            .params
            .get(name)
            .ok_or_else(|| Error::UnknownParam(name.to_string()))?;
        Ok(tape.param(qualify(scope, name), p.value.clone(), p.requires_grad))
    }

    /// Runs segment `k` (1-based): its `conv -> relu` stack, then its downsample if any.
    /// Parameters are registered on the tape as `scope.segK.convJ.*`.
    pub fn forward_segment(&self, tape: &mut Tape, scope: &str, k: usize, x: Var) -> Result<Var> {
        if k == 0 || k > self.num_segments() {
            return Err(Error::InvalidArgument(format!(
                "segment index {k} outside 1..={}",
                self.num_segments()
            )));
        }
        let seg = &self.spec.segments[k - 1];
        let [_, c, h, w] = tape.value(x)?.dims4("forward_segment")?;
        let expected = self.spec.segment_input_channels(k);
        if c != expected {
            return Err(Error::shape(
                "forward_segment",
                format!("segment {k} expects {expected} input channels, got {c}"),
            ));
        }
        if seg.ends_with_downsample && (h % 2 != 0 || w % 2 != 0) {
            return Err(Error::shape(
                "forward_segment",
                format!("segment {k} downsamples and needs even spatial dims, got {h}x{w}"),
            ));
        }
        let mut h = x;
        for (ci, conv) in seg.conv_layers.iter().enumerate() {
            let wt = self.leaf(tape, scope, &conv_weight_name(k, ci + 1))?;
            let b = self.leaf(tape, scope, &conv_bias_name(k, ci + 1))?;
            let z = tape.conv2d(h, wt, b, 1, conv.kernel_size / 2)?;
            h = tape.relu(z)?;
        }
        if seg.ends_with_downsample {
            h = tape.avg_pool2(h)?;
        }
        Ok(h)
    }

    /// Scores `[N]` in (0, 1) from the final segment's `[N,D,H,W]` output.
    pub fn forward_head(&self, tape: &mut Tape, scope: &str, x: Var) -> Result<Var> {
        let [n, c, _, _] = tape.value(x)?.dims4("forward_head")?;
        let d = self.spec.head_input_dim();
        if c != d {
            return Err(Error::shape(
                "forward_head",
                format!("head expects {d} channels, got {c}"),
            ));
        }
        let pooled = tape.global_mean_pool(x)?;
        let wt = self.leaf(tape, scope, HEAD_WEIGHT)?;
        let b = self.leaf(tape, scope, HEAD_BIAS)?;
        let logits = tape.affine(pooled, wt, b)?;
        let probs = tape.sigmoid(logits)?;
        tape.reshape(probs, vec![n])
    }

    pub fn forward(&self, tape: &mut Tape, scope: &str, x: Var) -> Result<Var> {
        let mut h = x;
        for k in 1..=self.num_segments() {
            h = self.forward_segment(tape, scope, k, h)?;
        }
        self.forward_head(tape, scope, h)
    }

    /// Gradient-free scores for a `[N,C,H,W]` batch.
    pub fn scores(&self, images: &Tensor) -> Result<Vec<f64>> {
        let mut tape = Tape::no_grad();
        let x = tape.constant(images.clone());
        let y = self.forward(&mut tape, "", x)?;
        Ok(tape.value(y)?.data().to_vec())
    }

    /// Parameters rounded through `f32`, as they would be after a checkpoint round trip.
    pub fn quantized(&self) -> Self {
        let mut out = self.clone();
        for (_, p) in out.params.iter_mut() {
            p.value
                .data_mut()
                .iter_mut()
                .for_each(|v| *v = *v as f32 as f64);
        }
        out
    }
}

impl ParamStore for BlockNet {
    fn param_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    fn param_names(&self) -> Vec<String> {
        self.params.names().map(str::to_owned).collect()
    }
}

fn kaiming_uniform(rng: &mut ChaCha8Rng, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape product matches")
}
