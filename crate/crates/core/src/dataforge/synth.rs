//! Synthetic real/generated image domains. Real samples are smooth noise
//! fields; generated samples add a faint periodic grid on top of their own
//! base field, a stand-in for upsampling fingerprints.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::augment::gaussian_blur;
use super::{Image, ManifestEntry, SampleManifest};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    Axis,
    Diagonal,
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Orientation::Axis => "axis",
            Orientation::Diagonal => "diagonal",
        })
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axis" => Ok(Orientation::Axis),
            "diagonal" => Ok(Orientation::Diagonal),
            _ => Err(Error::InvalidArgument(format!("unknown orientation `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainRecipe {
    pub texture_scale: f64,
    pub artifact_period: usize,
    pub artifact_amplitude: f64,
    pub artifact_orientation: Orientation,
    pub image_size: (usize, usize),
    pub channels: usize,
}

pub const DEFAULT_IMAGE_SIZE: usize = 32;

impl DomainRecipe {
    /// Source domain: fine texture, period-2 diagonal grid.
    pub fn domain_a(image_size: usize) -> Self {
        Self {
            texture_scale: 0.5,
            artifact_period: 2,
            artifact_amplitude: 0.3,
            artifact_orientation: Orientation::Diagonal,
            image_size: (image_size, image_size),
            channels: 1,
        }
    }

    /// Target domain: smooth texture, period-4 axis-aligned grid.
    pub fn domain_b(image_size: usize) -> Self {
        Self {
            texture_scale: 1.5,
            artifact_period: 4,
            artifact_amplitude: 0.3,
            artifact_orientation: Orientation::Axis,
            image_size: (image_size, image_size),
            channels: 1,
        }
    }

    pub fn by_name(name: &str, image_size: usize) -> Result<Self> {
        match name {
            "A" | "a" => Ok(Self::domain_a(image_size)),
            "B" | "b" => Ok(Self::domain_b(image_size)),
            _ => Err(Error::InvalidArgument(format!("unknown domain `{name}` (expected A or B)"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (h, w) = self.image_size;
        if h == 0 || w == 0 || self.channels == 0 {
            return Err(Error::InvalidArgument("image size and channels must be positive".into()));
        }
        if !(self.texture_scale > 0.0) {
            return Err(Error::InvalidArgument("texture_scale must be positive".into()));
        }
        if self.artifact_period < 2 {
            return Err(Error::InvalidArgument("artifact_period must be at least 2".into()));
        }
        if !(0.0..1.0).contains(&self.artifact_amplitude) {
            return Err(Error::InvalidArgument("artifact_amplitude must lie in [0, 1)".into()));
        }
        Ok(())
    }

    /// Smooth noise field: blurred white noise standardized per channel to
    /// `0.5 + 0.15 z`, clamped to `[0, 1]`.
    pub fn render_base<R: Rng>(&self, rng: &mut R) -> Image {
        let (h, w) = self.image_size;
        let noise: Vec<f64> = (0..self.channels * h * w).map(|_| rng.sample(StandardNormal)).collect();
        let raw = Image::new(self.channels, h, w, noise).expect("positive dims");
        let mut img = gaussian_blur(&raw, self.texture_scale).expect("validated sigma");
        for c in 0..self.channels {
            let plane = img.plane_mut(c);
            let n = plane.len() as f64;
            let mean = plane.iter().sum::<f64>() / n;
            let var = plane.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let sd = var.sqrt().max(1e-12);
            plane.iter_mut().for_each(|v| *v = 0.5 + 0.15 * (*v - mean) / sd);
        }
        img.clamp_unit();
        img
    }

    /// Unit-amplitude grid value at `(y, x)` for integer phases.
    pub fn pattern(&self, y: usize, x: usize, phase: (usize, usize)) -> f64 {
        let p = self.artifact_period as f64;
        let (py, px) = (phase.0 as f64, phase.1 as f64);
        let (y, x) = (y as f64, x as f64);
        match self.artifact_orientation {
            Orientation::Axis => 0.5 * ((2.0 * PI * (y + py) / p).cos() + (2.0 * PI * (x + px) / p).cos()),
            Orientation::Diagonal => (2.0 * PI * (y + x + py) / p).cos(),
        }
    }

    /// Adds the grid to `base`, re-clamped.
    pub fn apply_artifact<R: Rng>(&self, base: &Image, rng: &mut R) -> Image {
        let phase = (
            rng.gen_range(0..self.artifact_period),
            rng.gen_range(0..self.artifact_period),
        );
        let mut out = base.clone();
        let (h, w) = self.image_size;
        for c in 0..self.channels {
            let plane = out.plane_mut(c);
            for y in 0..h {
                for x in 0..w {
                    plane[y * w + x] += self.artifact_amplitude * self.pattern(y, x, phase);
                }
            }
        }
        out.clamp_unit();
        out
    }

    /// One sample; `label` 0 is real, 1 is generated. Returns the sample and
    /// the base it was built on.
    pub fn sample(&self, label: u8, index: usize, seed: u64) -> (Image, Image) {
        let mut r = rng::stream(seed, &[label as u64, index as u64]);
        let base = self.render_base(&mut r);
        let img = if label == 1 {
            self.apply_artifact(&base, &mut r)
        } else {
            base.clone()
        };
        (img, base)
    }
}

/// In-memory samples: all real first, then all generated. Values are
/// rounded through `f32` so they match what a file round trip yields.
pub fn generate_samples(
    recipe: &DomainRecipe,
    count_real: usize,
    count_fake: usize,
    seed: u64,
) -> Result<(Vec<Image>, Vec<u8>)> {
    recipe.validate()?;
    let mut images = Vec::with_capacity(count_real + count_fake);
    let mut labels = Vec::with_capacity(count_real + count_fake);
    for (label, count) in [(0u8, count_real), (1u8, count_fake)] {
        for i in 0..count {
            images.push(recipe.sample(label, i, seed).0.quantized());
            labels.push(label);
        }
    }
    Ok((images, labels))
}

/// Writes `real_NNNNN.ximg` / `fake_NNNNN.ximg` files plus `manifest.csv`
/// into `out`.
pub fn generate_domain(
    recipe: &DomainRecipe,
    count_real: usize,
    count_fake: usize,
    seed: u64,
    out: &Path,
) -> Result<SampleManifest> {
    recipe.validate()?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut entries = Vec::with_capacity(count_real + count_fake);
    for (label, count, stem) in [(0u8, count_real, "real"), (1u8, count_fake, "fake")] {
        for i in 0..count {
            let name = format!("{stem}_{i:05}.ximg");
            recipe.sample(label, i, seed).0.save(&out.join(&name))?;
            entries.push(ManifestEntry { path: name, label });
        }
    }
    let manifest = SampleManifest {
        root: out.to_path_buf(),
        entries,
    };
    manifest.write()?;
    Ok(manifest)
}
