//! Synthetic datasets, on-disk sample formats, augmentation and batching.

pub mod augment;
mod batches;
mod image;
mod manifest;
pub mod synth;

pub use augment::AugmentConfig;
pub use batches::{Batch, Dataset};
pub use image::{Image, XIMG_MAGIC, XIMG_VERSION};
pub use manifest::{ManifestEntry, SampleManifest, MANIFEST_FILE};
pub use synth::{generate_domain, generate_samples, DomainRecipe, Orientation};
