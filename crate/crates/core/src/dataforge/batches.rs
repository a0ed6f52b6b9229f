use rand::seq::SliceRandom;
use rand::Rng;

use super::augment::{cutmix, gaussian_blur, hflip, jpeg_proxy, AugmentConfig};
use super::{Image, SampleManifest};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::rng;

/// Images held in memory with hard labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub images: Vec<Image>,
    pub labels: Vec<f64>,
}

/// One mini-batch. `indices` are dataset positions; labels may be soft after
/// CutMix.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<f64>,
    pub indices: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

impl Dataset {
    pub fn new(images: Vec<Image>, labels: Vec<f64>) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::EmptyBatch);
        }
        if images.len() != labels.len() {
            return Err(Error::shape(
                "dataset",
                format!("{} images vs {} labels", images.len(), labels.len()),
            ));
        }
        let dims = images[0].dims();
        if let Some(bad) = images.iter().find(|i| i.dims() != dims) {
            return Err(Error::shape("dataset", format!("{:?} vs {:?}", bad.dims(), dims)));
        }
        if let Some(&y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::InvalidLabel(y));
        }
        Ok(Self { images, labels })
    }

    pub fn from_labeled(images: Vec<Image>, labels: &[u8]) -> Result<Self> {
        Self::new(images, labels.iter().map(|&l| l as f64).collect())
    }

    pub fn from_manifest(manifest: &SampleManifest) -> Result<Self> {
        let labels: Vec<u8> = manifest.entries.iter().map(|e| e.label).collect();
        Self::from_labeled(manifest.load_images()?, &labels)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        self.images[0].dims()
    }

    pub fn count_pos(&self) -> usize {
        self.labels.iter().filter(|&&y| y == 1.0).count()
    }

    pub fn count_neg(&self) -> usize {
        self.len() - self.count_pos()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            images: indices.iter().map(|&i| self.images[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }

    fn stack(&self, images: &[Image], labels: Vec<f64>, indices: Vec<usize>) -> Batch {
        let (c, h, w) = self.dims();
        let mut data = Vec::with_capacity(images.len() * c * h * w);
        for img in images {
            data.extend_from_slice(&img.data);
        }
        Batch {
            images: Tensor::new(vec![images.len(), c, h, w], data).expect("consistent dims"),
            labels,
            indices,
        }
    }

    /// Fixed-order batches without augmentation.
    pub fn eval_batches(&self, batch_size: usize) -> Result<Vec<Batch>> {
        if batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        let order: Vec<usize> = (0..self.len()).collect();
        Ok(order
            .chunks(batch_size)
            .map(|idx| {
                let imgs: Vec<Image> = idx.iter().map(|&i| self.images[i].clone()).collect();
                self.stack(&imgs, idx.iter().map(|&i| self.labels[i]).collect(), idx.to_vec())
            })
            .collect())
    }

    /// Shuffled, augmented batches for one epoch. Each sample's augmentation
    /// draws come from its own stream keyed by `(aug.seed, epoch_seed, index)`.
    pub fn make_batches(&self, batch_size: usize, aug: &AugmentConfig, epoch_seed: u64) -> Result<Vec<Batch>> {
        if batch_size < 2 {
            return Err(Error::InvalidArgument(format!("batch_size must be at least 2, got {batch_size}")));
        }
        if self.is_empty() {
            return Err(Error::EmptyBatch);
        }
        aug.validate()?;
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.shuffle(&mut rng::stream(aug.seed, &[epoch_seed]));

        let mut batches = Vec::with_capacity(order.len().div_ceil(batch_size));
        for idx in order.chunks(batch_size) {
            let mut rngs: Vec<_> = idx.iter().map(|&i| rng::stream(aug.seed, &[epoch_seed, i as u64 + 1])).collect();
            let mut imgs = Vec::with_capacity(idx.len());
            for (&i, r) in idx.iter().zip(rngs.iter_mut()) {
                imgs.push(augment_one(&self.images[i], aug, r)?);
            }
            let mut labels: Vec<f64> = idx.iter().map(|&i| self.labels[i]).collect();
            if idx.len() > 1 && aug.p_cutmix > 0.0 {
                let pre = imgs.clone();
                let pre_labels = labels.clone();
                for (k, r) in rngs.iter_mut().enumerate() {
                    if r.gen::<f64>() < aug.p_cutmix {
                        let mut partner = r.gen_range(0..idx.len() - 1);
                        if partner >= k {
                            partner += 1;
                        }
                        let (img, y) = cutmix(&pre[k], pre_labels[k], &pre[partner], pre_labels[partner], r)?;
                        imgs[k] = img;
                        labels[k] = y;
                    }
                }
            }
            batches.push(self.stack(&imgs, labels, idx.to_vec()));
        }
        Ok(batches)
    }
}

fn augment_one<R: Rng>(img: &Image, aug: &AugmentConfig, r: &mut R) -> Result<Image> {
    let mut out = img.clone();
    if r.gen::<f64>() < aug.p_flip {
        out = hflip(&out);
    }
    if r.gen::<f64>() < aug.p_blur {
        let (lo, hi) = aug.blur_sigma_range;
        out = gaussian_blur(&out, r.gen_range(lo..=hi))?;
    }
    if r.gen::<f64>() < aug.p_jpeg {
        let (lo, hi) = aug.jpeg_quality_range;
        out = jpeg_proxy(&out, r.gen_range(lo..=hi))?;
    }
    Ok(out)
}
