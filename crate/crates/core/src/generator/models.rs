use candle_core::Tensor;

use super::backbone::{Backbone, BackboneConfig};
use super::heads::{combine, one_hot_argmax, Readout, WeightHead};
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ParamBuilder};

/// Result of a generator forward pass.
#[derive(Debug, Clone)]
pub struct Generated {
    /// `[N, 3, H, W]` in [0, 1].
    pub image: Tensor,
    /// `[N, K]` branch weights, absent for the end-to-end model.
    pub weights: Option<Tensor>,
    /// Per-branch outputs, empty for the end-to-end model.
    pub branches: Vec<Tensor>,
}

fn read_out(weights: Tensor, branches: Vec<Tensor>, mode: Readout) -> Result<Generated> {
    let image = match mode {
        Readout::Fusion => combine(&weights, &branches)?,
        Readout::Argmax => combine(&one_hot_argmax(&weights)?, &branches)?,
    };
    Ok(Generated {
        image,
        weights: Some(weights),
        branches,
    })
}

/// K independent encoder-decoders mixed by text-derived weights.
#[derive(Debug, Clone)]
pub struct BucketGenerator {
    pub backbones: Vec<Backbone>,
    pub head: WeightHead,
}

impl BucketGenerator {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        backbone: &BackboneConfig,
        buckets: usize,
        text_dim: usize,
    ) -> Result<Self> {
        let backbones = (0..buckets)
            .map(|k| Backbone::new(&mut pb.pp(format!("bucket.{k}")), backbone))
            .collect::<Result<_>>()?;
        Ok(Self {
            backbones,
            head: WeightHead::new(&mut pb.pp("head"), text_dim, buckets)?,
        })
    }

    pub fn forward(&self, images: &Tensor, text: &Tensor, mode: Readout) -> Result<Generated> {
        let weights = self.head.weights(text)?;
        let branches = self
            .backbones
            .iter()
            .map(|b| b.forward(images))
            .collect::<Result<Vec<_>>>()?;
        read_out(weights, branches, mode)
    }
}

/// Single encoder-decoder whose bottleneck is depth-concatenated with the tiled text vector
/// and projected back to bottleneck width by a 1×1 convolution.
#[derive(Debug, Clone)]
pub struct EndToEndGenerator {
    pub backbone: Backbone,
    pub fuse: Conv2d,
}

impl EndToEndGenerator {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        backbone: &BackboneConfig,
        text_dim: usize,
    ) -> Result<Self> {
        let width = backbone.bottleneck_width();
        Ok(Self {
            backbone: Backbone::new(&mut pb.pp("backbone"), backbone)?,
            fuse: Conv2d::new(&mut pb.pp("fuse"), width + text_dim, width, 1, 1, 0, true)?,
        })
    }

    pub fn forward(&self, images: &Tensor, text: &Tensor) -> Result<Generated> {
        let image = self.backbone.forward_with_hook(images, |b| {
            let tiled = tile(text, b)?;
            self.fuse.forward(&Tensor::cat(&[b, &tiled], 1)?)
        })?;
        Ok(Generated {
            image,
            weights: None,
            branches: Vec::new(),
        })
    }
}

/// Repeats `[N, T]` vectors over the spatial extent of `like` (`[N, C, h, w]`).
pub(crate) fn tile(vectors: &Tensor, like: &Tensor) -> Result<Tensor> {
    let (n, _, h, w) = like.dims4()?;
    let (vn, t) = vectors.dims2()?;
    if vn != n {
        return Err(Error::Shape(format!("{vn} text vectors for {n} images")));
    }
    Ok(vectors
        .reshape((n, t, 1, 1))?
        .broadcast_as((n, t, h, w))?
        .contiguous()?)
}

/// Shared encoder-decoder with K bottleneck convolution filters; each filter yields a branch.
#[derive(Debug, Clone)]
pub struct FilterBankGenerator {
    pub backbone: Backbone,
    pub filters: Vec<Conv2d>,
    pub head: WeightHead,
}

impl FilterBankGenerator {
    pub fn new(
        pb: &mut ParamBuilder<'_>,
        backbone: &BackboneConfig,
        filters: usize,
        kernel: usize,
        text_dim: usize,
    ) -> Result<Self> {
        if kernel.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "filter kernel must be odd to preserve size, got {kernel}"
            )));
        }
        let width = backbone.bottleneck_width();
        let count = filters;
        let filters = (0..count)
            .map(|k| {
                Conv2d::new(
                    &mut pb.pp(format!("filter.{k}")),
                    width,
                    width,
                    kernel,
                    1,
                    kernel / 2,
                    false,
                )
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            backbone: Backbone::new(&mut pb.pp("backbone"), backbone)?,
            filters,
            head: WeightHead::new(&mut pb.pp("head"), text_dim, count)?,
        })
    }

    pub fn forward(&self, images: &Tensor, text: &Tensor, mode: Readout) -> Result<Generated> {
        let weights = self.head.weights(text)?;
        let enc = self.backbone.encode(images)?;
        let branches = self
            .filters
            .iter()
            .map(|f| self.backbone.decode(&f.forward(&enc.bottleneck)?, &enc))
            .collect::<Result<Vec<_>>>()?;
        read_out(weights, branches, mode)
    }

    /// Output of filter `k` alone.
    pub fn probe(&self, images: &Tensor, k: usize) -> Result<Tensor> {
        let filter = self.filters.get(k).ok_or(Error::Index {
            index: k,
            limit: self.filters.len(),
        })?;
        let enc = self.backbone.encode(images)?;
        self.backbone
            .decode(&filter.forward(&enc.bottleneck)?, &enc)
    }
}
