use std::collections::HashMap;
use std::path::Path;

use candle_core::{DType, Device, Tensor};

use crate::error::{shape, Error, Result};

/// Channel statistics the classifier was trained with.
pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// Keeps the norm differentiable at zero while returning exactly 0 for identical inputs.
const NORM_EPS: f64 = 1e-24;

/// Maps `[N, 3, H, W]` images in [0, 1] to flat `[N, L]` features.
pub trait FeatureExtractor: Send + Sync {
    fn features(&self, images: &Tensor) -> Result<Tensor>;

    /// Smallest accepted height and width.
    fn min_size(&self) -> usize;

    fn name(&self) -> &'static str;
}

/// Pixels are the features. Used in tests and when no pretrained weights are available.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityExtractor;

impl FeatureExtractor for IdentityExtractor {
    fn features(&self, images: &Tensor) -> Result<Tensor> {
        Ok(images.flatten_from(1)?)
    }

    fn min_size(&self) -> usize {
        1
    }

    fn name(&self) -> &'static str {
        "identity"
    }
}

/// Frozen 19-layer VGG truncated after the first convolution of block 4.
///
/// Features are the rectified outputs of the first convolution in blocks 2, 3 and 4,
/// each flattened and concatenated. Weights use torchvision's `features.{i}` naming in a
/// safetensors file.
#[derive(Debug, Clone)]
pub struct Vgg19Extractor {
    convs: Vec<(Tensor, Tensor)>,
    mean: Tensor,
    std: Tensor,
}

/// (torchvision layer index, in, out) for every convolution up to conv4_1.
const VGG_CONVS: [(usize, usize, usize); 9] = [
    (0, 3, 64),
    (2, 64, 64),
    (5, 64, 128),
    (7, 128, 128),
    (10, 128, 256),
    (12, 256, 256),
    (14, 256, 256),
    (16, 256, 256),
    (19, 256, 512),
];
/// Pool after these conv positions.
const POOL_AFTER: [usize; 3] = [1, 3, 7];
/// Tap the rectified output at these conv positions.
const TAPS: [usize; 3] = [2, 4, 8];

impl Vgg19Extractor {
    pub fn load(path: impl AsRef<Path>, dtype: DType) -> Result<Self> {
        let path = path.as_ref();
        let tensors = candle_core::safetensors::load(path, &Device::Cpu)?;
        Self::from_tensors(&tensors, dtype)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))
    }

    pub fn from_tensors(tensors: &HashMap<String, Tensor>, dtype: DType) -> Result<Self> {
        let mut convs = Vec::new();
        for (idx, cin, cout) in VGG_CONVS {
            let get = |suffix: &str| -> Result<Tensor> {
                let name = format!("features.{idx}.{suffix}");
                let t = tensors
                    .get(&name)
                    .ok_or_else(|| Error::Format(format!("missing tensor {name}")))?;
                Ok(t.to_dtype(dtype)?)
            };
            let w = get("weight")?;
            let b = get("bias")?;
            if w.dims() != [cout, cin, 3, 3] || b.dims() != [cout] {
                return Err(Error::Format(format!(
                    "layer {idx} has shape {:?}, expected [{cout}, {cin}, 3, 3]",
                    w.dims()
                )));
            }
            convs.push((w, b.reshape((1, cout, 1, 1))?));
        }
        let mean = Tensor::new(&IMAGENET_MEAN, &Device::Cpu)?
            .to_dtype(dtype)?
            .reshape((1, 3, 1, 1))?;
        let std = Tensor::new(&IMAGENET_STD, &Device::Cpu)?
            .to_dtype(dtype)?
            .reshape((1, 3, 1, 1))?;
        Ok(Self { convs, mean, std })
    }
}

impl FeatureExtractor for Vgg19Extractor {
    fn features(&self, images: &Tensor) -> Result<Tensor> {
        let dtype = self.mean.dtype();
        let mut x = images
            .to_dtype(dtype)?
            .broadcast_sub(&self.mean)?
            .broadcast_div(&self.std)?;
        let mut taps = Vec::new();
        for (i, (w, b)) in self.convs.iter().enumerate() {
            x = x.conv2d(w, 1, 1, 1, 1)?.broadcast_add(b)?.relu()?;
            if TAPS.contains(&i) {
                taps.push(x.flatten_from(1)?);
            }
            if POOL_AFTER.contains(&i) {
                x = x.max_pool2d(2)?;
            }
        }
        Ok(Tensor::cat(&taps, 1)?.to_dtype(images.dtype())?)
    }

    fn min_size(&self) -> usize {
        8
    }

    fn name(&self) -> &'static str {
        "vgg19"
    }
}

/// VGG19 when `path` names a readable weight file, otherwise the identity stub with a warning.
pub fn load_extractor(path: Option<&Path>, dtype: DType) -> Box<dyn FeatureExtractor> {
    match path {
        Some(p) => match Vgg19Extractor::load(p, dtype) {
            Ok(v) => Box::new(v),
            Err(e) => {
                log::warn!("perceptual weights unavailable ({e}); using identity features");
                Box::new(IdentityExtractor)
            }
        },
        None => {
            log::warn!("no perceptual weights configured; using identity features");
            Box::new(IdentityExtractor)
        }
    }
}

/// Batch mean of `‖F(a) - F(b)‖₂ / L`, as a scalar tensor.
pub fn perceptual_loss(extractor: &dyn FeatureExtractor, a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.dims() != b.dims() {
        return Err(shape(format!(
            "loss inputs {:?} and {:?} differ",
            a.dims(),
            b.dims()
        )));
    }
    let (_, _, h, w) = a.dims4()?;
    let min = extractor.min_size();
    if h < min || w < min {
        return Err(shape(format!(
            "{} features need at least {min}x{min} inputs, got {h}x{w}",
            extractor.name()
        )));
    }
    let fa = extractor.features(a)?;
    let fb = extractor.features(b)?;
    let len = fa.dim(1)? as f64;
    let sq = (fa - fb)?.sqr()?.sum(1)?;
    let eps = NORM_EPS.sqrt();
    let norm = sq.affine(1.0, NORM_EPS)?.sqrt()?.affine(1.0, -eps)?;
    Ok(norm.mean_all()?.affine(1.0 / len, 0.0)?)
}
