//! Generator losses: pixel content, adversarial, perceptual and their weighted sum.

mod perceptual;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

pub use perceptual::{
    load_extractor, perceptual_loss, FeatureExtractor, IdentityExtractor, Vgg19Extractor,
    IMAGENET_MEAN, IMAGENET_STD,
};

use crate::error::{invalid, shape, Error, Result};
use crate::image::Image;
use crate::nn::log_sigmoid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adversarial: f64,
    pub perceptual: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            adversarial: 1.0,
            perceptual: 0.02,
        }
    }
}

impl LossWeights {
    pub fn new(adversarial: f64, perceptual: f64) -> Result<Self> {
        if !(adversarial >= 0.0 && perceptual >= 0.0) {
            return Err(invalid("loss weights must be non-negative"));
        }
        Ok(Self {
            adversarial,
            perceptual,
        })
    }
}

fn check_same(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(shape(format!(
            "loss inputs {:?} and {:?} differ",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}

/// Mean absolute element difference, as a scalar tensor.
pub fn content_loss(generated: &Tensor, target: &Tensor) -> Result<Tensor> {
    check_same(generated, target)?;
    Ok((generated - target)?.abs()?.mean_all()?)
}

pub fn content_loss_images(generated: &Image, target: &Image) -> Result<f64> {
    generated.same_dims(target)?;
    let n = generated.data().len() as f64;
    Ok(generated
        .data()
        .iter()
        .zip(target.data())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / n)
}

/// `1 - ln(score)` for a discriminator probability in (0, 1].
pub fn adversarial_loss(score: f64) -> Result<f64> {
    if !(score > 0.0 && score <= 1.0) {
        return Err(Error::Domain(format!(
            "adversarial loss needs a score in (0, 1], got {score}"
        )));
    }
    Ok(1.0 - score.ln())
}

/// Batch mean of `1 - ln σ(logit)`, computed without forming the probability.
pub fn adversarial_loss_from_logits(logits: &Tensor) -> Result<Tensor> {
    Ok(log_sigmoid(logits)?.neg()?.mean_all()?.affine(1.0, 1.0)?)
}

pub fn generator_loss(
    content: f64,
    adversarial: f64,
    perceptual: f64,
    weights: LossWeights,
) -> Result<f64> {
    for (name, v) in [
        ("content", content),
        ("adversarial", adversarial),
        ("perceptual", perceptual),
    ] {
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("{name} loss is {v}")));
        }
    }
    Ok(content + weights.adversarial * adversarial + weights.perceptual * perceptual)
}

/// Tensor form of [`generator_loss`] for backpropagation.
pub fn generator_loss_tensor(
    content: &Tensor,
    adversarial: &Tensor,
    perceptual: &Tensor,
    weights: LossWeights,
) -> Result<Tensor> {
    let adv = adversarial.affine(weights.adversarial, 0.0)?;
    let perc = perceptual.affine(weights.perceptual, 0.0)?;
    Ok(((content + adv)? + perc)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use candle_core::{DType, Device};

    #[test]
    fn content_closed_forms() {
        let zeros = Image::filled(3, 4, [0.0; 3]).unwrap();
        let ones = Image::filled(3, 4, [1.0; 3]).unwrap();
        assert_eq!(content_loss_images(&zeros, &ones).unwrap(), 1.0);
        assert_eq!(content_loss_images(&ones, &ones).unwrap(), 0.0);
        let a = Tensor::zeros((1, 3, 4, 4), DType::F64, &Device::Cpu).unwrap();
        let b = a.ones_like().unwrap();
        let v: f64 = content_loss(&a, &b).unwrap().to_scalar().unwrap();
        assert_eq!(v, 1.0);
        let c = Tensor::zeros((1, 3, 4, 2), DType::F64, &Device::Cpu).unwrap();
        assert!(content_loss(&a, &c).is_err());
    }

    #[test]
    fn adversarial_closed_forms() {
        assert_eq!(adversarial_loss(1.0).unwrap(), 1.0);
        assert!((adversarial_loss((-1.0f64).exp()).unwrap() - 2.0).abs() < 1e-15);
        assert!(matches!(adversarial_loss(0.0), Err(Error::Domain(_))));
        assert!(adversarial_loss(1.5).is_err());
    }

    #[test]
    fn adversarial_logit_form_matches_probability_form() {
        let logits = [-3.0, -0.2, 0.0, 1.7];
        let t = Tensor::new(&logits, &Device::Cpu).unwrap();
        let got: f64 = adversarial_loss_from_logits(&t)
            .unwrap()
            .to_scalar()
            .unwrap();
        let want = logits
            .iter()
            .map(|&x: &f64| adversarial_loss(1.0 / (1.0 + (-x).exp())).unwrap())
            .sum::<f64>()
            / 4.0;
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn weighted_sum() {
        let w = LossWeights::default();
        assert_eq!(generator_loss(0.0, 1.0, 0.0, w).unwrap(), 1.0);
        assert!((generator_loss(0.5, 2.0, 10.0, w).unwrap() - 2.7).abs() < 1e-12);
        let zero = LossWeights::new(0.0, 0.0).unwrap();
        assert_eq!(generator_loss(0.3, 5.0, 9.0, zero).unwrap(), 0.3);
        assert!(matches!(
            generator_loss(f64::NAN, 0.0, 0.0, w),
            Err(Error::NonFinite(m)) if m.contains("content")
        ));
        assert!(LossWeights::new(-1.0, 0.0).is_err());
    }
}
