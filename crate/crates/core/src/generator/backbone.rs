use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Result};
use crate::nn::{instance_norm, leaky_relu, Conv2d, ConvTranspose2d, ParamBuilder};

const KERNEL: usize = 4;
const STRIDE: usize = 2;
const PADDING: usize = 1;

/// Encoder widths drive the whole U-shaped network; decoder widths mirror them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub encoder_widths: Vec<usize>,
    #[serde(default = "default_skips")]
    pub skips: bool,
}

fn default_skips() -> bool {
    true
}

impl BackboneConfig {
    /// The eight-stage network: 64-128-256-512-512-512-512-512.
    pub fn full() -> Self {
        Self {
            encoder_widths: vec![64, 128, 256, 512, 512, 512, 512, 512],
            skips: true,
        }
    }

    /// Scaled-down network for tests and desk-scale runs.
    pub fn miniature(widths: &[usize]) -> Self {
        Self {
            encoder_widths: widths.to_vec(),
            skips: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.encoder_widths.is_empty() || self.encoder_widths.contains(&0) {
            return Err(invalid(
                "backbone needs at least one stage of positive width",
            ));
        }
        Ok(())
    }

    pub fn stages(&self) -> usize {
        self.encoder_widths.len()
    }

    /// Input sides must be multiples of this (one halving per stage).
    pub fn multiple(&self) -> usize {
        1 << self.stages()
    }

    pub fn bottleneck_width(&self) -> usize {
        *self.encoder_widths.last().expect("validated non-empty")
    }

    /// Output channels of each decoder stage; the last stage emits RGB.
    pub fn decoder_output_widths(&self) -> Vec<usize> {
        let n = self.stages();
        (0..n)
            .map(|j| {
                if j + 1 == n {
                    3
                } else {
                    self.encoder_widths[n - 2 - j]
                }
            })
            .collect()
    }

    /// Input channels of each decoder stage, skip concatenation included.
    pub fn decoder_input_widths(&self) -> Vec<usize> {
        let n = self.stages();
        let outs = self.decoder_output_widths();
        (0..n)
            .map(|j| {
                if j == 0 {
                    self.encoder_widths[n - 1]
                } else if self.skips {
                    outs[j - 1] + self.encoder_widths[n - 1 - j]
                } else {
                    outs[j - 1]
                }
            })
            .collect()
    }
}

/// Encoder activations kept for the decoder: the bottleneck plus every shallower stage.
pub struct Encoded {
    pub bottleneck: Tensor,
    skips: Vec<Tensor>,
}

/// Conv-InstanceNorm-LeakyReLU encoder and transposed-conv decoder with depth-concatenated
/// skips from encoder stage `i` into decoder stage `N - i`.
#[derive(Debug, Clone)]
pub struct Backbone {
    pub config: BackboneConfig,
    encoder: Vec<Conv2d>,
    decoder: Vec<ConvTranspose2d>,
}

impl Backbone {
    pub fn new(pb: &mut ParamBuilder<'_>, config: &BackboneConfig) -> Result<Self> {
        config.validate()?;
        let mut encoder = Vec::with_capacity(config.stages());
        let mut in_ch = 3;
        for (i, &w) in config.encoder_widths.iter().enumerate() {
            encoder.push(Conv2d::new(
                &mut pb.pp(format!("enc.{i}")),
                in_ch,
                w,
                KERNEL,
                STRIDE,
                PADDING,
                true,
            )?);
            in_ch = w;
        }
        let ins = config.decoder_input_widths();
        let outs = config.decoder_output_widths();
        let mut decoder = Vec::with_capacity(config.stages());
        for j in 0..config.stages() {
            decoder.push(ConvTranspose2d::new(
                &mut pb.pp(format!("dec.{j}")),
                ins[j],
                outs[j],
                KERNEL,
                STRIDE,
                PADDING,
            )?);
        }
        Ok(Self {
            config: config.clone(),
            encoder,
            decoder,
        })
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let (_, c, h, w) = x.dims4()?;
        let m = self.config.multiple();
        if c != 3 {
            return Err(shape(format!("expected RGB input, got {c} channels")));
        }
        if h % m != 0 || w % m != 0 {
            return Err(shape(format!(
                "input is {h}x{w}; both sides must be multiples of {m} (use resize_for_model)"
            )));
        }
        Ok(())
    }

    pub fn encode(&self, x: &Tensor) -> Result<Encoded> {
        self.check_input(x)?;
        let last = self.encoder.len() - 1;
        let mut skips = Vec::with_capacity(last);
        let mut h = x.clone();
        for (i, conv) in self.encoder.iter().enumerate() {
            h = conv.forward(&h)?;
            // Neither the first stage (raw pixels) nor the innermost (1×1 at full depth) is normalized.
            if i != 0 && i != last {
                h = instance_norm(&h)?;
            }
            h = leaky_relu(&h)?;
            if i != last {
                skips.push(h.clone());
            }
        }
        Ok(Encoded {
            bottleneck: h,
            skips,
        })
    }

    /// Decodes a (possibly transformed) bottleneck using the skips from `encoded`.
    /// Output is `[N, 3, H, W]` in [0, 1].
    pub fn decode(&self, bottleneck: &Tensor, encoded: &Encoded) -> Result<Tensor> {
        let n = self.decoder.len();
        let mut h = bottleneck.clone();
        for (j, deconv) in self.decoder.iter().enumerate() {
            if j > 0 && self.config.skips {
                h = Tensor::cat(&[&h, &encoded.skips[n - 1 - j]], 1)?;
            }
            h = deconv.forward(&h)?;
            if j + 1 < n {
                h = leaky_relu(&instance_norm(&h)?)?;
            }
        }
        Ok(((h.tanh()? + 1.0)? * 0.5)?)
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let enc = self.encode(x)?;
        self.decode(&enc.bottleneck, &enc)
    }

    /// Like [`forward`](Self::forward) but lets `hook` rewrite the bottleneck before decoding.
    pub fn forward_with_hook(
        &self,
        x: &Tensor,
        hook: impl FnOnce(&Tensor) -> Result<Tensor>,
    ) -> Result<Tensor> {
        let enc = self.encode(x)?;
        let b = hook(&enc.bottleneck)?;
        if b.dims() != enc.bottleneck.dims() {
            return Err(shape(format!(
                "bottleneck hook changed shape {:?} -> {:?}",
                enc.bottleneck.dims(),
                b.dims()
            )));
        }
        self.decode(&b, &enc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_config_matches_the_width_tables() {
        let c = BackboneConfig::full();
        assert_eq!(
            c.decoder_input_widths(),
            vec![512, 1024, 1024, 1024, 1024, 512, 256, 128]
        );
        assert_eq!(c.multiple(), 256);
        assert_eq!(c.bottleneck_width(), 512);
    }

    #[test]
    fn no_skip_decoder_widths() {
        let c = BackboneConfig {
            encoder_widths: vec![4, 8, 16],
            skips: false,
        };
        assert_eq!(c.decoder_input_widths(), vec![16, 8, 4]);
        assert_eq!(c.decoder_output_widths(), vec![8, 4, 3]);
    }
}
