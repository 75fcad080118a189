use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::TextDescription;
use crate::error::{invalid, shape, Result};
use crate::generator::tile_vectors;
use crate::nn::{instance_norm, leaky_relu, Conv2d, ParamBuilder, ParamStore};
use crate::text::{TextEncoder, TextEncoderConfig, TextVector};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscriminatorConfig {
    pub widths: Vec<usize>,
    /// Number of stages applied before the text vector is concatenated.
    pub text_after: usize,
    pub text: TextEncoderConfig,
}

impl DiscriminatorConfig {
    /// 64-128-256-512 with text joined after the second stage.
    pub fn full(vocab_size: usize) -> Self {
        Self {
            widths: vec![64, 128, 256, 512],
            text_after: 2,
            text: TextEncoderConfig::new(vocab_size),
        }
    }

    pub fn multiple(&self) -> usize {
        1 << self.widths.len()
    }

    fn text_stage(&self) -> usize {
        self.text_after.min(self.widths.len())
    }
}

/// Scores (input, candidate, text) triples. The image pair enters as 6 channels; after
/// `text_after` stages the tiled text vector is depth-concatenated; a 1×1 head gives a patch
/// logit map that is averaged into one logit per sample.
#[derive(Debug, Clone)]
pub struct TextAwareDiscriminator {
    pub config: DiscriminatorConfig,
    stages: Vec<Conv2d>,
    pub head: Conv2d,
}

impl TextAwareDiscriminator {
    pub fn new(pb: &mut ParamBuilder<'_>, config: &DiscriminatorConfig) -> Result<Self> {
        if config.widths.is_empty() {
            return Err(invalid("discriminator needs at least one stage"));
        }
        let text_dim = config.text.output_dim();
        let mut stages = Vec::new();
        let mut in_ch = 6;
        for (i, &w) in config.widths.iter().enumerate() {
            if i == config.text_stage() {
                in_ch += text_dim;
            }
            stages.push(Conv2d::new(
                &mut pb.pp(format!("stage.{i}")),
                in_ch,
                w,
                4,
                2,
                1,
                true,
            )?);
            in_ch = w;
        }
        if config.text_stage() == config.widths.len() {
            in_ch += text_dim;
        }
        let head = Conv2d::new(&mut pb.pp("head"), in_ch, 1, 1, 1, 0, true)?;
        Ok(Self {
            config: config.clone(),
            stages,
            head,
        })
    }

    /// One logit per sample, `[N]`.
    pub fn logits(&self, input: &Tensor, candidate: &Tensor, text: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = input.dims4()?;
        if candidate.dims4()? != (n, c, h, w) {
            return Err(shape(format!(
                "input {:?} and candidate {:?} differ",
                input.dims(),
                candidate.dims()
            )));
        }
        let m = self.config.multiple();
        if h % m != 0 || w % m != 0 {
            return Err(shape(format!(
                "discriminator input {h}x{w} must be a multiple of {m}"
            )));
        }
        let mut x = Tensor::cat(&[input, candidate], 1)?;
        for (i, conv) in self.stages.iter().enumerate() {
            if i == self.config.text_stage() {
                x = Tensor::cat(&[&x, &tile_vectors(text, &x)?], 1)?;
            }
            x = conv.forward(&x)?;
            if i > 0 {
                x = instance_norm(&x)?;
            }
            x = leaky_relu(&x)?;
        }
        if self.config.text_stage() == self.stages.len() {
            x = Tensor::cat(&[&x, &tile_vectors(text, &x)?], 1)?;
        }
        let patches = self.head.forward(&x)?;
        Ok(patches.flatten_from(1)?.mean(1)?)
    }

    /// Probabilities in (0, 1), `[N]`.
    pub fn scores(&self, input: &Tensor, candidate: &Tensor, text: &Tensor) -> Result<Tensor> {
        Ok(candle_nn::ops::sigmoid(
            &self.logits(input, candidate, text)?,
        )?)
    }
}

/// Discriminator network with its own text encoder and parameters.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub store: ParamStore,
    pub text_encoder: TextEncoder,
    pub net: TextAwareDiscriminator,
}

impl Discriminator {
    pub fn new(config: &DiscriminatorConfig, dtype: DType, seed: u64) -> Result<Self> {
        let mut store = ParamStore::new(dtype);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut pb = ParamBuilder::new(&mut store, &mut rng);
        let text_encoder = TextEncoder::new(&mut pb.pp("text"), config.text)?;
        let net = TextAwareDiscriminator::new(&mut pb.pp("net"), config)?;
        Ok(Self {
            store,
            text_encoder,
            net,
        })
    }

    pub fn encode_texts(&self, descs: &[&TextDescription]) -> Result<Tensor> {
        let v = descs
            .iter()
            .map(|d| self.text_encoder.encode_bigru(d))
            .collect::<Result<Vec<_>>>()?;
        TextVector::stack(&v)
    }

    /// Zeroes the head so every score is exactly one half.
    pub fn zero_head(&self) -> Result<()> {
        for name in ["net.head.weight", "net.head.bias"] {
            let v = self.store.get(name).expect("head exists");
            self.store.set(name, &v.zeros_like()?)?;
        }
        Ok(())
    }
}
