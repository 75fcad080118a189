//! The three text-conditioned generators and the model wrapper that pairs one with its
//! text encoder and vocabulary.

mod backbone;
mod heads;
mod models;

use std::collections::BTreeSet;

use candle_core::{DType, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use backbone::{Backbone, BackboneConfig, Encoded};
pub use heads::{combine, one_hot_argmax, Readout, WeightHead};
pub(crate) use models::tile as tile_vectors;
pub use models::{BucketGenerator, EndToEndGenerator, FilterBankGenerator, Generated};

use crate::data::{tokenize, TextDescription, Vocabulary};
use crate::error::{invalid, Error, Result};
use crate::image::{images_to_tensor, resize_for_model, tensor_to_image, Image};
use crate::nn::{ParamBuilder, ParamStore};
use crate::text::{TextEncoder, TextEncoderConfig, TextVector, TokenDependencyGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Bucket,
    E2e,
    Filterbank,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::Bucket => "bucket",
            GeneratorKind::E2e => "e2e",
            GeneratorKind::Filterbank => "filterbank",
        }
    }
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bucket" => Ok(Self::Bucket),
            "e2e" | "end-to-end" => Ok(Self::E2e),
            "filterbank" | "filter-bank" => Ok(Self::Filterbank),
            other => Err(invalid(format!(
                "unknown model kind {other:?} (expected bucket, e2e or filterbank)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F32,
    F64,
}

impl Precision {
    pub fn dtype(self) -> DType {
        match self {
            Precision::F32 => DType::F32,
            Precision::F64 => DType::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub kind: GeneratorKind,
    pub backbone: BackboneConfig,
    /// Number of buckets or filters; ignored by the end-to-end model.
    pub branches: usize,
    /// Spatial size of the bottleneck filters.
    pub filter_kernel: usize,
    pub text: TextEncoderConfig,
    #[serde(default)]
    pub precision: Precision,
}

impl ModelConfig {
    /// Full-size configuration with five branches.
    pub fn full(kind: GeneratorKind, vocab_size: usize) -> Self {
        Self {
            kind,
            backbone: BackboneConfig::full(),
            branches: 5,
            filter_kernel: 3,
            text: TextEncoderConfig::new(vocab_size),
            precision: Precision::F32,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.kind != GeneratorKind::E2e && self.branches == 0 {
            return Err(invalid(
                "bucket and filter-bank models need at least one branch",
            ));
        }
        if self.text.vocab_size < 2 || self.text.hidden == 0 || self.text.embed_dim == 0 {
            return Err(invalid("text encoder dimensions must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum Generator {
    Bucket(BucketGenerator),
    EndToEnd(EndToEndGenerator),
    FilterBank(FilterBankGenerator),
}

/// A generator, its text encoder, the vocabulary it was trained with and all parameters.
#[derive(Debug, Clone)]
pub struct EditModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub text_encoder: TextEncoder,
    pub generator: Generator,
}

/// Edited image plus the branch weights that produced it.
#[derive(Debug, Clone)]
pub struct EditOutput {
    pub image: Image,
    pub weights: Option<Vec<f64>>,
}

impl EditModel {
    /// Freshly initialized model; identical seeds give identical parameters.
    pub fn new(config: ModelConfig, vocab: Vocabulary, seed: u64) -> Result<Self> {
        let store = ParamStore::new(config.precision.dtype());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::build(config, vocab, store, &mut rng)
    }

    /// Rebuilds a model around existing parameters. Every stored tensor must be used.
    pub fn from_store(config: ModelConfig, vocab: Vocabulary, store: ParamStore) -> Result<Self> {
        let before: BTreeSet<String> = store.names().map(str::to_owned).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let model = Self::build(config, vocab, store, &mut rng)?;
        let after: BTreeSet<String> = model.store.names().map(str::to_owned).collect();
        if let Some(missing) = after.difference(&before).next() {
            return Err(Error::Format(format!(
                "parameter {missing} missing from checkpoint"
            )));
        }
        Ok(model)
    }

    fn build(
        config: ModelConfig,
        vocab: Vocabulary,
        mut store: ParamStore,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        config.validate()?;
        if config.text.vocab_size != vocab.len() {
            return Err(invalid(format!(
                "config expects {} vocabulary entries, vocabulary has {}",
                config.text.vocab_size,
                vocab.len()
            )));
        }
        let text_dim = config.text.output_dim();
        let mut pb = ParamBuilder::new(&mut store, rng);
        let text_encoder = TextEncoder::new(&mut pb.pp("text"), config.text)?;
        let generator = match config.kind {
            GeneratorKind::Bucket => Generator::Bucket(BucketGenerator::new(
                &mut pb,
                &config.backbone,
                config.branches,
                text_dim,
            )?),
            GeneratorKind::E2e => {
                Generator::EndToEnd(EndToEndGenerator::new(&mut pb, &config.backbone, text_dim)?)
            }
            GeneratorKind::Filterbank => Generator::FilterBank(FilterBankGenerator::new(
                &mut pb,
                &config.backbone,
                config.branches,
                config.filter_kernel,
                text_dim,
            )?),
        };
        let _ = pb;
        Ok(Self {
            config,
            vocab,
            store,
            text_encoder,
            generator,
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.config.kind
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    /// Number of branches (1 for the end-to-end model).
    pub fn branches(&self) -> usize {
        match &self.generator {
            Generator::EndToEnd(_) => 1,
            _ => self.config.branches,
        }
    }

    pub fn tokenize(&self, text: &str) -> Result<TextDescription> {
        tokenize(text, &self.vocab)
    }

    /// Encodes each description (with its optional dependency graph) into an `[N, T]` batch.
    pub fn encode_texts(
        &self,
        descs: &[TextDescription],
        graphs: &[Option<&TokenDependencyGraph>],
    ) -> Result<Tensor> {
        let vectors = descs
            .iter()
            .enumerate()
            .map(|(i, d)| {
                self.text_encoder
                    .encode(d, graphs.get(i).copied().flatten())
            })
            .collect::<Result<Vec<TextVector>>>()?;
        TextVector::stack(&vectors)
    }

    pub fn forward(&self, images: &Tensor, text: &Tensor, mode: Readout) -> Result<Generated> {
        match &self.generator {
            Generator::Bucket(g) => g.forward(images, text, mode),
            Generator::EndToEnd(g) => g.forward(images, text),
            Generator::FilterBank(g) => g.forward(images, text, mode),
        }
    }

    /// Edits one image of any size: resizes to the model's grid, runs the generator and
    /// resizes back to the original dimensions.
    pub fn edit(
        &self,
        image: &Image,
        text: &str,
        mode: Readout,
        graph: Option<&TokenDependencyGraph>,
    ) -> Result<EditOutput> {
        let desc = self.tokenize(text)?;
        let (resized, (h, w)) = resize_for_model(image, self.config.backbone.multiple())?;
        let x = images_to_tensor(&[&resized], self.dtype(), self.store.device())?;
        let t = self.encode_texts(&[desc], &[graph])?;
        let out = self.forward(&x.detach(), &t.detach(), mode)?;
        let edited = tensor_to_image(&out.image, 0)?.resize(h, w)?;
        let weights = match out.weights {
            Some(wt) => Some(wt.to_dtype(DType::F64)?.get(0)?.to_vec1()?),
            None => None,
        };
        Ok(EditOutput {
            image: edited,
            weights,
        })
    }

    /// Output of filter `k` alone for a filter-bank model, at the input's original size.
    pub fn probe(&self, image: &Image, k: usize) -> Result<Image> {
        let Generator::FilterBank(g) = &self.generator else {
            return Err(invalid(format!(
                "filter probing needs a filter-bank model, this is {}",
                self.kind().as_str()
            )));
        };
        let (resized, (h, w)) = resize_for_model(image, self.config.backbone.multiple())?;
        let x = images_to_tensor(&[&resized], self.dtype(), self.store.device())?;
        tensor_to_image(&g.probe(&x, k)?, 0)?.resize(h, w)
    }
}
