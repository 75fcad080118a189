use std::collections::BTreeSet;
use std::path::PathBuf;

use candle_core::{DType, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{EditPair, TextDescription};
use crate::discriminator::{
    build_cooccurrence, sample_random_index, CandidateSource, Discriminator, DiscriminatorConfig,
    Label, TextSource, UnigramCooccurrence, DEFAULT_TOP_M, INSTANCE_PATTERN,
};
use crate::error::{invalid, Error, Result};
use crate::generator::{EditModel, Readout};
use crate::image::{images_to_tensor, resize_for_model, Image};
use crate::losses::{
    adversarial_loss_from_logits, content_loss, generator_loss_tensor, load_extractor,
    perceptual_loss, FeatureExtractor, LossWeights,
};
use crate::nn::log_sigmoid;
use crate::text::TextEncoderKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Epochs per bucket when pretraining bucket backbones; `None` uses `epochs`.
    pub pretrain_epochs: Option<usize>,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub lr_patience: usize,
    pub lr_floor: f64,
    pub seed: u64,
    pub weights: LossWeights,
    pub identity_fraction: f64,
    /// Writes zero wall-clock times so repeated runs give identical histories.
    pub deterministic: bool,
    pub readout: Readout,
    pub disc_widths: Vec<usize>,
    pub disc_text_after: usize,
    pub top_m: usize,
    /// Safetensors file with VGG19 weights; the identity extractor is used without it.
    pub perceptual_weights: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            pretrain_epochs: None,
            batch_size: 4,
            learning_rate: 0.001,
            lr_patience: 1,
            lr_floor: 1e-6,
            seed: 0,
            weights: LossWeights::default(),
            identity_fraction: 0.15,
            deterministic: false,
            readout: Readout::Fusion,
            disc_widths: vec![64, 128, 256, 512],
            disc_text_after: 2,
            top_m: DEFAULT_TOP_M,
            perceptual_weights: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(invalid("learning rate must be finite and non-negative"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(invalid("epochs and batch size must be at least 1"));
        }
        if self.disc_widths.is_empty() {
            return Err(invalid("discriminator needs at least one stage"));
        }
        LossWeights::new(self.weights.adversarial, self.weights.perceptual)?;
        Ok(())
    }

    /// Discriminator matching `model`'s vocabulary and text sizes, with a BiGRU encoder.
    pub fn discriminator_config(&self, model: &EditModel) -> DiscriminatorConfig {
        let mut text = model.config.text;
        text.kind = TextEncoderKind::Bigru;
        DiscriminatorConfig {
            widths: self.disc_widths.clone(),
            text_after: self.disc_text_after,
            text,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepMetrics {
    pub d_loss: f64,
    pub g_loss: f64,
    pub content: f64,
    pub adversarial: f64,
    pub perceptual: f64,
}

pub(crate) fn adam(vars: Vec<candle_core::Var>, lr: f64) -> Result<AdamW> {
    Ok(AdamW::new(
        vars,
        ParamsAdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        },
    )?)
}

pub(crate) fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(DType::F64)?.to_scalar::<f64>()?)
}

fn finite(name: &str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(format!("{name} loss is {v}")))
    }
}

/// Resizes every pair onto a common grid that is a multiple of `multiple` and stacks them
/// into `[N, 3, H, W]` input and target tensors.
pub(crate) fn batch_tensors(
    pairs: &[&EditPair],
    multiple: usize,
    dtype: DType,
) -> Result<(Tensor, Tensor)> {
    let first = pairs.first().ok_or_else(|| invalid("empty batch"))?;
    let (grid, _) = resize_for_model(&first.input, multiple)?;
    let (h, w) = grid.dims();
    let mut inputs: Vec<Image> = Vec::with_capacity(pairs.len());
    let mut targets: Vec<Image> = Vec::with_capacity(pairs.len());
    for p in pairs {
        inputs.push(p.input.resize(h, w)?);
        targets.push(p.target.resize(h, w)?);
    }
    let device = candle_core::Device::Cpu;
    let x = images_to_tensor(&inputs.iter().collect::<Vec<_>>(), dtype, &device)?;
    let y = images_to_tensor(&targets.iter().collect::<Vec<_>>(), dtype, &device)?;
    Ok((x, y))
}

/// Text given to the discriminator during a step.
pub(crate) enum DiscText<'a> {
    /// Matching and mismatched descriptions: the full four-instance pattern.
    Described {
        matching: &'a [TextDescription],
        random: &'a [TextDescription],
    },
    /// No text: zero vectors and a two-instance real/fake pattern.
    Zero,
}

fn signed_bce_sum(logits: &Tensor, labels: &[Label]) -> Result<Tensor> {
    let signs: Vec<f64> = labels
        .iter()
        .map(|l| if *l == Label::Positive { 1.0 } else { -1.0 })
        .collect();
    let signs = Tensor::new(signs.as_slice(), logits.device())?.to_dtype(logits.dtype())?;
    Ok(log_sigmoid(&(logits * signs)?)?.neg()?.sum_all()?)
}

/// Discriminator loss for a batch, summed over instances and averaged over pairs.
pub(crate) fn batch_discriminator_loss(
    disc: &Discriminator,
    x: &Tensor,
    y: &Tensor,
    generated: &Tensor,
    text: &DiscText<'_>,
) -> Result<Tensor> {
    let n = x.dim(0)?;
    let (cands, texts, labels): (Vec<Tensor>, Vec<Tensor>, Vec<Label>) = match text {
        DiscText::Described { matching, random } => {
            let m: Vec<&TextDescription> = matching.iter().collect();
            let r: Vec<&TextDescription> = random.iter().collect();
            let tm = disc.encode_texts(&m)?;
            let tr = disc.encode_texts(&r)?;
            let mut cands = Vec::new();
            let mut texts = Vec::new();
            let mut labels = Vec::new();
            for (cand, src, label) in INSTANCE_PATTERN {
                cands.push(match cand {
                    CandidateSource::GroundTruth => y.clone(),
                    CandidateSource::Generated => generated.clone(),
                });
                texts.push(match src {
                    TextSource::Description => tm.clone(),
                    TextSource::Random => tr.clone(),
                });
                labels.extend(std::iter::repeat_n(label, n));
            }
            (cands, texts, labels)
        }
        DiscText::Zero => {
            let zero = Tensor::zeros(
                (n, disc.net.config.text.output_dim()),
                x.dtype(),
                x.device(),
            )?;
            let mut labels = vec![Label::Positive; n];
            labels.extend(std::iter::repeat_n(Label::Negative, n));
            (
                vec![y.clone(), generated.clone()],
                vec![zero.clone(), zero],
                labels,
            )
        }
    };
    let copies = cands.len();
    let inputs = Tensor::cat(&vec![x.clone(); copies], 0)?;
    let cands = Tensor::cat(&cands, 0)?;
    let texts = Tensor::cat(&texts, 0)?;
    let logits = disc.net.logits(&inputs, &cands, &texts)?;
    Ok((signed_bce_sum(&logits, &labels)? / n as f64)?)
}

/// Generator loss terms for a batch; `matching` of `None` gives the discriminator zero text.
pub(crate) struct GeneratorTerms {
    pub content: Tensor,
    pub adversarial: Tensor,
    pub perceptual: Tensor,
    pub total: Tensor,
}

pub(crate) fn generator_terms(
    disc: &Discriminator,
    extractor: &dyn FeatureExtractor,
    weights: LossWeights,
    x: &Tensor,
    y: &Tensor,
    generated: &Tensor,
    matching: Option<&[TextDescription]>,
) -> Result<GeneratorTerms> {
    let n = x.dim(0)?;
    let text = match matching {
        Some(m) => disc.encode_texts(&m.iter().collect::<Vec<_>>())?.detach(),
        None => Tensor::zeros(
            (n, disc.net.config.text.output_dim()),
            x.dtype(),
            x.device(),
        )?,
    };
    let logits = disc.net.logits(x, generated, &text)?;
    let adversarial = adversarial_loss_from_logits(&logits)?;
    let content = content_loss(generated, y)?;
    let perceptual = perceptual_loss(extractor, generated, y)?;
    let total = generator_loss_tensor(&content, &adversarial, &perceptual, weights)?;
    Ok(GeneratorTerms {
        content,
        adversarial,
        perceptual,
        total,
    })
}

/// One discriminator update then one generator update.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gan_step(
    generate: &dyn Fn() -> Result<Tensor>,
    disc: &Discriminator,
    d_opt: &mut AdamW,
    g_opt: &mut AdamW,
    extractor: &dyn FeatureExtractor,
    weights: LossWeights,
    x: &Tensor,
    y: &Tensor,
    text: DiscText<'_>,
) -> Result<StepMetrics> {
    let generated = generate()?;
    let d_loss = batch_discriminator_loss(disc, x, y, &generated.detach(), &text)?;
    let d_value = finite("discriminator", scalar(&d_loss)?)?;
    d_opt.step(&d_loss.backward()?)?;
    let matching = match text {
        DiscText::Described { matching, .. } => Some(matching),
        DiscText::Zero => None,
    };
    let terms = generator_terms(disc, extractor, weights, x, y, &generated, matching)?;
    let content = finite("content", scalar(&terms.content)?)?;
    let adversarial = finite("adversarial", scalar(&terms.adversarial)?)?;
    let perceptual = finite("perceptual", scalar(&terms.perceptual)?)?;
    let g_loss = finite("generator", scalar(&terms.total)?)?;
    g_opt.step(&terms.total.backward()?)?;
    Ok(StepMetrics {
        d_loss: d_value,
        g_loss,
        content,
        adversarial,
        perceptual,
    })
}

/// Owns a generator, its discriminator and both optimizers.
pub struct Trainer {
    pub config: TrainConfig,
    pub model: EditModel,
    pub disc: Discriminator,
    extractor: Box<dyn FeatureExtractor>,
    g_opt: AdamW,
    d_opt: AdamW,
    texts: Vec<TextDescription>,
    cooc: UnigramCooccurrence,
    multiple: usize,
}

impl Trainer {
    /// `corpus` supplies the descriptions random negatives are drawn from.
    pub fn new(config: TrainConfig, model: EditModel, corpus: &[EditPair]) -> Result<Self> {
        config.validate()?;
        let disc_config = config.discriminator_config(&model);
        let disc = Discriminator::new(&disc_config, model.dtype(), config.seed ^ 0xD15C)?;
        let distinct: BTreeSet<&str> = corpus
            .iter()
            .flat_map(|p| p.descriptions.iter().map(String::as_str))
            .collect();
        let texts = distinct
            .into_iter()
            .map(|d| model.tokenize(d))
            .collect::<Result<Vec<_>>>()?;
        if texts.len() < 2 {
            return Err(invalid(
                "training needs at least two distinct descriptions to draw mismatched text",
            ));
        }
        let cooc = build_cooccurrence(&texts, config.top_m)?;
        let extractor = load_extractor(config.perceptual_weights.as_deref(), model.dtype());
        let g_opt = adam(model.store.trainable_vars(), config.learning_rate)?;
        let d_opt = adam(disc.store.trainable_vars(), config.learning_rate)?;
        let multiple = model.config.backbone.multiple().max(disc_config.multiple());
        Ok(Self {
            config,
            model,
            disc,
            extractor,
            g_opt,
            d_opt,
            texts,
            cooc,
            multiple,
        })
    }

    pub fn with_extractor(mut self, extractor: Box<dyn FeatureExtractor>) -> Self {
        self.extractor = extractor;
        self
    }

    pub fn extractor(&self) -> &dyn FeatureExtractor {
        self.extractor.as_ref()
    }

    pub fn learning_rate(&self) -> f64 {
        self.g_opt.learning_rate()
    }

    pub fn set_learning_rate(&mut self, lr: f64) {
        self.g_opt.set_learning_rate(lr);
        self.d_opt.set_learning_rate(lr);
    }

    /// Side length every training image is resized to a multiple of.
    pub fn multiple(&self) -> usize {
        self.multiple
    }

    /// Picks one description per pair and a mismatched random description for each.
    fn sample_texts(
        &self,
        batch: &[&EditPair],
        rng: &mut ChaCha8Rng,
    ) -> Result<(Vec<TextDescription>, Vec<TextDescription>)> {
        let mut matching = Vec::with_capacity(batch.len());
        let mut random = Vec::with_capacity(batch.len());
        for p in batch {
            if p.descriptions.is_empty() {
                return Err(invalid("training pairs need at least one description"));
            }
            let d = self
                .model
                .tokenize(&p.descriptions[rng.gen_range(0..p.descriptions.len())])?;
            let r = sample_random_index(&d, &self.texts, &self.cooc, rng.gen())?;
            random.push(self.texts[r].clone());
            matching.push(d);
        }
        Ok((matching, random))
    }

    pub fn train_step(&mut self, batch: &[EditPair], seed: u64) -> Result<StepMetrics> {
        let refs: Vec<&EditPair> = batch.iter().collect();
        self.train_step_refs(&refs, seed)
    }

    pub(crate) fn train_step_refs(
        &mut self,
        batch: &[&EditPair],
        seed: u64,
    ) -> Result<StepMetrics> {
        if batch.is_empty() {
            return Err(invalid("training batch is empty"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (matching, random) = self.sample_texts(batch, &mut rng)?;
        let (x, y) = batch_tensors(batch, self.multiple, self.model.dtype())?;
        let model = &self.model;
        let readout = self.config.readout;
        let generate = || -> Result<Tensor> {
            let t = model.encode_texts(&matching, &[])?;
            Ok(model.forward(&x, &t, readout)?.image)
        };
        gan_step(
            &generate,
            &self.disc,
            &mut self.d_opt,
            &mut self.g_opt,
            self.extractor.as_ref(),
            self.config.weights,
            &x,
            &y,
            DiscText::Described {
                matching: &matching,
                random: &random,
            },
        )
    }

    /// Mean reconstruction loss (content plus weighted perceptual) over `pairs`, using each
    /// pair's first description. The adversarial term is left out: it depends on the
    /// discriminator, which changes every epoch, so it would not compare across epochs.
    pub fn eval_loss(&self, pairs: &[EditPair]) -> Result<f64> {
        if pairs.is_empty() {
            return Err(invalid("validation set is empty"));
        }
        let mut total = 0.0;
        for chunk in pairs.chunks(self.config.batch_size) {
            let refs: Vec<&EditPair> = chunk.iter().collect();
            let descs = chunk
                .iter()
                .map(|p| {
                    let d = p
                        .descriptions
                        .first()
                        .ok_or_else(|| invalid("validation pair has no description"))?;
                    self.model.tokenize(d)
                })
                .collect::<Result<Vec<_>>>()?;
            let (x, y) = batch_tensors(&refs, self.multiple, self.model.dtype())?;
            let t = self.model.encode_texts(&descs, &[])?;
            let g = self
                .model
                .forward(&x, &t, self.config.readout)?
                .image
                .detach();
            let content = scalar(&content_loss(&g, &y)?)?;
            let perceptual = scalar(&perceptual_loss(self.extractor.as_ref(), &g, &y)?)?;
            let loss = content + self.config.weights.perceptual * perceptual;
            total += finite("validation", loss)? * chunk.len() as f64;
        }
        Ok(total / pairs.len() as f64)
    }
}
