use candle_core::{DType, Tensor};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::trainer::{adam, batch_tensors, gan_step, DiscText, TrainConfig};
use crate::data::EditPair;
use crate::discriminator::{Discriminator, DiscriminatorConfig};
use crate::error::{invalid, Result};
use crate::generator::{Backbone, BackboneConfig, EditModel, GeneratorKind};
use crate::losses::load_extractor;
use crate::nn::{ParamBuilder, ParamStore};
use crate::rng::{derive_rng, derive_seed};
use crate::synth::{assign_buckets, BucketThresholds, BUCKET_NAMES};
use crate::text::TextEncoderConfig;

const STREAM_PRETRAIN: u64 = 21;

fn bucket_name(k: usize) -> String {
    match BUCKET_NAMES.get(k) {
        Some(name) => format!("bucket {k} ({name})"),
        None => format!("bucket {k}"),
    }
}

/// Splits pairs by bucket id. Pairs without stored ids are classified on the fly.
pub fn partition_by_bucket(pairs: &[EditPair], buckets: usize) -> Vec<Vec<EditPair>> {
    let th = BucketThresholds::default();
    let mut out = vec![Vec::new(); buckets];
    for p in pairs {
        let ids = if p.buckets.is_empty() {
            assign_buckets(p, &th)
        } else {
            p.buckets.clone()
        };
        for k in ids.into_iter().filter(|&k| k < buckets) {
            out[k].push(p.clone());
        }
    }
    out
}

/// Trains one encoder-decoder per partition without text, against a discriminator that
/// sees zero text vectors. Every returned store is frozen.
pub fn pretrain_buckets(
    partitions: &[Vec<EditPair>],
    backbone: &BackboneConfig,
    config: &TrainConfig,
    dtype: DType,
) -> Result<Vec<ParamStore>> {
    config.validate()?;
    if partitions.is_empty() {
        return Err(invalid("bucket pretraining needs at least one partition"));
    }
    if let Some(k) = partitions.iter().position(Vec::is_empty) {
        return Err(invalid(format!("{} has no training pairs", bucket_name(k))));
    }
    let epochs = config.pretrain_epochs.unwrap_or(config.epochs);
    let extractor = load_extractor(config.perceptual_weights.as_deref(), dtype);
    let disc_config = DiscriminatorConfig {
        widths: config.disc_widths.clone(),
        text_after: config.disc_text_after,
        // Text is always zero here; a minimal encoder keeps the shapes consistent.
        text: TextEncoderConfig {
            vocab_size: 2,
            embed_dim: 1,
            hidden: 1,
            kind: Default::default(),
        },
    };
    let multiple = backbone.multiple().max(disc_config.multiple());
    let mut stores = Vec::with_capacity(partitions.len());
    for (k, part) in partitions.iter().enumerate() {
        let seed = derive_seed(config.seed, STREAM_PRETRAIN, k as u64);
        let mut store = ParamStore::new(dtype);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let net = Backbone::new(&mut ParamBuilder::new(&mut store, &mut rng), backbone)?;
        let disc = Discriminator::new(&disc_config, dtype, seed ^ 0xD15C)?;
        let mut g_opt = adam(store.trainable_vars(), config.learning_rate)?;
        let mut d_opt = adam(disc.store.trainable_vars(), config.learning_rate)?;
        for epoch in 0..epochs {
            let mut order: Vec<usize> = (0..part.len()).collect();
            order.shuffle(&mut derive_rng(seed, STREAM_PRETRAIN, epoch as u64));
            for chunk in order.chunks(config.batch_size) {
                let batch: Vec<&EditPair> = chunk.iter().map(|&i| &part[i]).collect();
                let (x, y) = batch_tensors(&batch, multiple, dtype)?;
                let generate = || -> Result<Tensor> { net.forward(&x) };
                let m = gan_step(
                    &generate,
                    &disc,
                    &mut d_opt,
                    &mut g_opt,
                    extractor.as_ref(),
                    config.weights,
                    &x,
                    &y,
                    DiscText::Zero,
                )?;
                log::debug!(
                    "{} epoch {} g_loss {:.5}",
                    bucket_name(k),
                    epoch + 1,
                    m.g_loss
                );
            }
        }
        store.set_frozen_prefix("", true);
        stores.push(store);
    }
    Ok(stores)
}

/// Copies pretrained backbones into a bucket model in place and freezes them.
pub fn install_buckets(model: &mut EditModel, backbones: &[ParamStore]) -> Result<()> {
    if model.kind() != GeneratorKind::Bucket {
        return Err(invalid("only bucket models hold pretrained backbones"));
    }
    if backbones.len() != model.branches() {
        return Err(invalid(format!(
            "{} pretrained backbones for a model with {} buckets",
            backbones.len(),
            model.branches()
        )));
    }
    for (k, store) in backbones.iter().enumerate() {
        for (name, var, _) in store.iter() {
            model
                .store
                .set(&format!("bucket.{k}.{name}"), var.as_tensor())?;
        }
        model.store.set_frozen_prefix(&format!("bucket.{k}."), true);
    }
    Ok(())
}

/// True when every bucket backbone parameter is frozen.
pub fn buckets_frozen(model: &EditModel) -> bool {
    model.kind() == GeneratorKind::Bucket
        && model
            .store
            .names()
            .filter(|n| n.starts_with("bucket."))
            .all(|n| model.store.is_frozen(n))
}
