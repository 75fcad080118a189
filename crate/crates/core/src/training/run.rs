use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::augment::augment_identity;
use super::pretrain::{buckets_frozen, install_buckets, partition_by_bucket, pretrain_buckets};
use super::schedule::PlateauSchedule;
use super::trainer::{TrainConfig, Trainer};
use crate::checkpoint::{save_checkpoint, CheckpointMeta};
use crate::data::{DatasetManifest, EditPair, Split};
use crate::error::{invalid, Error, Result};
use crate::generator::{EditModel, GeneratorKind};
use crate::rng::{derive_rng, derive_seed};
use crate::synth::TemplateBank;

const STREAM_EPOCH: u64 = 31;
const STREAM_STEP: u64 = 32;

pub const CHECKPOINT_FILE: &str = "best.ckpt";
pub const HISTORY_FILE: &str = "history.csv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub epoch: usize,
    pub lr: f64,
    pub train_d_loss: f64,
    pub train_g_loss: f64,
    pub val_g_loss: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct TrainData {
    pub train: Vec<EditPair>,
    pub val: Vec<EditPair>,
}

impl TrainData {
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        Ok(Self {
            train: manifest.load_split(Split::Train)?,
            val: manifest.load_split(Split::Val)?,
        })
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: PathBuf,
    pub history_path: PathBuf,
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    /// Model state after the last epoch; the checkpoint holds the best epoch.
    pub model: EditModel,
}

pub fn write_history(rows: &[HistoryRow], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    for r in rows {
        w.serialize(r)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_history(path: impl AsRef<Path>) -> Result<Vec<HistoryRow>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .map(|row| row.map_err(|e| Error::Format(format!("{}: {e}", path.display()))))
        .collect()
}

/// Full training run: identity augmentation, bucket pretraining when needed, the epoch loop
/// with plateau halving, best-validation checkpointing and the history CSV in `out_dir`.
pub fn run_training(
    config: &TrainConfig,
    mut model: EditModel,
    data: &TrainData,
    out_dir: impl AsRef<Path>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.train.is_empty() || data.val.is_empty() {
        return Err(invalid(format!(
            "training needs non-empty train and val splits (got {} and {})",
            data.train.len(),
            data.val.len()
        )));
    }
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let templates = TemplateBank::default();
    let train = augment_identity(
        &data.train,
        config.identity_fraction,
        &templates,
        config.seed,
    )?;

    if model.kind() == GeneratorKind::Bucket && !buckets_frozen(&model) {
        log::info!("pretraining {} bucket backbones", model.branches());
        let parts = partition_by_bucket(&data.train, model.branches());
        let stores = pretrain_buckets(&parts, &model.config.backbone, config, model.dtype())?;
        install_buckets(&mut model, &stores)?;
    }

    let mut trainer = Trainer::new(config.clone(), model, &train)?;
    let mut schedule =
        PlateauSchedule::new(config.learning_rate, config.lr_patience, config.lr_floor);
    let checkpoint = out_dir.join(CHECKPOINT_FILE);
    let history_path = out_dir.join(HISTORY_FILE);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best_epoch = 0;
    let start = Instant::now();
    for epoch in 1..=config.epochs {
        let lr = schedule.lr();
        trainer.set_learning_rate(lr);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut derive_rng(config.seed, STREAM_EPOCH, epoch as u64));
        let (mut d_sum, mut g_sum, mut count) = (0.0, 0.0, 0usize);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&EditPair> = chunk.iter().map(|&i| &train[i]).collect();
            let seed = derive_seed(config.seed, STREAM_STEP, ((epoch as u64) << 32) | b as u64);
            let m = trainer.train_step_refs(&batch, seed)?;
            d_sum += m.d_loss * batch.len() as f64;
            g_sum += m.g_loss * batch.len() as f64;
            count += batch.len();
        }
        let val = trainer.eval_loss(&data.val)?;
        let row = HistoryRow {
            epoch,
            lr,
            train_d_loss: d_sum / count as f64,
            train_g_loss: g_sum / count as f64,
            val_g_loss: val,
            wall_seconds: if config.deterministic {
                0.0
            } else {
                start.elapsed().as_secs_f64()
            },
        };
        log::info!(
            "epoch {epoch}/{} lr {lr:.2e} d {:.4} g {:.4} val {val:.4}",
            config.epochs,
            row.train_d_loss,
            row.train_g_loss
        );
        if schedule.observe(val) {
            best_epoch = epoch;
            let meta = CheckpointMeta {
                epoch,
                learning_rate: lr,
                val_loss: Some(val),
                extra: [("seed".to_string(), config.seed.to_string())].into(),
            };
            save_checkpoint(&trainer.model, &meta, &checkpoint)?;
        }
        history.push(row);
        write_history(&history, &history_path)?;
    }
    Ok(TrainOutcome {
        checkpoint,
        history_path,
        history,
        best_epoch,
        model: trainer.model,
    })
}
