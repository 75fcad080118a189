use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;

use super::buckets::{assign_buckets, BucketThresholds};
use super::templates::TemplateBank;
use super::texture::procedural_texture;
use super::transform::{
    apply_transform_in, Direction, GlobalTransform, TransformKind, TransformRanges,
};
use crate::data::{DatasetManifest, EditPair, ManifestRecord, Split};
use crate::error::{invalid, Error, Result};
use crate::image::Image;
use crate::rng::derive_rng;

const STREAM_PAIR: u64 = 1;
const STREAM_SPLIT: u64 = 2;
const STREAM_TEXTURE: u64 = 3;

#[derive(Debug, Clone, PartialEq)]
pub enum ImageSource {
    /// Seeded gradient-and-blob textures, one per pair.
    Procedural,
    /// PNG or JPEG files from a directory (sorted by name), resized to the corpus size.
    Directory(PathBuf),
}

#[derive(Debug, Clone)]
pub struct CorpusOptions {
    pub n_pairs: usize,
    pub kinds: Vec<TransformKind>,
    pub height: usize,
    pub width: usize,
    pub source: ImageSource,
    pub seed: u64,
    pub ranges: TransformRanges,
    pub thresholds: BucketThresholds,
    pub templates: TemplateBank,
}

impl CorpusOptions {
    pub fn new(n_pairs: usize, kinds: Vec<TransformKind>, seed: u64) -> Self {
        Self {
            n_pairs,
            kinds,
            height: 64,
            width: 64,
            source: ImageSource::Procedural,
            seed,
            ranges: TransformRanges::default(),
            thresholds: BucketThresholds::default(),
            templates: TemplateBank::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPair {
    pub pair: EditPair,
    pub transform: GlobalTransform,
    pub split: Split,
}

/// Sidecar line describing how a pair was made.
#[derive(Serialize)]
struct TransformRecord<'a> {
    index: usize,
    transform: &'a GlobalTransform,
    direction: Option<&'static str>,
}

fn load_sources(opts: &CorpusOptions) -> Result<Option<Vec<Image>>> {
    let ImageSource::Directory(dir) = &opts.source else {
        return Ok(None);
    };
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(invalid(format!(
            "no PNG or JPEG images in {}",
            dir.display()
        )));
    }
    paths
        .iter()
        .map(|p| {
            Image::load(p)?
                .resize(opts.height, opts.width)
                .map(|i| i.quantized())
        })
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Split labels for `n` items: a seeded shuffle, then 70% train, 15% val, the rest test.
fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut derive_rng(seed, STREAM_SPLIT, 0));
    let n_train = ((n as f64) * 0.70).round() as usize;
    let n_val = (((n as f64) * 0.15).round() as usize).min(n - n_train);
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Builds pairs in memory. Pair `i` uses kind `kinds[i % K]` and alternates direction every
/// `K` pairs, so kinds and directions are balanced. Images are quantized to 8 bits.
pub fn generate_pairs(opts: &CorpusOptions) -> Result<Vec<SyntheticPair>> {
    if opts.n_pairs == 0 {
        return Err(invalid("corpus needs at least one pair"));
    }
    if opts.kinds.is_empty() {
        return Err(invalid("corpus needs at least one transform kind"));
    }
    if opts.height == 0 || opts.width == 0 {
        return Err(invalid("corpus image size must be positive"));
    }
    let sources = load_sources(opts)?;
    let splits = assign_splits(opts.n_pairs, opts.seed);
    let nk = opts.kinds.len();
    let mut out = Vec::with_capacity(opts.n_pairs);
    for (i, &split) in splits.iter().enumerate() {
        let mut rng = derive_rng(opts.seed, STREAM_PAIR, i as u64);
        let kind = opts.kinds[i % nk];
        let direction = if (i / nk).is_multiple_of(2) {
            Direction::Up
        } else {
            Direction::Down
        };
        let input = match &sources {
            Some(images) => images[rng.gen_range(0..images.len())].clone(),
            None => {
                let seed = derive_rng(opts.seed, STREAM_TEXTURE, i as u64).gen();
                procedural_texture(opts.height, opts.width, seed)?.quantized()
            }
        };
        let transform = GlobalTransform::sample(kind, direction, &opts.ranges, &mut rng)?;
        let target = apply_transform_in(&input, &transform, &opts.ranges)?.quantized();
        let n_desc = rng.gen_range(1..=2);
        let mut descriptions: Vec<String> = Vec::new();
        for _ in 0..n_desc * 4 {
            if descriptions.len() == n_desc {
                break;
            }
            let d = match kind {
                TransformKind::Identity => opts.templates.sample_identity(&mut rng)?,
                k => opts.templates.sample_edit(k, direction, &mut rng)?,
            };
            if !descriptions.contains(&d) {
                descriptions.push(d);
            }
        }
        let mut pair = EditPair::new(input, target, descriptions)?;
        pair.buckets = assign_buckets(&pair, &opts.thresholds);
        out.push(SyntheticPair {
            pair,
            transform,
            split,
        });
    }
    Ok(out)
}

/// Writes images under `out_dir/images`, the manifest to `out_dir/manifest.jsonl` and the
/// generating transforms to `out_dir/transforms.jsonl`. Output is byte-identical for a fixed seed.
pub fn generate_corpus(opts: &CorpusOptions, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    let pairs = generate_pairs(opts)?;
    let img_dir = out_dir.join("images");
    std::fs::create_dir_all(&img_dir).map_err(|e| Error::io(&img_dir, e))?;
    let mut records = Vec::with_capacity(pairs.len());
    let mut sidecar = String::new();
    for (i, sp) in pairs.iter().enumerate() {
        let input = PathBuf::from(format!("images/{i:05}_in.png"));
        let target = PathBuf::from(format!("images/{i:05}_gt.png"));
        sp.pair.input.save(out_dir.join(&input))?;
        sp.pair.target.save(out_dir.join(&target))?;
        records.push(ManifestRecord {
            input,
            target,
            descriptions: sp.pair.descriptions.clone(),
            split: sp.split,
            buckets: sp.pair.buckets.iter().copied().collect(),
            reversed: false,
        });
        sidecar.push_str(&serde_json::to_string(&TransformRecord {
            index: i,
            transform: &sp.transform,
            direction: sp.transform.direction().map(Direction::as_str),
        })?);
        sidecar.push('\n');
    }
    let manifest = DatasetManifest::new(out_dir, records);
    manifest.save(out_dir.join("manifest.jsonl"))?;
    let side = out_dir.join("transforms.jsonl");
    std::fs::write(&side, sidecar).map_err(|e| Error::io(&side, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_proportions() {
        let s = assign_splits(100, 3);
        let count = |x| s.iter().filter(|&&v| v == x).count();
        assert_eq!(
            (count(Split::Train), count(Split::Val), count(Split::Test)),
            (70, 15, 15)
        );
        assert_eq!(assign_splits(1, 0), vec![Split::Train]);
    }

    #[test]
    fn brightness_only_corpus() {
        let mut opts = CorpusOptions::new(10, vec![TransformKind::Brightness], 4);
        opts.height = 16;
        opts.width = 16;
        let pairs = generate_pairs(&opts).unwrap();
        assert_eq!(pairs.len(), 10);
        let bank = &opts.templates;
        let allowed: Vec<String> = [Direction::Up, Direction::Down]
            .iter()
            .flat_map(|&d| bank.edit_templates(TransformKind::Brightness, d).to_vec())
            .flat_map(|t| bank.expansions(&t).unwrap())
            .collect();
        for sp in &pairs {
            assert_eq!(sp.transform.kind(), TransformKind::Brightness);
            assert!(!sp.pair.descriptions.is_empty() && sp.pair.descriptions.len() <= 2);
            for d in &sp.pair.descriptions {
                assert!(allowed.contains(d), "{d}");
            }
        }
        let ups = pairs
            .iter()
            .filter(|p| p.transform.direction() == Some(Direction::Up))
            .count();
        assert_eq!(ups, 5);
    }

    #[test]
    fn empty_directory_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let mut opts = CorpusOptions::new(3, vec![TransformKind::Brightness], 0);
        opts.source = ImageSource::Directory(dir.path().to_path_buf());
        assert!(generate_pairs(&opts).is_err());
    }

    #[test]
    fn written_corpus_is_reproducible() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut opts = CorpusOptions::new(6, TransformKind::EDITS.to_vec(), 11);
        opts.height = 8;
        opts.width = 8;
        generate_corpus(&opts, a.path()).unwrap();
        generate_corpus(&opts, b.path()).unwrap();
        for f in ["manifest.jsonl", "transforms.jsonl", "images/00003_gt.png"] {
            assert_eq!(
                std::fs::read(a.path().join(f)).unwrap(),
                std::fs::read(b.path().join(f)).unwrap()
            );
        }
        let m = crate::data::load_manifest(a.path().join("manifest.jsonl")).unwrap();
        assert_eq!(m.records.len(), 6);
    }
}
